//! Forward state and backward adjoint sweeps through encoder and decoder.
//!
//! Layer `j` of a stage maps state `Y_j` to `Y_{j+1}` with right-hand side
//! `σ(K_j Y_j + b_j)`. The adjoint sweep runs the same layers backwards with
//! right-hand side `K_jᵀ(P_{j+1} ⊙ σ′(K_j Y_• + b_j))`, where `Y_•` is `Y_j`
//! for [`AdjointIndexing::Consistent`] and `Y_{j+1}` for
//! [`AdjointIndexing::Verbatim`].

use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::params::LayerParams;
use super::{AdjointIndexing, ModelOptions};
use crate::dynamics::{integrate, StepCaps, StepRecord, TruncationBudget};
use crate::error::{Error, Result};
use crate::tt::{tt_from_dense, tt_to_dense, DenseTensor3, RoundingRequest, TtTensor};

/// States of one sweep in natural index order plus per-step diagnostics.
///
/// For forward sweeps `states[i] = Y_i` and `records[i]` describes the step
/// producing `Y_{i+1}`. For adjoint sweeps `states[i] = P_i` and `records[i]`
/// describes the step producing `P_i` from `P_{i+1}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Propagation {
    pub states: Vec<TtTensor>,
    pub records: Vec<StepRecord>,
}

impl Propagation {
    pub fn ranks(&self) -> Vec<usize> {
        self.states.iter().map(TtTensor::max_rank).collect()
    }

    pub fn violations(&self) -> usize {
        self.records.iter().filter(|r| !r.bound_satisfied).count()
    }

    pub fn first(&self) -> &TtTensor {
        &self.states[0]
    }

    pub fn last(&self) -> &TtTensor {
        self.states.last().expect("a sweep holds at least one state")
    }
}

/// Dense pre-activation `K·Y + b`.
pub(crate) fn preactivation(p: &LayerParams, y: &DenseTensor3) -> Result<DenseTensor3> {
    let mut z = y.mode1_product(&p.k)?;
    z.as_mut_slice().iter_mut().for_each(|v| *v += p.b);
    Ok(z)
}

pub(crate) fn layer_rhs_dense(p: &LayerParams, y: &DenseTensor3, act: Activation) -> Result<DenseTensor3> {
    Ok(act.apply(&preactivation(p, y)?))
}

/// `σ(K·Y + b)` recompressed at `req`.
pub fn layer_rhs(p: &LayerParams, state: &TtTensor, act: Activation, req: RoundingRequest) -> Result<TtTensor> {
    if p.n_fr() != state.dims()[0] {
        return Err(Error::shape(format!(
            "layer weight side {} does not match state rows {}",
            p.n_fr(),
            state.dims()[0]
        )));
    }
    tt_from_dense(&layer_rhs_dense(p, &tt_to_dense(state), act)?, req)
}

/// `K_jᵀ(P ⊙ σ′(K_j Y + b_j))` on dense data.
pub(crate) fn adjoint_rhs_dense(
    p: &LayerParams,
    adjoint: &DenseTensor3,
    y: &DenseTensor3,
    act: Activation,
) -> Result<DenseTensor3> {
    let slope = act.apply_prime(&preactivation(p, y)?);
    adjoint.zip_map(&slope, |a, s| a * s)?.mode1_product(&p.k.transpose())
}

fn check_caps(caps: &[usize], layers: usize, what: &str) -> Result<()> {
    if caps.len() != layers + 1 {
        return Err(Error::invalid(format!(
            "{what}: {} rank caps for {layers} layers (expected {})",
            caps.len(),
            layers + 1
        )));
    }
    if caps.contains(&0) {
        return Err(Error::invalid(format!("{what}: rank caps must be >= 1")));
    }
    Ok(())
}

/// Integrates `layers` forward from `start`. `caps[i]` bounds the rank of
/// state `i` (and of the increment producing it); `caps[0]` is unused.
pub fn forward_layers(
    start: TtTensor,
    layers: &[LayerParams],
    act: Activation,
    budget: &TruncationBudget,
    caps: &[usize],
    opts: &ModelOptions,
) -> Result<Propagation> {
    check_caps(caps, layers.len(), "forward sweep")?;
    let step_caps: Vec<StepCaps> = caps[1..].iter().map(|&c| StepCaps::uniform(c)).collect();
    let traj = integrate(
        start,
        |j, y| layer_rhs_dense(&layers[j], &tt_to_dense(y), act),
        budget,
        &step_caps,
        opts.policy,
    )?;
    Ok(Propagation {
        states: traj.states,
        records: traj.records,
    })
}

/// Integrates the adjoint backwards from `terminal = P_L` over `layers`,
/// given the forward states `Y_0..Y_L`. `caps[i]` bounds the rank of `P_i`;
/// `caps[L]` is unused.
pub fn backward_layers(
    terminal: TtTensor,
    forward: &[TtTensor],
    layers: &[LayerParams],
    act: Activation,
    budget: &TruncationBudget,
    caps: &[usize],
    opts: &ModelOptions,
) -> Result<Propagation> {
    let l = layers.len();
    check_caps(caps, l, "adjoint sweep")?;
    if forward.len() != l + 1 {
        return Err(Error::invalid(format!(
            "adjoint sweep needs {} forward states, got {}",
            l + 1,
            forward.len()
        )));
    }
    let step_caps: Vec<StepCaps> = (0..l).rev().map(|j| StepCaps::uniform(caps[j])).collect();
    let traj = integrate(
        terminal,
        |step, p| {
            let j = l - 1 - step;
            let y = match opts.adjoint_indexing {
                AdjointIndexing::Consistent => &forward[j],
                AdjointIndexing::Verbatim => &forward[j + 1],
            };
            adjoint_rhs_dense(&layers[j], &tt_to_dense(p), &tt_to_dense(y), act)
        },
        budget,
        &step_caps,
        opts.policy,
    )?;
    let mut states = traj.states;
    let mut records = traj.records;
    states.reverse();
    records.reverse();
    Ok(Propagation { states, records })
}

/// Encoder forward sweep `f_0 → f_{N_e}` with rank caps `r_e` (length
/// `N_e + 1`). Training passes `rank(f_0)` everywhere.
pub fn forward_encoder(
    f0: TtTensor,
    encoder: &[LayerParams],
    opts: &ModelOptions,
    r_e: &[usize],
) -> Result<Propagation> {
    forward_layers(f0, encoder, opts.hidden, &opts.budget, r_e, opts)
}

/// Decoder forward sweep `g_{N_e} → g_N` with caps `r_d = flip(r^{fe})`.
pub fn forward_decoder(
    g_start: TtTensor,
    decoder: &[LayerParams],
    opts: &ModelOptions,
    r_d: &[usize],
) -> Result<Propagation> {
    forward_layers(g_start, decoder, opts.hidden, &opts.budget, r_d, opts)
}

/// Decoder adjoint sweep `P̃_N → P̃_{N_e}`; states are indexed from `N_e`.
pub fn backward_decoder(
    terminal: TtTensor,
    g: &Propagation,
    decoder: &[LayerParams],
    opts: &ModelOptions,
    r_d: &[usize],
) -> Result<Propagation> {
    backward_layers(terminal, &g.states, decoder, opts.hidden, &opts.budget, r_d, opts)
}

/// Encoder adjoint sweep `P_{N_e} = P̃_{N_e} → P_0`.
pub fn backward_encoder(
    handoff: TtTensor,
    f: &Propagation,
    encoder: &[LayerParams],
    opts: &ModelOptions,
    r_e: &[usize],
) -> Result<Propagation> {
    backward_layers(handoff, &f.states, encoder, opts.hidden, &opts.budget, r_e, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TruncationBudget;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(dims: [usize; 3], rng: &mut ChaCha8Rng) -> DenseTensor3 {
        DenseTensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn random_layer(n: usize, rng: &mut ChaCha8Rng) -> LayerParams {
        LayerParams {
            k: DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5)),
            b: rng.random_range(-0.5..0.5),
        }
    }

    fn exact(t: &DenseTensor3) -> TtTensor {
        tt_from_dense(t, RoundingRequest::exact()).unwrap()
    }

    fn lossless_opts() -> ModelOptions {
        ModelOptions {
            budget: TruncationBudget::lossless(0.25),
            ..ModelOptions::default()
        }
    }

    #[test]
    fn layer_rhs_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_dense([4, 3, 2], &mut rng);
        let zero = layer_rhs(
            &LayerParams::zeros(4),
            &exact(&y),
            Activation::Tanh,
            RoundingRequest::exact(),
        )
        .unwrap();
        assert_eq!(tt_to_dense(&zero).norm(), 0.0);

        let small = y.scale(0.01);
        let id = LayerParams {
            k: DMatrix::identity(4, 4),
            b: 0.0,
        };
        let out = tt_to_dense(&layer_rhs(&id, &exact(&small), Activation::Tanh, RoundingRequest::exact()).unwrap());
        let cube: f64 = small.as_slice().iter().map(|x| x.abs().powi(3)).sum::<f64>();
        assert!(out.sub(&small).unwrap().norm() <= cube);

        let p = random_layer(4, &mut rng);
        let got = tt_to_dense(&layer_rhs(&p, &exact(&y), Activation::Tanh, RoundingRequest::exact()).unwrap());
        let want = DenseTensor3::from_fn([4, 3, 2], |i, j, k| {
            ((0..4).map(|q| p.k[(i, q)] * y.get(q, j, k)).sum::<f64>() + p.b).tanh()
        })
        .unwrap();
        assert!(want.sub(&got).unwrap().norm() < 1e-10);
        assert!(layer_rhs(
            &LayerParams::zeros(3),
            &exact(&y),
            Activation::Tanh,
            RoundingRequest::exact()
        )
        .is_err());
    }

    #[test]
    fn forward_matches_dense_euler() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f0 = random_dense([8, 8, 4], &mut rng);
        let layers: Vec<_> = (0..3).map(|_| random_layer(8, &mut rng)).collect();
        let opts = ModelOptions {
            budget: TruncationBudget::decoupled(0.5).unwrap(),
            ..ModelOptions::default()
        };
        let tt0 = exact(&f0);
        let cap = tt0.max_rank();
        let prop = forward_encoder(tt0, &layers, &opts, &[cap; 4]).unwrap();

        let mut y = f0.clone();
        for p in &layers {
            y = y
                .add(&layer_rhs_dense(p, &y, Activation::Tanh).unwrap().scale(0.5))
                .unwrap();
        }
        // Each step adds at most (M_s + M_r)τ² and every later step amplifies
        // earlier errors by at most 1 + τ‖K‖.
        let b = opts.budget;
        let lip: f64 = layers.iter().map(|p| 1.0 + b.tau * p.k.norm()).product();
        let bound = layers.len() as f64 * (b.m_s + b.m_r) * b.tau * b.tau * lip;
        let err = y.sub(&tt_to_dense(prop.last())).unwrap().norm();
        assert!(err <= bound, "{err} > {bound}");
        assert!(prop.ranks().iter().all(|&r| r <= cap));
    }

    #[test]
    fn zero_layers_freeze_state_and_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y0 = exact(&random_dense([5, 4, 3], &mut rng));
        let layers = vec![LayerParams::zeros(5); 3];
        let opts = ModelOptions::default();
        let cap = y0.max_rank();
        let f = forward_encoder(y0.clone(), &layers, &opts, &[cap; 4]).unwrap();
        assert!(f.states.iter().all(|s| *s == y0));

        let p_end = exact(&random_dense([5, 4, 3], &mut rng));
        let back = backward_encoder(p_end.clone(), &f, &layers, &opts, &[cap; 4]).unwrap();
        assert!(back.states.iter().all(|s| *s == p_end));

        let zero = TtTensor::zeros([5, 4, 3]).unwrap();
        let layers: Vec<_> = (0..3).map(|_| random_layer(5, &mut rng)).collect();
        let back = backward_encoder(zero, &f, &layers, &opts, &[cap; 4]).unwrap();
        assert!(back.states.iter().all(|s| tt_to_dense(s).norm() == 0.0));
    }

    #[test]
    fn adjoint_matches_dense_reverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y0 = random_dense([6, 5, 3], &mut rng);
        let layers: Vec<_> = (0..2).map(|_| random_layer(6, &mut rng)).collect();
        let opts = lossless_opts();
        let f = forward_encoder(exact(&y0), &layers, &opts, &[usize::MAX; 3]).unwrap();
        let terminal = random_dense([6, 5, 3], &mut rng);
        let back = backward_encoder(exact(&terminal), &f, &layers, &opts, &[usize::MAX; 3]).unwrap();

        let dense_f: Vec<_> = f.states.iter().map(tt_to_dense).collect();
        let mut p = terminal;
        for j in (0..2).rev() {
            let slope = layers[j]
                .k
                .clone()
                .pipe_preact(&dense_f[j], layers[j].b)
                .map(|x| 1.0 - x.tanh().powi(2));
            let a = p.zip_map(&slope, |x, s| x * s).unwrap();
            p = p
                .add(&a.mode1_product(&layers[j].k.transpose()).unwrap().scale(0.25))
                .unwrap();
            assert!(p.sub(&tt_to_dense(&back.states[j])).unwrap().norm() < 1e-10);
        }
    }

    /// Independent pre-activation for the adjoint oracle: explicit triple loop.
    trait PipePreact {
        fn pipe_preact(self, y: &DenseTensor3, b: f64) -> DenseTensor3;
    }

    impl PipePreact for DMatrix<f64> {
        fn pipe_preact(self, y: &DenseTensor3, b: f64) -> DenseTensor3 {
            let [n1, n2, n3] = y.dims();
            DenseTensor3::from_fn([n1, n2, n3], |i, j, k| {
                (0..n1).map(|q| self[(i, q)] * y.get(q, j, k)).sum::<f64>() + b
            })
            .unwrap()
        }
    }

    #[test]
    fn cap_length_checked() {
        let y0 = TtTensor::ones([3, 3, 2]).unwrap();
        let layers = vec![LayerParams::zeros(3); 2];
        assert!(forward_encoder(y0, &layers, &ModelOptions::default(), &[1, 1]).is_err());
    }
}

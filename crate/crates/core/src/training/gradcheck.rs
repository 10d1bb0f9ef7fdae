//! Finite-difference check of the adjoint gradients.
//!
//! The analytic side is the TT adjoint gradient with truncation switched
//! off. The reference side evaluates the dense forward map in double-double
//! arithmetic, so differences stay clean down to `h = 1e-6`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::dd::Dd;
use super::run::stream_rng;
use crate::autoencoder::{
    evaluate, Activation, AdjointScale, LayerParams, LossMeasure, ModelOptions, NetworkParams, RegWeights,
};
use crate::data::{stack, vertical_streaks};
use crate::dynamics::TruncationBudget;
use crate::error::{Error, Result};
use crate::tt::DenseTensor3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradGroup {
    EncoderWeights,
    EncoderBiases,
    DecoderWeights,
    DecoderBiases,
    Terminal,
}

impl GradGroup {
    pub const ALL: [GradGroup; 5] = [
        GradGroup::EncoderWeights,
        GradGroup::EncoderBiases,
        GradGroup::DecoderWeights,
        GradGroup::DecoderBiases,
        GradGroup::Terminal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GradGroup::EncoderWeights => "K",
            GradGroup::EncoderBiases => "b",
            GradGroup::DecoderWeights => "K_tilde",
            GradGroup::DecoderBiases => "b_tilde",
            GradGroup::Terminal => "grad_g_J",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    /// Image rows, columns and sample count.
    pub dims: [usize; 3],
    pub n_layers: usize,
    pub final_time: f64,
    /// Weights and biases are drawn uniformly from `±param_scale`.
    pub param_scale: f64,
    /// Standard deviation of the noise added to the clean streaks.
    pub noise_sigma: f64,
    pub relu_delta: f64,
    pub reg: RegWeights,
    pub steps: Vec<f64>,
    pub forward_band: (f64, f64),
    pub central_band: (f64, f64),
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            dims: [6, 6, 3],
            n_layers: 4,
            final_time: 2.0,
            param_scale: 0.5,
            noise_sigma: 0.05,
            relu_delta: 0.1,
            reg: RegWeights::new(1e-2, 1e-2, 1e-1, 1e-1).expect("valid weights"),
            steps: (1..=6).map(|e| 10f64.powi(-e)).collect(),
            forward_band: (0.8, 1.2),
            central_band: (1.8, 2.2),
            seed: 0,
        }
    }
}

impl GradcheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::invalid("gradcheck dims must be >= 1"));
        }
        if self.n_layers < 2 || self.n_layers % 2 != 0 {
            return Err(Error::invalid(format!(
                "n_layers must be even and >= 2, got {}",
                self.n_layers
            )));
        }
        if !(self.final_time > 0.0 && self.param_scale >= 0.0 && self.noise_sigma >= 0.0 && self.relu_delta > 0.0) {
            return Err(Error::invalid(
                "final_time and relu_delta must be positive, scales non-negative",
            ));
        }
        if self.steps.len() < 2 || self.steps.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::invalid("need at least two positive steps"));
        }
        for (lo, hi) in [self.forward_band, self.central_band] {
            if !(lo <= hi) {
                return Err(Error::invalid(format!("slope band [{lo}, {hi}] is empty")));
            }
        }
        self.reg.validate()
    }

    pub fn tau(&self) -> f64 {
        self.final_time / self.n_layers as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckRow {
    pub variable: GradGroup,
    pub h: f64,
    pub err_fwd: f64,
    pub err_central: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSlopes {
    pub variable: GradGroup,
    /// Directional derivative `∇·d` from the adjoint.
    pub analytic: f64,
    /// Least-squares log-log slopes; `None` when fewer than two errors are
    /// above the rounding floor of `analytic` (the difference quotient is
    /// exact, which passes trivially).
    pub forward_slope: Option<f64>,
    pub central_slope: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub rows: Vec<GradcheckRow>,
    pub slopes: Vec<GroupSlopes>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.slopes.iter().all(|s| s.passed)
    }
}

/// Slope of the least-squares line through `(log h, log err)`, skipping
/// zero errors.
pub fn loglog_slope(hs: &[f64], errs: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errs)
        .filter(|(_, e)| **e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

fn in_band(slope: Option<f64>, band: (f64, f64)) -> bool {
    slope.is_none_or(|s| s >= band.0 && s <= band.1)
}

struct DdLayer {
    /// Column-major `n × n`.
    k: Vec<Dd>,
    b: Dd,
}

fn dd_layers(layers: &[LayerParams]) -> Vec<DdLayer> {
    layers
        .iter()
        .map(|l| DdLayer {
            k: l.k.iter().map(|&v| Dd::from(v)).collect(),
            b: Dd::from(l.b),
        })
        .collect()
}

fn dd_smooth_relu(x: Dd, delta: Dd) -> Dd {
    if x.hi() <= 0.0 {
        Dd::ZERO
    } else if x.hi() < delta.hi() {
        x * x / (delta + delta)
    } else {
        x - delta / Dd::from(2.0)
    }
}

/// Euler steps `Y ← Y + τ·tanh(K·Y + b)` on an `n × m` mode-1 unfolding.
fn dd_sweep(y: &mut [Dd], n: usize, layers: &[DdLayer], tau: Dd) {
    let m = y.len() / n;
    let mut next = vec![Dd::ZERO; y.len()];
    for l in layers {
        for c in 0..m {
            let col = &y[c * n..(c + 1) * n];
            for i in 0..n {
                let z: Dd = (0..n).map(|p| l.k[i + n * p] * col[p]).sum::<Dd>() + l.b;
                next[c * n + i] = col[i] + tau * z.tanh();
            }
        }
        y.copy_from_slice(&next);
    }
}

struct DdProblem<'a> {
    x_hat: &'a DenseTensor3,
    x: &'a DenseTensor3,
    reg: RegWeights,
    tau: Dd,
    delta: Dd,
    /// Quadrature weight over `2n`.
    loss_scale: Dd,
}

impl DdProblem<'_> {
    fn fidelity(&self, g: &[Dd]) -> Dd {
        g.iter()
            .zip(self.x.as_slice())
            .map(|(&gv, &t)| {
                let r = dd_smooth_relu(gv, self.delta) - Dd::from(t);
                r * r
            })
            .sum::<Dd>()
            * self.loss_scale
    }

    fn regularizer(&self, enc: &[DdLayer], dec: &[DdLayer]) -> Dd {
        let sq = |ls: &[DdLayer]| -> (Dd, Dd) {
            ls.iter().fold((Dd::ZERO, Dd::ZERO), |(k, b), l| {
                (k + l.k.iter().map(|&v| v * v).sum::<Dd>(), b + l.b * l.b)
            })
        };
        let (ek, eb) = sq(enc);
        let (dk, db) = sq(dec);
        let ne = Dd::from(2.0 * enc.len() as f64);
        let nd = Dd::from(2.0 * dec.len() as f64);
        let w = &self.reg;
        Dd::from(w.lambda1) / ne * ek
            + Dd::from(w.lambda2) / nd * dk
            + Dd::from(w.lambda3) / ne * eb
            + Dd::from(w.lambda4) / nd * db
    }

    fn alpha(&self, enc: &[DdLayer], dec: &[DdLayer]) -> Dd {
        let n = self.x_hat.dims()[0];
        let mut y: Vec<Dd> = self.x_hat.as_slice().iter().map(|&v| Dd::from(v)).collect();
        dd_sweep(&mut y, n, enc, self.tau);
        dd_sweep(&mut y, n, dec, self.tau);
        self.fidelity(&y) + self.regularizer(enc, dec)
    }
}

fn unit_direction(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn perturb(base: &[DdLayer], dir: &[f64], h: Dd, weights: bool) -> Vec<DdLayer> {
    let n2 = base.first().map_or(0, |l| l.k.len());
    base.iter()
        .enumerate()
        .map(|(j, l)| {
            if weights {
                DdLayer {
                    k: l.k
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| v + h * Dd::from(dir[j * n2 + i]))
                        .collect(),
                    b: l.b,
                }
            } else {
                DdLayer {
                    k: l.k.clone(),
                    b: l.b + h * Dd::from(dir[j]),
                }
            }
        })
        .collect()
}

fn dot_dd(a: impl Iterator<Item = f64>, b: &[f64]) -> f64 {
    a.zip(b).map(|(x, &y)| Dd::prod(x, y)).sum::<Dd>().to_f64()
}

/// Streak targets, noisy inputs and uniform parameters for `cfg`.
pub fn gradcheck_instance(cfg: &GradcheckConfig) -> Result<(DenseTensor3, DenseTensor3, NetworkParams)> {
    cfg.validate()?;
    let [rows, cols, n] = cfg.dims;
    let clean = stack(&vertical_streaks(n, rows, cols, cfg.seed)?)?;
    let mut rng = stream_rng(cfg.seed, 1);
    let noise: Vec<f64> = (0..clean.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            cfg.noise_sigma * z
        })
        .collect();
    let x_hat = DenseTensor3::from_vec(
        clean.dims(),
        clean.as_slice().iter().zip(&noise).map(|(a, b)| a + b).collect(),
    )?;
    let a = cfg.param_scale;
    let unif = Uniform::new_inclusive(-a, a).map_err(|e| Error::invalid(e.to_string()))?;
    let mut layer = || LayerParams {
        k: nalgebra::DMatrix::from_fn(rows, rows, |_, _| unif.sample(&mut rng)),
        b: unif.sample(&mut rng),
    };
    let half = cfg.n_layers / 2;
    let encoder = (0..half).map(|_| layer()).collect();
    let decoder = (0..half).map(|_| layer()).collect();
    Ok((x_hat, clean, NetworkParams::new(encoder, decoder)?))
}

/// Compares the adjoint gradient of `α` (and `∇_g J`) against one-sided and
/// central differences along a random unit direction per group.
pub fn gradient_check(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let (x_hat, x, params) = gradcheck_instance(cfg)?;
    let opts = ModelOptions {
        budget: TruncationBudget::lossless(cfg.tau()),
        output: Activation::SmoothRelu { delta: cfg.relu_delta },
        measure: LossMeasure::Area,
        adjoint_scale: AdjointScale::Lossless,
        rank_cap: Some(usize::MAX),
        ..ModelOptions::default()
    };
    let ev = evaluate(&x_hat, &x, &params, &cfg.reg, &opts)?;
    let g_n = ev.forward.output();

    let problem = DdProblem {
        x_hat: &x_hat,
        x: &x,
        reg: cfg.reg,
        tau: Dd::from(cfg.tau()),
        delta: Dd::from(cfg.relu_delta),
        loss_scale: Dd::from(opts.measure.weight(x.dims())) / Dd::from(2.0 * x.dims()[2] as f64),
    };
    let enc = dd_layers(&params.encoder);
    let dec = dd_layers(&params.decoder);
    let g_dd: Vec<Dd> = g_n.as_slice().iter().map(|&v| Dd::from(v)).collect();
    let base_alpha = problem.alpha(&enc, &dec);
    let base_fid = problem.fidelity(&g_dd);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for group in GradGroup::ALL {
        let (dir, analytic) = match group {
            GradGroup::EncoderWeights | GradGroup::DecoderWeights => {
                let layers = if group == GradGroup::EncoderWeights {
                    &ev.gradient.encoder
                } else {
                    &ev.gradient.decoder
                };
                let d = unit_direction(layers.iter().map(|l| l.k.len()).sum(), &mut rng);
                (d.clone(), dot_dd(layers.iter().flat_map(|l| l.k.iter().copied()), &d))
            }
            GradGroup::EncoderBiases | GradGroup::DecoderBiases => {
                let layers = if group == GradGroup::EncoderBiases {
                    &ev.gradient.encoder
                } else {
                    &ev.gradient.decoder
                };
                let d = unit_direction(layers.len(), &mut rng);
                (d.clone(), dot_dd(layers.iter().map(|l| l.b), &d))
            }
            GradGroup::Terminal => {
                // The terminal adjoint is −∇_g J.
                let d = unit_direction(g_n.len(), &mut rng);
                (d.clone(), -dot_dd(ev.terminal.as_slice().iter().copied(), &d))
            }
        };
        let value = |h: Dd| -> Dd {
            match group {
                GradGroup::EncoderWeights => problem.alpha(&perturb(&enc, &dir, h, true), &dec),
                GradGroup::EncoderBiases => problem.alpha(&perturb(&enc, &dir, h, false), &dec),
                GradGroup::DecoderWeights => problem.alpha(&enc, &perturb(&dec, &dir, h, true)),
                GradGroup::DecoderBiases => problem.alpha(&enc, &perturb(&dec, &dir, h, false)),
                GradGroup::Terminal => {
                    let g: Vec<Dd> = g_dd.iter().zip(&dir).map(|(&v, &d)| v + h * Dd::from(d)).collect();
                    problem.fidelity(&g)
                }
            }
        };
        let base = if group == GradGroup::Terminal {
            base_fid
        } else {
            base_alpha
        };
        let an = Dd::from(analytic);
        let mut fwd_errs = Vec::with_capacity(cfg.steps.len());
        let mut cen_errs = Vec::with_capacity(cfg.steps.len());
        for &h in &cfg.steps {
            let hd = Dd::from(h);
            let plus = value(hd);
            let minus = value(-hd);
            let err_fwd = ((plus - base) / hd - an).abs().to_f64();
            let err_central = ((plus - minus) / (hd + hd) - an).abs().to_f64();
            fwd_errs.push(err_fwd);
            cen_errs.push(err_central);
            rows.push(GradcheckRow {
                variable: group,
                h,
                err_fwd,
                err_central,
            });
        }
        // Errors within the rounding of the analytic value carry no order
        // information and count as exact.
        let floor = 64.0 * f64::EPSILON * analytic.abs();
        let resolved = |errs: &[f64]| -> Vec<f64> { errs.iter().map(|&e| if e <= floor { 0.0 } else { e }).collect() };
        let forward_slope = loglog_slope(&cfg.steps, &resolved(&fwd_errs));
        let central_slope = loglog_slope(&cfg.steps, &resolved(&cen_errs));
        slopes.push(GroupSlopes {
            variable: group,
            analytic,
            forward_slope,
            central_slope,
            passed: in_band(forward_slope, cfg.forward_band) && in_band(central_slope, cfg.central_band),
        });
    }
    Ok(GradcheckReport { rows, slopes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_laws() {
        let hs = [1e-1, 1e-2, 1e-3];
        let errs: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        assert!((loglog_slope(&hs, &errs).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&hs, &[0.0, 0.0, 1.0]), None);
        assert!(in_band(None, (1.8, 2.2)));
    }

    #[test]
    fn default_check_passes() {
        let report = gradient_check(&GradcheckConfig::default()).unwrap();
        for s in &report.slopes {
            eprintln!(
                "{:?} an {:.3e} fwd {:?} cen {:?}",
                s.variable, s.analytic, s.forward_slope, s.central_slope
            );
        }
        for r in &report.rows {
            eprintln!("{:?} {:.0e} {:.3e} {:.3e}", r.variable, r.h, r.err_fwd, r.err_central);
        }
        assert!(report.passed());
        assert_eq!(report.rows.len(), 5 * 6);
    }
}

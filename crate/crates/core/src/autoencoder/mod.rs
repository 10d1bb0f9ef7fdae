//! The continuous-time autoencoder.
//!
//! The encoder integrates `f' = σ(K f + b)` from the input `f_0 = x̂` over
//! `N_e` Euler steps; the decoder continues with `g' = σ(K̃ g + b̃)` from
//! `g_{N_e} = f_{N_e}` for `N_d = N_e` steps and the output is `σ̂(g_N)`.
//! Gradients come from the discrete adjoint, integrated backwards from
//! `P̃_N = −∇_g J` with the handoff `P_{N_e} = P̃_{N_e}`.
//!
//! Rank caps follow the input: during training every encoder state is capped
//! at `rank(f_0)` and the decoder at `flip(r^{fe})`; at test time the trained
//! `r^{fe}` is prescribed to the encoder as well. Adjoints reuse the state
//! caps of their stage.

pub mod activation;
pub mod gradient;
pub mod objective;
pub mod params;
pub mod propagate;

use serde::{Deserialize, Serialize};

pub use activation::{act_out, act_out_prime, act_tanh, act_tanh_prime, Activation};
pub use gradient::design_gradients;
pub use objective::{loss_fidelity, objective, reg_grads, regularizer, terminal_adjoint, LossMeasure};
pub use params::{flip, LayerParams, NetworkParams, RankProfile, RegWeights};
pub use propagate::{backward_decoder, backward_encoder, forward_decoder, forward_encoder, layer_rhs, Propagation};

use crate::dynamics::{BoundPolicy, TruncationBudget};
use crate::error::{Error, Result};
use crate::tt::{tt_from_dense, tt_to_dense, DenseTensor3, RoundingRequest, TtTensor};

/// Tolerance used to tensorize inputs and terminal adjoints.
pub const TENSORIZE_TOLERANCE: f64 = 1e-14;

/// Which forward state enters `σ′` in the adjoint step for layer `j`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjointIndexing {
    /// `Y_j`, the state the layer was applied to; gives the exact gradient
    /// of the discrete forward map.
    #[default]
    Consistent,
    /// `Y_{j+1}`, as written in the backward sweep of the original method.
    Verbatim,
}

/// Scale at which adjoint sweeps apply the truncation bounds `M_s τ` and
/// `M_r τ²`.
///
/// The adjoint equations are linear, so the bounds can be read against the
/// adjoint itself or against a rescaled copy. Since `P̃_N` is typically many
/// orders of magnitude smaller than the states, the literal reading
/// truncates adjoints to rank one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjointScale {
    /// Bounds apply to `P` as is.
    Absolute,
    /// Bounds apply to `c·P` with `c = ‖g_N‖/‖P̃_N‖`, so adjoints are
    /// truncated at the same relative accuracy as the output state.
    #[default]
    StateMatched,
    /// No adjoint truncation beyond the rank caps.
    Lossless,
}

/// Everything about a forward/backward solve except the weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub budget: TruncationBudget,
    /// `σ = σ̃`, the hidden-layer activation.
    pub hidden: Activation,
    /// `σ̂`, applied to `g_N` before the fidelity term.
    pub output: Activation,
    pub measure: LossMeasure,
    pub adjoint_indexing: AdjointIndexing,
    pub adjoint_scale: AdjointScale,
    pub policy: BoundPolicy,
    /// Replaces every prescribed rank cap when set (used by gradient checks
    /// that need truncation-free sweeps).
    pub rank_cap: Option<usize>,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            budget: TruncationBudget::decoupled(1.0).expect("valid budget"),
            hidden: Activation::Tanh,
            output: Activation::smooth_relu(),
            measure: LossMeasure::Area,
            adjoint_indexing: AdjointIndexing::Consistent,
            adjoint_scale: AdjointScale::StateMatched,
            policy: BoundPolicy::Record,
            rank_cap: None,
        }
    }
}

impl ModelOptions {
    fn caps(&self, caps: Vec<usize>) -> Vec<usize> {
        match self.rank_cap {
            Some(c) => vec![c; caps.len()],
            None => caps,
        }
    }
}

/// Tensorizes `x` at [`TENSORIZE_TOLERANCE`] with an optional rank cap.
pub fn tensorize(x: &DenseTensor3, max_rank: usize) -> Result<TtTensor> {
    tt_from_dense(
        x,
        RoundingRequest {
            tolerance: TENSORIZE_TOLERANCE,
            max_rank,
        },
    )
}

/// Encoder and decoder sweeps plus the caps they ran under.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForwardPass {
    pub encoder: Propagation,
    pub decoder: Propagation,
    pub encoder_caps: Vec<usize>,
    pub decoder_caps: Vec<usize>,
}

impl ForwardPass {
    pub fn output(&self) -> DenseTensor3 {
        tt_to_dense(self.decoder.last())
    }

    pub fn violations(&self) -> usize {
        self.encoder.violations() + self.decoder.violations()
    }

    /// All states `f_0..f_{N_e} = g_{N_e}..g_N`, each layer once.
    pub fn layer_states(&self) -> impl Iterator<Item = &TtTensor> {
        self.encoder.states.iter().chain(self.decoder.states.iter().skip(1))
    }
}

fn check_input(x_hat: &DenseTensor3, params: &NetworkParams) -> Result<()> {
    params.validate()?;
    if x_hat.dims()[0] != params.n_fr() {
        return Err(Error::shape(format!(
            "input has {} rows but the network expects {}",
            x_hat.dims()[0],
            params.n_fr()
        )));
    }
    Ok(())
}

/// Runs encoder and decoder. Without `prescribed` (training) every encoder
/// cap is `rank(f_0)`; with it (testing) the encoder uses `prescribed` and
/// the decoder `flip(prescribed)`.
pub fn forward(
    x_hat: &DenseTensor3,
    params: &NetworkParams,
    opts: &ModelOptions,
    prescribed: Option<&[usize]>,
) -> Result<ForwardPass> {
    check_input(x_hat, params)?;
    let ne = params.n_encoder();
    if let Some(r) = prescribed {
        if r.len() != ne + 1 {
            return Err(Error::invalid(format!(
                "{} prescribed encoder ranks for {} encoder layers",
                r.len(),
                ne
            )));
        }
    }
    let input_cap = opts.rank_cap.or(prescribed.map(|r| r[0])).unwrap_or(usize::MAX);
    let f0 = tensorize(x_hat, input_cap)?;
    let encoder_caps = opts.caps(match prescribed {
        Some(r) => r.to_vec(),
        None => vec![f0.max_rank(); ne + 1],
    });
    let encoder = forward_encoder(f0, &params.encoder, opts, &encoder_caps)?;
    let decoder_caps = opts.caps(match prescribed {
        Some(r) => flip(r),
        None => flip(&encoder.ranks()),
    });
    let decoder = forward_decoder(encoder.last().clone(), &params.decoder, opts, &decoder_caps)?;
    Ok(ForwardPass {
        encoder,
        decoder,
        encoder_caps,
        decoder_caps,
    })
}

/// `α` for a forward pass that has already been run.
pub fn pass_objective(
    pass: &ForwardPass,
    x: &DenseTensor3,
    params: &NetworkParams,
    reg: &RegWeights,
    opts: &ModelOptions,
) -> Result<f64> {
    objective(params, x, &pass.output(), reg, opts.output, opts.measure)
}

/// One full objective-and-gradient evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub alpha: f64,
    pub fidelity: f64,
    pub regularization: f64,
    pub gradient: NetworkParams,
    pub forward: ForwardPass,
    pub backward_decoder: Propagation,
    pub backward_encoder: Propagation,
    /// Untruncated `P̃_N`.
    pub terminal: DenseTensor3,
}

impl Evaluation {
    pub fn profile(&self) -> RankProfile {
        RankProfile {
            forward_encoder: self.forward.encoder.ranks(),
            forward_decoder: self.forward.decoder.ranks(),
            backward_decoder: self.backward_decoder.ranks(),
            backward_encoder: self.backward_encoder.ranks(),
        }
    }

    pub fn violations(&self) -> usize {
        self.forward.violations() + self.backward_decoder.violations() + self.backward_encoder.violations()
    }
}

/// Options for the adjoint sweeps: bounds divided by the scale factor are
/// equivalent to undivided bounds on the rescaled adjoint.
fn adjoint_options(opts: &ModelOptions, state_norm: f64, terminal_norm: f64) -> ModelOptions {
    let budget = match opts.adjoint_scale {
        AdjointScale::Absolute => opts.budget,
        AdjointScale::Lossless => TruncationBudget::lossless(opts.budget.tau),
        AdjointScale::StateMatched => {
            let c = state_norm / terminal_norm;
            if c.is_finite() && c > 0.0 {
                TruncationBudget {
                    m_s: opts.budget.m_s / c,
                    m_r: opts.budget.m_r / c,
                    ..opts.budget
                }
            } else {
                opts.budget
            }
        }
    };
    ModelOptions { budget, ..*opts }
}

/// Forward sweeps, terminal adjoint, backward sweeps and design gradients
/// for the training path.
pub fn evaluate(
    x_hat: &DenseTensor3,
    x: &DenseTensor3,
    params: &NetworkParams,
    reg: &RegWeights,
    opts: &ModelOptions,
) -> Result<Evaluation> {
    if x_hat.dims() != x.dims() {
        return Err(Error::shape(format!(
            "input dims {:?} vs target dims {:?}",
            x_hat.dims(),
            x.dims()
        )));
    }
    let fwd = forward(x_hat, params, opts, None)?;
    let g_n = fwd.output();
    let fidelity = loss_fidelity(x, &g_n, opts.output, opts.measure)?;
    let regularization = regularizer(params, reg);

    let terminal = terminal_adjoint(x, &g_n, opts.output, opts.measure)?;
    let p_tilde_n = tensorize(&terminal, *fwd.decoder_caps.last().expect("nonempty caps"))?;
    let adj_opts = adjoint_options(opts, g_n.norm(), terminal.norm());
    let bd = backward_decoder(p_tilde_n, &fwd.decoder, &params.decoder, &adj_opts, &fwd.decoder_caps)?;
    let be = backward_encoder(
        bd.first().clone(),
        &fwd.encoder,
        &params.encoder,
        &adj_opts,
        &fwd.encoder_caps,
    )?;
    let gradient = design_gradients(
        &fwd.encoder,
        &fwd.decoder,
        &be,
        &bd,
        params,
        reg,
        opts.hidden,
        opts.budget.tau,
    )?;

    Ok(Evaluation {
        alpha: fidelity + regularization,
        fidelity,
        regularization,
        gradient,
        forward: fwd,
        backward_decoder: bd,
        backward_encoder: be,
        terminal,
    })
}

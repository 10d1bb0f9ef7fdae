//! Gradients of the objective with respect to the design variables.
//!
//! For a stage with states `Y_j` and adjoints `P_j`, layer `j` contributes
//!
//! ```text
//! A_j  = P_{j+1} ⊙ σ′(K_j Y_j + b_j)          (mode-1 unfolding, n_fr × n_fc·n)
//! ∇K_j = −τ·A_j·Y_jᵀ + ∇_K R,   ∇b_j = −τ·Σ A_j + ∇_b R
//! ```
//!
//! which is the exact derivative of the discrete Euler recursion when the
//! truncations are inactive.

use nalgebra::DMatrix;

use super::activation::Activation;
use super::objective::reg_grads;
use super::params::{LayerParams, NetworkParams, RegWeights};
use super::propagate::{preactivation, Propagation};
use crate::error::{Error, Result};
use crate::tt::tt_to_dense;

fn stage_gradients(
    layers: &[LayerParams],
    states: &Propagation,
    adjoints: &Propagation,
    act: Activation,
    tau: f64,
) -> Result<Vec<LayerParams>> {
    let l = layers.len();
    if states.states.len() != l + 1 || adjoints.states.len() != l + 1 {
        return Err(Error::invalid(format!(
            "gradient needs {} states and adjoints, got {} and {}",
            l + 1,
            states.states.len(),
            adjoints.states.len()
        )));
    }
    let mut out = Vec::with_capacity(l);
    for (j, p) in layers.iter().enumerate() {
        let y = tt_to_dense(&states.states[j]);
        let adj = tt_to_dense(&adjoints.states[j + 1]);
        let slope = act.apply_prime(&preactivation(p, &y)?);
        let a = adj.zip_map(&slope, |u, s| u * s)?;
        let grad_k: DMatrix<f64> = a.mode1_unfolding() * y.mode1_unfolding().transpose() * (-tau);
        let grad_b = -tau * a.as_slice().iter().sum::<f64>();
        out.push(LayerParams { k: grad_k, b: grad_b });
    }
    Ok(out)
}

/// Data-fidelity gradients from aligned trajectories plus the regularizer
/// gradient.
#[allow(clippy::too_many_arguments)]
pub fn design_gradients(
    f: &Propagation,
    g: &Propagation,
    p: &Propagation,
    p_tilde: &Propagation,
    params: &NetworkParams,
    w: &RegWeights,
    act: Activation,
    tau: f64,
) -> Result<NetworkParams> {
    let mut grads = reg_grads(params, w);
    let enc = stage_gradients(&params.encoder, f, p, act, tau)?;
    let dec = stage_gradients(&params.decoder, g, p_tilde, act, tau)?;
    for (acc, d) in grads
        .encoder
        .iter_mut()
        .chain(grads.decoder.iter_mut())
        .zip(enc.iter().chain(&dec))
    {
        acc.k += &d.k;
        acc.b += d.b;
    }
    Ok(grads)
}

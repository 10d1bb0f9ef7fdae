//! Data fidelity, regularizer and the terminal adjoint.

use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::params::{LayerParams, NetworkParams, RegWeights};
use crate::error::{Error, Result};
use crate::tt::DenseTensor3;

/// Quadrature weight for the squared L² norm of an image.
///
/// `Area` treats each image as a function on the unit square sampled at the
/// pixel centres, so every pixel carries weight `1/(n_fr·n_fc)` and the
/// fidelity is half the per-pixel mean squared error. `Counting` weights
/// every pixel by one (the plain Frobenius norm).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMeasure {
    #[default]
    Area,
    Counting,
}

impl LossMeasure {
    pub fn weight(&self, dims: [usize; 3]) -> f64 {
        match self {
            LossMeasure::Area => 1.0 / (dims[0] * dims[1]) as f64,
            LossMeasure::Counting => 1.0,
        }
    }
}

fn check_dims(x: &DenseTensor3, g: &DenseTensor3) -> Result<()> {
    if x.dims() != g.dims() {
        return Err(Error::shape(format!(
            "target dims {:?} vs output dims {:?}",
            x.dims(),
            g.dims()
        )));
    }
    Ok(())
}

/// `J = (w/2n)·‖σ̂(g_N) − x‖²` with `n` the number of frontal slices.
pub fn loss_fidelity(x: &DenseTensor3, g_n: &DenseTensor3, output: Activation, measure: LossMeasure) -> Result<f64> {
    check_dims(x, g_n)?;
    let n = x.dims()[2] as f64;
    let w = measure.weight(x.dims());
    let sq: f64 = g_n
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(&g, &t)| {
            let r = output.eval(g) - t;
            r * r
        })
        .sum();
    Ok(w * sq / (2.0 * n))
}

/// `P̃_N = −∇_g J = −(w/n)·σ̂′(g_N) ⊙ (σ̂(g_N) − x)`.
pub fn terminal_adjoint(
    x: &DenseTensor3,
    g_n: &DenseTensor3,
    output: Activation,
    measure: LossMeasure,
) -> Result<DenseTensor3> {
    check_dims(x, g_n)?;
    let c = -measure.weight(x.dims()) / x.dims()[2] as f64;
    g_n.zip_map(x, |g, t| c * output.derivative(g) * (output.eval(g) - t))
}

fn stage_sq(layers: &[LayerParams]) -> (f64, f64) {
    layers
        .iter()
        .fold((0.0, 0.0), |(k, b), l| (k + l.k.norm_squared(), b + l.b * l.b))
}

/// `R(Θ) = λ1/(2N_e)·Σ‖K‖² + λ2/(2N_d)·Σ‖K̃‖² + λ3/(2N_e)·Σb² + λ4/(2N_d)·Σb̃²`.
pub fn regularizer(params: &NetworkParams, w: &RegWeights) -> f64 {
    let ne = params.n_encoder() as f64;
    let nd = params.n_decoder() as f64;
    let (ek, eb) = stage_sq(&params.encoder);
    let (dk, db) = stage_sq(&params.decoder);
    w.lambda1 / (2.0 * ne) * ek
        + w.lambda2 / (2.0 * nd) * dk
        + w.lambda3 / (2.0 * ne) * eb
        + w.lambda4 / (2.0 * nd) * db
}

/// Gradient of [`regularizer`] with the same layout as the parameters.
pub fn reg_grads(params: &NetworkParams, w: &RegWeights) -> NetworkParams {
    let ne = params.n_encoder() as f64;
    let nd = params.n_decoder() as f64;
    let scale = |layers: &[LayerParams], ck: f64, cb: f64| -> Vec<LayerParams> {
        layers
            .iter()
            .map(|l| LayerParams {
                k: &l.k * ck,
                b: l.b * cb,
            })
            .collect()
    };
    NetworkParams {
        encoder: scale(&params.encoder, w.lambda1 / ne, w.lambda3 / ne),
        decoder: scale(&params.decoder, w.lambda2 / nd, w.lambda4 / nd),
    }
}

/// `α = J + R`.
pub fn objective(
    params: &NetworkParams,
    x: &DenseTensor3,
    g_n: &DenseTensor3,
    w: &RegWeights,
    output: Activation,
    measure: LossMeasure,
) -> Result<f64> {
    Ok(loss_fidelity(x, g_n, output, measure)? + regularizer(params, w))
}

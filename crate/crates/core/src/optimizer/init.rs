//! Xavier (Glorot) uniform initialization.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autoencoder::params::check_layer_count;
use crate::autoencoder::{LayerParams, NetworkParams};
use crate::error::{Error, Result};

/// Glorot uniform bound `√(6/(fan_in+fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn uniform_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, a: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-a..=a))
}

/// Entries uniform on `±√(6/(rows+cols))`, drawn from `rng`.
pub fn xavier_init_with<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("xavier_init dims must be >= 1"));
    }
    Ok(uniform_matrix(rows, cols, xavier_bound(rows, cols), rng))
}

pub fn xavier_init(rows: usize, cols: usize, seed: u64) -> Result<DMatrix<f64>> {
    xavier_init_with(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Xavier init of all layers from one stream. Each half's weights are
/// treated as one `n_fr × n_fr × N/2` tensor with the time index as a
/// receptive field, so both fans are `n_fr·N/2`. A bias is added to every
/// row of an `n_fr`-row slice and uses fans `n_fr`.
pub fn init_network<R: Rng + ?Sized>(n_layers: usize, n_fr: usize, rng: &mut R) -> Result<NetworkParams> {
    check_layer_count(n_layers)?;
    if n_fr == 0 {
        return Err(Error::invalid("n_fr must be >= 1"));
    }
    let half = n_layers / 2;
    let k_bound = xavier_bound(n_fr * half, n_fr * half);
    let b_bound = xavier_bound(n_fr, n_fr);
    let mut layer = || -> Result<LayerParams> {
        let k = uniform_matrix(n_fr, n_fr, k_bound, rng);
        let b = rng.random_range(-b_bound..=b_bound);
        Ok(LayerParams { k, b })
    };
    let encoder = (0..half).map(|_| layer()).collect::<Result<Vec<_>>>()?;
    let decoder = (0..half).map(|_| layer()).collect::<Result<Vec<_>>>()?;
    NetworkParams::new(encoder, decoder)
}

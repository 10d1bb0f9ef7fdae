//! Image-quality metrics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::gaussian_filter;
use crate::error::{Error, Result};

/// Structural-similarity constants: Gaussian window side and width, and the
/// stabilizers `C1 = (k1·L)²`, `C2 = (k2·L)²` for dynamic range `L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 || !(self.sigma > 0.0) || !(self.k1 > 0.0) || !(self.k2 > 0.0) {
            return Err(Error::invalid(format!("invalid SSIM settings {self:?}")));
        }
        Ok(())
    }
}

fn check_pairs(x: &[DMatrix<f64>], y: &[DMatrix<f64>]) -> Result<()> {
    if x.len() != y.len() || x.iter().zip(y).any(|(a, b)| a.shape() != b.shape()) {
        return Err(Error::shape("metric inputs differ in count or image shape"));
    }
    if x.is_empty() {
        return Err(Error::invalid("metrics need at least one image"));
    }
    Ok(())
}

/// Mean squared error over every pixel of every image.
pub fn mse(x: &[DMatrix<f64>], y: &[DMatrix<f64>]) -> Result<f64> {
    check_pairs(x, y)?;
    let count: usize = x.iter().map(|m| m.len()).sum();
    let sum: f64 = x.iter().zip(y).map(|(a, b)| (a - b).norm_squared()).sum();
    Ok(sum / count as f64)
}

/// `10·log10(peak²/mse)`; `+∞` when the error vanishes.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(x: &[DMatrix<f64>], y: &[DMatrix<f64>], peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::invalid(format!("peak must be positive, got {peak}")));
    }
    Ok(psnr_from_mse(mse(x, y)?, peak))
}

/// Mean of the local SSIM map of one image pair. Local statistics use a
/// Gaussian window with replicated borders.
pub fn ssim(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &SsimConfig, peak: f64) -> Result<f64> {
    cfg.validate()?;
    if x.shape() != y.shape() {
        return Err(Error::shape(format!("{:?} vs {:?}", x.shape(), y.shape())));
    }
    let filt = |m: &DMatrix<f64>| gaussian_filter(m, cfg.sigma, cfg.window);
    let c1 = (cfg.k1 * peak).powi(2);
    let c2 = (cfg.k2 * peak).powi(2);
    let mx = filt(x)?;
    let my = filt(y)?;
    let sxx = filt(&x.component_mul(x))? - mx.component_mul(&mx);
    let syy = filt(&y.component_mul(y))? - my.component_mul(&my);
    let sxy = filt(&x.component_mul(y))? - mx.component_mul(&my);
    let total: f64 = (0..x.len())
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            ((2.0 * a * b + c1) * (2.0 * sxy[i] + c2)) / ((a * a + b * b + c1) * (sxx[i] + syy[i] + c2))
        })
        .sum();
    Ok(total / x.len() as f64)
}

/// Average per-image SSIM.
pub fn mean_ssim(x: &[DMatrix<f64>], y: &[DMatrix<f64>], cfg: &SsimConfig, peak: f64) -> Result<f64> {
    check_pairs(x, y)?;
    let total = x
        .iter()
        .zip(y)
        .map(|(a, b)| ssim(a, b, cfg, peak))
        .sum::<Result<f64>>()?;
    Ok(total / x.len() as f64)
}

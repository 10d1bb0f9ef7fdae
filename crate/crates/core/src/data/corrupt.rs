//! Corruption operators: additive Gaussian noise and Gaussian blur.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ImageSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorruptionKind {
    Noise,
    Blur,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// Standard deviation on the `[0, 1]` intensity scale.
    pub noise_sigma: f64,
    pub blur_sigma: f64,
    /// Odd side length of the blur kernel.
    pub kernel_size: usize,
    /// Clamp noisy pixels back into `[0, 1]`.
    pub clamp: bool,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn noise(seed: u64) -> Self {
        Self {
            kind: CorruptionKind::Noise,
            noise_sigma: 0.05,
            blur_sigma: 1.0,
            kernel_size: 5,
            clamp: true,
            seed,
        }
    }

    pub fn blur() -> Self {
        Self {
            kind: CorruptionKind::Blur,
            ..Self::noise(0)
        }
    }

    /// `2⌈2σ⌉ + 1`, the default support for a given blur width.
    pub fn kernel_size_for(sigma: f64) -> usize {
        2 * (2.0 * sigma).ceil() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "noise sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "blur sigma must be positive, got {}",
                self.blur_sigma
            )));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::invalid(format!(
                "kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }
}

pub fn corrupt(set: &ImageSet, spec: &CorruptionSpec) -> Result<ImageSet> {
    match spec.kind {
        CorruptionKind::Noise => add_noise(set, spec),
        CorruptionKind::Blur => gaussian_blur(set, spec),
    }
}

/// `x + η` with iid `η ~ N(0, σ²)`, drawn image by image in row-major order.
pub fn add_noise(set: &ImageSet, spec: &CorruptionSpec) -> Result<ImageSet> {
    spec.validate()?;
    let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (rows, cols) = set.dims();
    let images = set
        .images()
        .iter()
        .map(|m| {
            let mut out = m.clone();
            for i in 0..rows {
                for j in 0..cols {
                    let v = m[(i, j)] + normal.sample(&mut rng);
                    out[(i, j)] = if spec.clamp { v.clamp(0.0, 1.0) } else { v };
                }
            }
            out
        })
        .collect();
    ImageSet::new(images, set.labels().map(<[u8]>::to_vec), set.dims(), set.split)
}

/// Normalized 2-D Gaussian of side `size`.
pub fn gaussian_kernel(sigma: f64, size: usize) -> Result<DMatrix<f64>> {
    let w = gaussian_weights(sigma, size)?;
    Ok(&w * w.transpose())
}

fn gaussian_weights(sigma: f64, size: usize) -> Result<DVector<f64>> {
    if !(sigma > 0.0) || size % 2 == 0 {
        return Err(Error::invalid(format!(
            "need sigma > 0 and odd size, got {sigma} and {size}"
        )));
    }
    let half = (size / 2) as f64;
    let w = DVector::from_fn(size, |i, _| {
        (-((i as f64 - half).powi(2)) / (2.0 * sigma * sigma)).exp()
    });
    let total = w.sum();
    Ok(w / total)
}

/// Separable Gaussian filter with replicated borders.
pub fn gaussian_filter(m: &DMatrix<f64>, sigma: f64, size: usize) -> Result<DMatrix<f64>> {
    let w = gaussian_weights(sigma, size)?;
    let half = (size / 2) as isize;
    let (rows, cols) = m.shape();
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let along_cols = DMatrix::from_fn(rows, cols, |i, j| {
        (0..size)
            .map(|t| w[t] * m[(i, clampi(j as isize + t as isize - half, cols))])
            .sum::<f64>()
    });
    Ok(DMatrix::from_fn(rows, cols, |i, j| {
        (0..size)
            .map(|t| w[t] * along_cols[(clampi(i as isize + t as isize - half, rows), j)])
            .sum::<f64>()
    }))
}

pub fn gaussian_blur(set: &ImageSet, spec: &CorruptionSpec) -> Result<ImageSet> {
    spec.validate()?;
    let blurred = set
        .images()
        .iter()
        .map(|m| gaussian_filter(m, spec.blur_sigma, spec.kernel_size))
        .collect::<Result<Vec<_>>>()?;
    ImageSet::new(blurred, set.labels().map(<[u8]>::to_vec), set.dims(), set.split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use rand::Rng;

    fn single(m: DMatrix<f64>) -> ImageSet {
        let dims = m.shape();
        ImageSet::new(vec![m], None, dims, Split::Unsplit).unwrap()
    }

    #[test]
    fn kernel_is_normalized_and_nonnegative() {
        assert_eq!(CorruptionSpec::kernel_size_for(1.0), 5);
        for (s, n) in [(1.0, 5), (0.5, 3), (2.0, 9)] {
            let k = gaussian_kernel(s, n).unwrap();
            assert!((k.sum() - 1.0).abs() < 1e-12);
            assert!(k.iter().all(|&v| v >= 0.0));
        }
        assert!(gaussian_kernel(1.0, 4).is_err());
    }

    #[test]
    fn constant_image_unchanged() {
        let set = single(DMatrix::from_element(6, 7, 0.3));
        let out = gaussian_blur(&set, &CorruptionSpec::blur()).unwrap();
        assert!(out.images()[0].iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let mut m = DMatrix::zeros(7, 7);
        m[(3, 3)] = 1.0;
        let out = gaussian_blur(&single(m), &CorruptionSpec::blur()).unwrap();
        let k = gaussian_kernel(1.0, 5).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let want = if (1..6).contains(&i) && (1..6).contains(&j) {
                    k[(i - 1, j - 1)]
                } else {
                    0.0
                };
                assert!((out.images()[0][(i, j)] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (r, c) = (9, 11);
        let m = DMatrix::from_fn(r, c, |_, _| rng.random_range(0.0..1.0));
        let out = gaussian_blur(&single(m.clone()), &CorruptionSpec::blur()).unwrap();
        // Direct 2-D sum over the full kernel with replicated borders.
        for i in 0..r {
            for j in 0..c {
                let (mut acc, mut total) = (0.0, 0.0);
                for di in -2i32..=2 {
                    for dj in -2i32..=2 {
                        let g = (-((di * di + dj * dj) as f64) / 2.0).exp();
                        let ii = (i as i32 + di).clamp(0, r as i32 - 1) as usize;
                        let jj = (j as i32 + dj).clamp(0, c as i32 - 1) as usize;
                        acc += g * m[(ii, jj)];
                        total += g;
                    }
                }
                assert!((out.images()[0][(i, j)] - acc / total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_statistics_and_clamping() {
        let set = ImageSet::new(
            vec![DMatrix::from_element(100, 100, 0.5); 10],
            None,
            (100, 100),
            Split::Train,
        )
        .unwrap();
        let spec = CorruptionSpec {
            clamp: false,
            ..CorruptionSpec::noise(11)
        };
        let noisy = add_noise(&set, &spec).unwrap();
        let diffs: Vec<f64> = noisy.images().iter().flat_map(|m| m.iter().map(|v| v - 0.5)).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std / 0.05 - 1.0).abs() < 0.02, "{std}");
        assert_eq!(add_noise(&set, &spec).unwrap(), noisy);

        let edge = single(DMatrix::from_fn(10, 10, |i, _| if i < 5 { 0.0 } else { 1.0 }));
        let out = add_noise(&edge, &CorruptionSpec::noise(2)).unwrap();
        assert!(out.in_unit_range());
        let raw = CorruptionSpec {
            clamp: false,
            ..CorruptionSpec::noise(2)
        };
        assert!(!add_noise(&edge, &raw).unwrap().in_unit_range());
        let zero = CorruptionSpec {
            noise_sigma: 0.0,
            ..CorruptionSpec::noise(2)
        };
        assert_eq!(add_noise(&edge, &zero).unwrap(), edge);
    }
}

//! Entrywise activations.
//!
//! Nonlinearities cannot be applied to a TT tensor in fixed rank, so the TT
//! variants densify, apply and recompress.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tt::{tt_from_dense, tt_to_dense, DenseTensor3, RoundingRequest, TtTensor};

/// Default knee width of the smoothed ReLU.
pub const DEFAULT_RELU_DELTA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    /// `0` for `x ≤ 0`, `x²/(2δ)` on `(0, δ)`, `x − δ/2` for `x ≥ δ`.
    SmoothRelu {
        delta: f64,
    },
}

impl Activation {
    pub fn smooth_relu() -> Self {
        Activation::SmoothRelu {
            delta: DEFAULT_RELU_DELTA,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Activation::Tanh => x.tanh(),
            Activation::SmoothRelu { delta } => {
                if x <= 0.0 {
                    0.0
                } else if x < delta {
                    x * x / (2.0 * delta)
                } else {
                    x - delta / 2.0
                }
            }
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::SmoothRelu { delta } => {
                if x <= 0.0 {
                    0.0
                } else if x < delta {
                    x / delta
                } else {
                    1.0
                }
            }
        }
    }

    pub fn apply(&self, t: &DenseTensor3) -> DenseTensor3 {
        t.map(|x| self.eval(x))
    }

    pub fn apply_prime(&self, t: &DenseTensor3) -> DenseTensor3 {
        t.map(|x| self.derivative(x))
    }

    fn apply_tt(&self, t: &TtTensor, req: RoundingRequest, prime: bool) -> Result<TtTensor> {
        let dense = tt_to_dense(t);
        let out = if prime {
            self.apply_prime(&dense)
        } else {
            self.apply(&dense)
        };
        tt_from_dense(&out, req)
    }
}

pub fn act_tanh(t: &TtTensor, req: RoundingRequest) -> Result<TtTensor> {
    Activation::Tanh.apply_tt(t, req, false)
}

pub fn act_tanh_prime(t: &TtTensor, req: RoundingRequest) -> Result<TtTensor> {
    Activation::Tanh.apply_tt(t, req, true)
}

pub fn act_out(t: &TtTensor, delta: f64, req: RoundingRequest) -> Result<TtTensor> {
    Activation::SmoothRelu { delta }.apply_tt(t, req, false)
}

pub fn act_out_prime(t: &TtTensor, delta: f64, req: RoundingRequest) -> Result<TtTensor> {
    Activation::SmoothRelu { delta }.apply_tt(t, req, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tanh_on_zero_and_saturation() {
        let z = TtTensor::zeros([3, 3, 2]).unwrap();
        let out = tt_to_dense(&act_tanh(&z, RoundingRequest::exact()).unwrap());
        assert!(out.as_slice().iter().all(|&x| x == 0.0));
        let prime = tt_to_dense(&act_tanh_prime(&z, RoundingRequest::exact()).unwrap());
        assert!(prime.as_slice().iter().all(|&x| (x - 1.0).abs() < 1e-14));
        assert!((Activation::Tanh.eval(20.0) - 1.0).abs() < 1e-12);
        assert!((Activation::Tanh.eval(-20.0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_relu_pieces_and_continuity() {
        let s = Activation::smooth_relu();
        assert_eq!(s.eval(-1.0), 0.0);
        assert_eq!(s.derivative(-1.0), 0.0);
        assert!((s.eval(0.1) - 0.05).abs() < 1e-15);
        // One-sided limits at the knots; the slack is the Lipschitz constant
        // of each function times the offset.
        let h = 1e-15;
        for knot in [0.0, 0.1] {
            assert!((s.eval(knot - h) - s.eval(knot)).abs() <= 1e-15 + h);
            assert!((s.eval(knot + h) - s.eval(knot)).abs() <= 1e-15 + h);
            assert!((s.derivative(knot - h) - s.derivative(knot + h)).abs() <= 1e-15 + 2.0 * h / 0.1);
        }
    }

    #[test]
    fn tt_activations_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = DenseTensor3::from_fn([4, 5, 3], |_, _, _| rng.random_range(-0.5..0.5)).unwrap();
        let t = tt_from_dense(&d, RoundingRequest::exact()).unwrap();
        let req = RoundingRequest::new(1e-13, usize::MAX).unwrap();
        let cases: [(TtTensor, fn(f64) -> f64); 2] = [
            (act_tanh(&t, req).unwrap(), f64::tanh),
            (act_out(&t, 0.1, req).unwrap(), |x| Activation::smooth_relu().eval(x)),
        ];
        for (got, f) in cases {
            let want = d.map(f);
            assert!(want.sub(&tt_to_dense(&got)).unwrap().norm() <= 1e-12 * want.norm().max(1.0));
        }
        let prime = tt_to_dense(&act_out_prime(&t, 0.1, req).unwrap());
        let want = d.map(|x| Activation::smooth_relu().derivative(x));
        assert!(want.sub(&prime).unwrap().norm() <= 1e-12 * want.norm().max(1.0));
    }
}

//! Double-double arithmetic (an unevaluated sum `hi + lo`, about 32
//! significant digits) for finite-difference oracles whose step sizes reach
//! below the `f64` roundoff floor.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    #[cfg(test)]
    pub fn lo(self) -> f64 {
        self.lo
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Exact product of two doubles.
    pub fn prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    fn scale_pow2(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    /// `(k, u)` with `e^x = (1 + u)·2^k`; `u` keeps full relative precision
    /// when `k = 0`.
    fn exp_parts(self) -> (i32, Dd) {
        // x = k·ln2 + r with |r| ≤ ln2/2, then e^r = (e^{r/1024})^1024.
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::from(k)).scale_pow2(-10);
        // Taylor series for e^r − 1; |r| < 3.4e-4 so 12 terms exceed the
        // working precision.
        let mut term = r;
        let mut em1 = r;
        for i in 2..=12 {
            term = term * r / Dd::from(i as f64);
            em1 = em1 + term;
        }
        // (1 + u)² − 1 = 2u + u², keeping the small part separate.
        for _ in 0..10 {
            em1 = em1.scale_pow2(1) + em1 * em1;
        }
        (k as i32, em1)
    }

    #[cfg(test)]
    pub fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd::from(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let (k, em1) = self.exp_parts();
        (Dd::ONE + em1).scale_pow2(k)
    }

    pub fn tanh(self) -> Dd {
        if self.hi == 0.0 {
            return Dd::ZERO;
        }
        if self.hi.abs() > 40.0 {
            return Dd::from(self.hi.signum());
        }
        // tanh|x| = −u/(2 + u) with u = e^{−2|x|} − 1.
        let (k, em1) = self.abs().scale_pow2(1).neg().exp_parts();
        let t = if k == 0 {
            -em1 / (Dd::from(2.0) + em1)
        } else {
            let e = (Dd::ONE + em1).scale_pow2(k);
            (Dd::ONE - e) / (Dd::ONE + e)
        };
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let p = Dd::prod(self.hi, b.hi);
        quick_two_sum(p.hi, p.lo + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::from(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::from(q2);
        let q3 = r.hi / b.hi;
        quick_two_sum(q1, q2) + Dd::from(q3)
    }
}

impl std::iter::Sum for Dd {
    fn sum<I: Iterator<Item = Dd>>(iter: I) -> Dd {
        iter.fold(Dd::ZERO, |a, b| a + b)
    }
}

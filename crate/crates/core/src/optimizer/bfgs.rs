//! BFGS with a dense inverse-Hessian approximation and Armijo backtracking.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// `m2`; zero evaluates the start point and returns.
    pub max_iters: usize,
    /// `η`: stop once `‖∇f‖ < η`.
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub initial_step: f64,
    /// Line search gives up below this step length.
    pub min_step: f64,
    /// Rescale the identity inverse Hessian by `sᵀy/yᵀy` before the first
    /// update.
    pub initial_scaling: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 30,
            grad_tol: 1e-5,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            min_step: 1e-14,
            initial_scaling: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.initial_step > 0.0 && self.min_step > 0.0) {
            return Err(Error::invalid("grad_tol, initial_step and min_step must be positive"));
        }
        for (name, v) in [("armijo_c", self.armijo_c), ("backtrack_factor", self.backtrack_factor)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    /// The line search could not find an acceptable step above `min_step`.
    StepUnderflow,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Objective after each accepted iteration, starting with the initial value.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub skipped_updates: usize,
}

/// Applies the inverse-Hessian update in place. Returns false, leaving `h`
/// untouched, when the curvature condition fails.
fn bfgs_update(h: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) -> bool {
    let sy = s.dot(y);
    if !(sy > 1e-12 * s.norm() * y.norm()) {
        return false;
    }
    // H⁺ = (I − ρsyᵀ)H(I − ρysᵀ) + ρssᵀ, expanded so that only the product
    // Hy is needed.
    let rho = 1.0 / sy;
    let hy = &*h * y;
    let yhy = y.dot(&hy);
    h.ger(-rho, &hy, s, 1.0);
    h.ger(-rho, s, &hy, 1.0);
    h.ger(rho * rho * yhy + rho, s, s, 1.0);
    true
}

/// Minimizes `eval`, which returns the value and gradient at a point. A
/// non-finite value is treated as a failed trial and shrinks the step.
pub fn bfgs_minimize<F>(mut eval: F, x0: Vec<f64>, cfg: &SolverConfig) -> Result<SolveResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    cfg.validate()?;
    let n = x0.len();
    let (mut f, g0) = eval(&x0);
    let mut evaluations = 1;
    if !f.is_finite() || g0.len() != n || g0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("objective is not finite at the starting point"));
    }
    let mut x = DVector::from_vec(x0);
    let mut g = DVector::from_vec(g0);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut history = vec![f];
    let mut skipped = 0;
    let mut iterations = 0;

    let termination = loop {
        if g.norm() < cfg.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= cfg.max_iters {
            break Termination::MaxIterations;
        }
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            // Lost positive definiteness numerically: restart from steepest descent.
            h.fill_with_identity();
            d = -&g;
            slope = -g.norm_squared();
        }

        let mut step = cfg.initial_step;
        let accepted = loop {
            let trial = &x + &d * step;
            let (ft, gt) = eval(trial.as_slice());
            evaluations += 1;
            let finite = ft.is_finite() && gt.len() == n && gt.iter().all(|v| v.is_finite());
            if finite && ft <= f + cfg.armijo_c * step * slope {
                break Some((trial, ft, DVector::from_vec(gt)));
            }
            step *= cfg.backtrack_factor;
            if step < cfg.min_step {
                break None;
            }
        };
        let Some((x_new, f_new, g_new)) = accepted else {
            break Termination::StepUnderflow;
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        if cfg.initial_scaling && iterations == 0 {
            let sy = s.dot(&y);
            let yy = y.norm_squared();
            if sy > 0.0 && yy > 0.0 {
                h *= sy / yy;
            }
        }
        if !bfgs_update(&mut h, &s, &y) {
            skipped += 1;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        iterations += 1;
        history.push(f);
    };

    Ok(SolveResult {
        gradient_norm: g.norm(),
        x: x.as_slice().to_vec(),
        value: f,
        iterations,
        converged: termination == Termination::GradientTolerance,
        termination,
        history,
        evaluations,
        skipped_updates: skipped,
    })
}

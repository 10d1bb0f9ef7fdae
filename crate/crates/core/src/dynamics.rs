//! Rank-adaptive explicit Euler stepping on the TT manifold.
//!
//! One step computes `Y' = 𝔗_r(Y + τ·𝔗_s(N(Y)))`. The inner truncation
//! tolerance is `M_s·τ / ‖N(Y)‖` and the outer one `M_r·τ² / ‖Y + τ𝔗_s(N(Y))‖`,
//! so that when neither rank cap binds
//!
//! ```text
//! ‖N(Y) − 𝔗_s(N(Y))‖ ≤ M_s·τ,    ‖Z − 𝔗_r(Z)‖ ≤ M_r·τ²   (Z = Y + τ𝔗_s(N(Y))).
//! ```
//!
//! Both inequalities are re-checked against dense reconstructions after every
//! step. Terminal-value problems use the same update with the index running
//! backwards (`Z_j` from `Z_{j+1}`), which is what [`euler_step_reverse`]
//! expresses.
//!
//! Right-hand sides return a [`DenseTensor3`]: the untruncated evaluation
//! `N(Y)` is needed for its norm and for the post-hoc check, and the network
//! nonlinearities are applied entrywise on dense data anyway.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StepFailure};
use crate::tt::{
    tt_add, tt_from_dense, tt_norm, tt_round, tt_scale, tt_to_dense, DenseTensor3, RoundingRequest, TtTensor,
};

/// Step size `τ` and the truncation constants `M_s`, `M_r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationBudget {
    pub tau: f64,
    pub m_s: f64,
    pub m_r: f64,
}

impl TruncationBudget {
    pub fn new(tau: f64, m_s: f64, m_r: f64) -> Result<Self> {
        let b = Self { tau, m_s, m_r };
        b.validate()?;
        Ok(b)
    }

    /// `M_s = τ⁻¹`, `M_r = τ⁻²`.
    pub fn decoupled(tau: f64) -> Result<Self> {
        Self::new(tau, 1.0 / tau, 1.0 / (tau * tau))
    }

    /// Budget whose tolerances sit below double precision, so that steps are
    /// classical Euler steps up to roundoff (given generous rank caps).
    pub fn lossless(tau: f64) -> Self {
        Self {
            tau,
            m_s: f64::MIN_POSITIVE,
            m_r: f64::MIN_POSITIVE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau", self.tau), ("M_s", self.m_s), ("M_r", self.m_r)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn inner_bound(&self) -> f64 {
        self.m_s * self.tau
    }

    pub fn outer_bound(&self) -> f64 {
        self.m_r * self.tau * self.tau
    }
}

/// Relative tolerance for truncating the right-hand side. A zero norm needs
/// no truncation at all and yields `+∞`.
pub fn tol_inner(budget: &TruncationBudget, rhs_norm: f64) -> f64 {
    if rhs_norm == 0.0 {
        f64::INFINITY
    } else {
        budget.inner_bound() / rhs_norm
    }
}

/// Relative tolerance for truncating the updated state; `+∞` for a zero state.
pub fn tol_outer(budget: &TruncationBudget, state_norm: f64) -> f64 {
    if state_norm == 0.0 {
        f64::INFINITY
    } else {
        budget.outer_bound() / state_norm
    }
}

/// Rank caps for one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCaps {
    pub inner: usize,
    pub outer: usize,
}

impl StepCaps {
    pub fn uniform(cap: usize) -> Self {
        Self { inner: cap, outer: cap }
    }

    pub fn unbounded() -> Self {
        Self::uniform(usize::MAX)
    }
}

/// What an integration does when a step misses its truncation bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundPolicy {
    /// Stop and return a [`Error::StepFailure`] carrying the partial trajectory.
    Abort,
    /// Keep the capped result, mark the record and continue.
    #[default]
    Record,
}

/// Diagnostics of one Euler step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Interior ranks of `𝔗_s(N(Y))`.
    pub inner_rank: [usize; 2],
    /// Interior ranks of the new state.
    pub outer_rank: [usize; 2],
    pub inner_tolerance: f64,
    pub outer_tolerance: f64,
    /// Measured `‖N(Y) − 𝔗_s(N(Y))‖`.
    pub inner_error: f64,
    pub inner_bound: f64,
    /// Measured `‖Z − 𝔗_r(Z)‖`.
    pub outer_error: f64,
    pub outer_bound: f64,
    pub bound_satisfied: bool,
}

/// Roundoff allowance for the post-hoc checks: the measured errors are
/// computed densely and can exceed a bound by a few ulps of the quantity they
/// were subtracted from.
fn within(error: f64, bound: f64, scale: f64) -> bool {
    error <= bound + 1024.0 * f64::EPSILON * scale
}

/// One rank-adaptive forward Euler step.
///
/// Returns `Err(Error::StepFailure)` if either bound fails (which can only
/// happen when a rank cap binds); the failure carries the capped state.
pub fn euler_step_forward<F>(
    y: &TtTensor,
    rhs: F,
    budget: &TruncationBudget,
    inner_cap: usize,
    outer_cap: usize,
) -> Result<(TtTensor, StepRecord)>
where
    F: FnOnce(&TtTensor) -> Result<DenseTensor3>,
{
    budget.validate()?;
    if inner_cap == 0 || outer_cap == 0 {
        return Err(Error::invalid("rank caps must be >= 1"));
    }
    let n = rhs(y)?;
    if n.dims() != y.dims() {
        return Err(Error::shape(format!(
            "right-hand side has dims {:?}, state has {:?}",
            n.dims(),
            y.dims()
        )));
    }
    let rhs_norm = n.norm();
    let inner_tolerance = tol_inner(budget, rhs_norm);

    // Zero increment: the state is already exact, so skip outer rounding when
    // the state also respects the cap.
    if rhs_norm == 0.0 && y.max_rank() <= outer_cap {
        let record = StepRecord {
            inner_rank: [1, 1],
            outer_rank: y.ranks(),
            inner_tolerance,
            outer_tolerance: f64::INFINITY,
            inner_error: 0.0,
            inner_bound: budget.inner_bound(),
            outer_error: 0.0,
            outer_bound: budget.outer_bound(),
            bound_satisfied: true,
        };
        return Ok((y.clone(), record));
    }

    let increment = tt_from_dense(
        &n,
        RoundingRequest {
            tolerance: inner_tolerance,
            max_rank: inner_cap,
        },
    )?;
    let inner_error = n.sub(&tt_to_dense(&increment))?.norm();
    let inner_ok = within(inner_error, budget.inner_bound(), rhs_norm);

    let z = tt_add(y, &tt_scale(&increment, budget.tau))?;
    let z_norm = tt_norm(&z);
    let outer_tolerance = tol_outer(budget, z_norm);
    let next = tt_round(
        &z,
        RoundingRequest {
            tolerance: outer_tolerance,
            max_rank: outer_cap,
        },
    )?;
    let outer_error = tt_to_dense(&z).sub(&tt_to_dense(&next))?.norm();
    let outer_ok = within(outer_error, budget.outer_bound(), z_norm);

    let record = StepRecord {
        inner_rank: increment.ranks(),
        outer_rank: next.ranks(),
        inner_tolerance,
        outer_tolerance,
        inner_error,
        inner_bound: budget.inner_bound(),
        outer_error,
        outer_bound: budget.outer_bound(),
        bound_satisfied: inner_ok && outer_ok,
    };
    if record.bound_satisfied {
        Ok((next, record))
    } else {
        Err(Error::StepFailure(Box::new(StepFailure {
            step: 0,
            record,
            state: next,
            partial: Vec::new(),
        })))
    }
}

/// One step of a terminal-value problem, producing `Z_j` from `Z_{j+1}`.
///
/// After the change of variable `t̂ = T − t` the update is the forward step
/// applied to `Z_{j+1}`; only the direction of the index differs.
pub fn euler_step_reverse<F>(
    z_next: &TtTensor,
    rhs: F,
    budget: &TruncationBudget,
    inner_cap: usize,
    outer_cap: usize,
) -> Result<(TtTensor, StepRecord)>
where
    F: FnOnce(&TtTensor) -> Result<DenseTensor3>,
{
    euler_step_forward(z_next, rhs, budget, inner_cap, outer_cap)
}

/// States `Y_0, …, Y_N` in integration order plus one record per step.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<TtTensor>,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn last(&self) -> &TtTensor {
        self.states
            .last()
            .expect("a trajectory holds at least its initial state")
    }

    /// The recorded layer rank (largest interior rank) of every state.
    pub fn ranks(&self) -> Vec<usize> {
        self.states.iter().map(TtTensor::max_rank).collect()
    }

    /// Indices of steps that missed a bound (only under [`BoundPolicy::Record`]).
    pub fn violations(&self) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.bound_satisfied)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Integrates `caps.len()` steps from `y0`; `rhs(j, Y_j)` evaluates the
/// right-hand side of step `j`.
///
/// Under [`BoundPolicy::Abort`] the first violating step ends the integration
/// with a [`StepFailure`] whose `partial` holds the states computed so far.
pub fn integrate<F>(
    y0: TtTensor,
    mut rhs: F,
    budget: &TruncationBudget,
    caps: &[StepCaps],
    policy: BoundPolicy,
) -> Result<Trajectory>
where
    F: FnMut(usize, &TtTensor) -> Result<DenseTensor3>,
{
    let mut states = Vec::with_capacity(caps.len() + 1);
    let mut records = Vec::with_capacity(caps.len());
    states.push(y0);
    for (j, cap) in caps.iter().enumerate() {
        let current = states.last().expect("nonempty");
        match euler_step_forward(current, |y| rhs(j, y), budget, cap.inner, cap.outer) {
            Ok((next, record)) => {
                states.push(next);
                records.push(record);
            }
            Err(Error::StepFailure(mut failure)) => match policy {
                BoundPolicy::Abort => {
                    failure.step = j;
                    failure.partial = states;
                    return Err(Error::StepFailure(failure));
                }
                BoundPolicy::Record => {
                    states.push(failure.state);
                    records.push(failure.record);
                }
            },
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory { states, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::tt_mode1_matmul;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> TtTensor {
        let d = DenseTensor3::from_vec([1, 1, 1], vec![v]).unwrap();
        tt_from_dense(&d, RoundingRequest::exact()).unwrap()
    }

    fn value(t: &TtTensor) -> f64 {
        tt_to_dense(t).as_slice()[0]
    }

    fn random_dense(dims: [usize; 3], seed: u64) -> DenseTensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseTensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn tolerance_arithmetic() {
        let b = TruncationBudget::new(0.5, 2.0, 4.0).unwrap();
        assert_eq!(tol_inner(&b, 4.0), 0.25);
        assert_eq!(tol_outer(&b, 2.0), 0.5);
        let unit = TruncationBudget::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(tol_inner(&unit, 1.0), 1.0);
        assert_eq!(tol_outer(&unit, 1.0), 1.0);
        assert_eq!(tol_inner(&unit, 0.0), f64::INFINITY);

        let tau = 10.0 / 12.0;
        let d = TruncationBudget::decoupled(tau).unwrap();
        assert!((tol_inner(&d, 3.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((tol_outer(&d, 5.0) - 0.2).abs() < 1e-15);
        assert!(TruncationBudget::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_dynamics_leave_state_untouched() {
        let y = tt_from_dense(&random_dense([4, 4, 3], 1), RoundingRequest::exact()).unwrap();
        let b = TruncationBudget::decoupled(0.1).unwrap();
        let zero = |y: &TtTensor| DenseTensor3::zeros(y.dims());
        let (next, rec) = euler_step_forward(&y, zero, &b, 10, 10).unwrap();
        assert_eq!(next, y);
        assert_eq!(rec.outer_rank, y.ranks());
        let (back, _) = euler_step_reverse(&y, zero, &b, 10, 10).unwrap();
        assert_eq!(back, y);
    }

    #[test]
    fn scalar_decay_step() {
        let b = TruncationBudget::lossless(0.1);
        let neg = |y: &TtTensor| Ok(tt_to_dense(&tt_scale(y, -1.0)));
        let (y1, _) = euler_step_forward(&scalar(1.0), neg, &b, 1, 1).unwrap();
        assert!((value(&y1) - 0.9).abs() < 1e-15);
        let (z0, _) = euler_step_reverse(&scalar(1.0), neg, &b, 1, 1).unwrap();
        assert!((value(&z0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn linear_step_matches_dense_euler() {
        let y_dense = random_dense([4, 4, 3], 2);
        let y = tt_from_dense(&y_dense, RoundingRequest::exact()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let tau = 0.1;
        let b = TruncationBudget::new(tau, 0.5, 0.5).unwrap();
        let rhs = |y: &TtTensor| Ok(tt_to_dense(&tt_mode1_matmul(&a, y)?));
        let (next, rec) = euler_step_forward(&y, rhs, &b, 100, 100).unwrap();
        assert!(rec.bound_satisfied);

        let oracle = y_dense.add(&y_dense.mode1_product(&a).unwrap().scale(tau)).unwrap();
        let err = oracle.sub(&tt_to_dense(&next)).unwrap().norm();
        assert!(err <= (b.m_s + b.m_r) * tau * tau + 1e-12, "{err}");
    }

    #[test]
    fn lossless_step_is_classical_euler() {
        let y_dense = random_dense([5, 4, 3], 4);
        let y = tt_from_dense(&y_dense, RoundingRequest::exact()).unwrap();
        let rhs = |y: &TtTensor| Ok(tt_to_dense(y).map(f64::sin));
        let b = TruncationBudget::lossless(0.3);
        let (next, _) = euler_step_forward(&y, rhs, &b, usize::MAX, usize::MAX).unwrap();
        let oracle = y_dense.add(&y_dense.map(f64::sin).scale(0.3)).unwrap();
        assert!(oracle.sub(&tt_to_dense(&next)).unwrap().norm() < 1e-12);
    }

    #[test]
    fn binding_cap_reports_failure_with_state() {
        let y = tt_from_dense(&random_dense([5, 5, 5], 5), RoundingRequest::exact()).unwrap();
        let b = TruncationBudget::lossless(0.1);
        let rhs = |y: &TtTensor| Ok(tt_to_dense(y).map(|x| x * x));
        let err = euler_step_forward(&y, rhs, &b, 1, 1).unwrap_err();
        match err {
            Error::StepFailure(f) => {
                assert!(!f.record.bound_satisfied);
                assert_eq!(f.state.ranks(), [1, 1]);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn integrate_policies() {
        let y0 = tt_from_dense(&random_dense([5, 5, 5], 6), RoundingRequest::exact()).unwrap();
        let b = TruncationBudget::lossless(0.1);
        let caps = vec![StepCaps::uniform(1); 3];
        let rhs = |_: usize, y: &TtTensor| Ok(tt_to_dense(y).map(|x| -x));

        let recorded = integrate(y0.clone(), rhs, &b, &caps, BoundPolicy::Record).unwrap();
        assert_eq!(recorded.states.len(), 4);
        assert!(!recorded.violations().is_empty());

        match integrate(y0, rhs, &b, &caps, BoundPolicy::Abort) {
            Err(Error::StepFailure(f)) => {
                assert_eq!(f.step, 0);
                assert_eq!(f.partial.len(), 1);
            }
            other => panic!("expected step failure, got {other:?}"),
        }
    }

    #[test]
    fn single_step_integration_matches_step() {
        let y0 = tt_from_dense(&random_dense([3, 4, 2], 7), RoundingRequest::exact()).unwrap();
        let b = TruncationBudget::decoupled(0.2).unwrap();
        let f = |y: &TtTensor| Ok(tt_to_dense(y).map(f64::tanh));
        let (step, _) = euler_step_forward(&y0, f, &b, 8, 8).unwrap();
        let traj = integrate(y0, |_, y| f(y), &b, &[StepCaps::uniform(8)], BoundPolicy::Abort).unwrap();
        assert_eq!(traj.last(), &step);
    }

    #[test]
    fn constant_rhs_telescopes() {
        let c = random_dense([3, 3, 2], 8);
        let y0_dense = random_dense([3, 3, 2], 9);
        let y0 = tt_from_dense(&y0_dense, RoundingRequest::exact()).unwrap();
        let n = 5;
        let b = TruncationBudget::lossless(0.2);
        let traj = integrate(
            y0,
            |_, _| Ok(c.clone()),
            &b,
            &vec![StepCaps::unbounded(); n],
            BoundPolicy::Abort,
        )
        .unwrap();
        let oracle = y0_dense.add(&c.scale(n as f64 * 0.2)).unwrap();
        assert!(oracle.sub(&tt_to_dense(traj.last())).unwrap().norm() < 1e-12);
    }
}

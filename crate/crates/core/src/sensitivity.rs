//! Linear response of future states to past actions about the autonomous
//! (zero-action, noise-free) trajectory.
//!
//! For the Euler map with step Jacobians `J_τ = I + ∇f(x̄_τ)·dt` and per-step
//! gains `G_τ = g(x̄_τ)·dt`, the sensitivity of state `s` to action `r < s` is
//!
//! ```text
//! ∂x̄_s/∂a_r = J_{s−1} ⋯ J_{r+1} · G_r
//! ```
//!
//! and the block matrix `F` stacks these for the observed states
//! `s ∈ [T_a + n, T_e]` and actions `r ∈ [0, T_a − 1]`, both in reverse time
//! order (latest first).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_dt, check_state, StateVector, SystemModel};

/// Index triple `(T_e, T_a, n)` plus the discretization step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonSpec {
    pub dt: f64,
    /// Index of the last observed state, `T_e`.
    pub horizon_steps: usize,
    /// Number of action steps, `T_a`.
    pub action_steps: usize,
    /// Steps between the last action and the first observed state, `n`.
    pub gap_steps: usize,
}

impl HorizonSpec {
    pub fn new(dt: f64, horizon_steps: usize, action_steps: usize, gap_steps: usize) -> Result<Self> {
        let spec = HorizonSpec {
            dt,
            horizon_steps,
            action_steps,
            gap_steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_dt(self.dt)?;
        if self.horizon_steps == 0 {
            return Err(Error::invalid("horizon_steps", "must be >= 1"));
        }
        if self.action_steps == 0 {
            return Err(Error::invalid("action_steps", "must be >= 1"));
        }
        if self.action_steps + self.gap_steps > self.horizon_steps {
            return Err(Error::invalid(
                "gap_steps",
                format!(
                    "action_steps + gap_steps ({} + {}) exceeds horizon_steps ({})",
                    self.action_steps, self.gap_steps, self.horizon_steps
                ),
            ));
        }
        Ok(())
    }

    /// First observed state index, `s₁ = T_a + n`.
    pub fn first_observed(&self) -> usize {
        self.action_steps + self.gap_steps
    }

    /// Number of observed states, `T_e − T_a − n + 1`.
    pub fn observed_count(&self) -> usize {
        self.horizon_steps - self.first_observed() + 1
    }

    /// Physical duration of the horizon in seconds.
    pub fn horizon_seconds(&self) -> f64 {
        self.horizon_steps as f64 * self.dt
    }
}

/// Zero-action trajectory with the factors needed for the chain rule.
#[derive(Debug, Clone)]
pub struct AutonomousRollout {
    /// `x̄₀ … x̄_{T_e}`.
    pub states: Vec<StateVector>,
    /// `J_τ = I + ∇f(x̄_τ)·dt` for `τ ∈ [0, T_e)`.
    pub step_jacobians: Vec<DMatrix<f64>>,
    /// `G_τ = g(x̄_τ)·dt` for `τ ∈ [0, T_e)`.
    pub gains: Vec<DMatrix<f64>>,
    pub dt: f64,
}

impl AutonomousRollout {
    pub fn horizon_steps(&self) -> usize {
        self.step_jacobians.len()
    }
}

pub fn rollout_autonomous(model: &dyn SystemModel, x0: &StateVector, spec: &HorizonSpec) -> Result<AutonomousRollout> {
    spec.validate()?;
    check_state(model, x0)?;
    let n = model.state_dim();
    let dt = spec.dt;
    let steps = spec.horizon_steps;
    let identity = DMatrix::<f64>::identity(n, n);

    let mut states = Vec::with_capacity(steps + 1);
    let mut step_jacobians = Vec::with_capacity(steps);
    let mut gains = Vec::with_capacity(steps);
    let mut x = x0.clone();
    for tau in 0..steps {
        let jac = &identity + model.drift_jacobian(&x) * dt;
        let gain = model.gain(&x) * dt;
        let next = &x + model.drift(&x) * dt;
        if next.iter().any(|v| !v.is_finite()) || jac.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("autonomous rollout step {tau}")));
        }
        step_jacobians.push(jac);
        gains.push(gain);
        states.push(std::mem::replace(&mut x, next));
    }
    states.push(x);
    Ok(AutonomousRollout {
        states,
        step_jacobians,
        gains,
        dt,
    })
}

/// `∂x̄_s/∂a_r` for `0 ≤ r < s ≤ T_e`. For `s = r + 1` this is `G_r`.
pub fn action_sensitivity(rollout: &AutonomousRollout, s: usize, r: usize) -> Result<DMatrix<f64>> {
    let horizon = rollout.horizon_steps();
    if r >= s || s > horizon {
        return Err(Error::IndexOutOfRange { s, r, horizon });
    }
    let mut m = rollout.gains[r].clone();
    for jac in &rollout.step_jacobians[r + 1..s] {
        m = jac * m;
    }
    Ok(m)
}

/// Block linear-response matrix with its index metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    /// `(d_x·s) × (d_a·r)` entries, reverse-time block order.
    pub entries: DMatrix<f64>,
    pub spec: HorizonSpec,
    pub state_dim: usize,
    pub action_dim: usize,
}

impl SensitivityMatrix {
    /// Time index of the state in row block `i`.
    pub fn state_index(&self, i: usize) -> usize {
        self.spec.horizon_steps - i
    }

    /// Time index of the action in column block `j`.
    pub fn action_index(&self, j: usize) -> usize {
        self.spec.action_steps - 1 - j
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.entries
            .view(
                (i * self.state_dim, j * self.action_dim),
                (self.state_dim, self.action_dim),
            )
            .into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Accumulation {
    /// Push each action's gain forward through the step Jacobians.
    Forward,
    /// Pull each observed state's Jacobian product backward over actions.
    Backward,
}

impl Accumulation {
    fn cheaper(spec: &HorizonSpec, state_dim: usize, action_dim: usize) -> Self {
        let t_e = spec.horizon_steps as f64;
        let forward = spec.action_steps as f64 * t_e * (state_dim * action_dim) as f64;
        let backward = spec.observed_count() as f64 * t_e * (state_dim * state_dim) as f64;
        if forward <= backward {
            Accumulation::Forward
        } else {
            Accumulation::Backward
        }
    }
}

pub fn build_sensitivity_matrix(
    model: &dyn SystemModel,
    x0: &StateVector,
    spec: &HorizonSpec,
) -> Result<SensitivityMatrix> {
    let rollout = rollout_autonomous(model, x0, spec)?;
    Ok(assemble(&rollout, spec, model.state_dim(), model.action_dim(), None))
}

/// Assembles `F` from an existing rollout whose horizon equals `spec`'s.
pub fn sensitivity_from_rollout(
    rollout: &AutonomousRollout,
    spec: &HorizonSpec,
    state_dim: usize,
    action_dim: usize,
) -> Result<SensitivityMatrix> {
    spec.validate()?;
    if rollout.horizon_steps() != spec.horizon_steps {
        return Err(Error::DimensionMismatch {
            what: "rollout horizon",
            expected: spec.horizon_steps,
            got: rollout.horizon_steps(),
        });
    }
    Ok(assemble(rollout, spec, state_dim, action_dim, None))
}

pub(crate) fn assemble(
    rollout: &AutonomousRollout,
    spec: &HorizonSpec,
    dx: usize,
    da: usize,
    force: Option<Accumulation>,
) -> SensitivityMatrix {
    let t_e = spec.horizon_steps;
    let t_a = spec.action_steps;
    let s1 = spec.first_observed();
    let mut entries = DMatrix::zeros(dx * spec.observed_count(), da * t_a);
    let row_of = |s: usize| (t_e - s) * dx;
    let col_of = |r: usize| (t_a - 1 - r) * da;

    match force.unwrap_or_else(|| Accumulation::cheaper(spec, dx, da)) {
        Accumulation::Forward => {
            for r in 0..t_a {
                let mut m = rollout.gains[r].clone();
                for s in r + 1..=t_e {
                    if s >= s1 {
                        entries.view_mut((row_of(s), col_of(r)), (dx, da)).copy_from(&m);
                    }
                    if s < t_e {
                        m = &rollout.step_jacobians[s] * m;
                    }
                }
            }
        }
        Accumulation::Backward => {
            for s in s1..=t_e {
                // `left` holds J_{s−1} ⋯ J_{r+1}; starts as the identity for r = s − 1.
                let mut left = DMatrix::<f64>::identity(dx, dx);
                for r in (0..s).rev() {
                    if r < t_a {
                        let block = &left * &rollout.gains[r];
                        entries.view_mut((row_of(s), col_of(r)), (dx, da)).copy_from(&block);
                    }
                    if r == 0 {
                        break;
                    }
                    left *= &rollout.step_jacobians[r];
                }
            }
        }
    }

    SensitivityMatrix {
        entries,
        spec: *spec,
        state_dim: dx,
        action_dim: da,
    }
}

/// Stacks a reverse-time-ordered action sequence `(a_{T_a−1}, …, a_0)` into
/// the column vector that multiplies `F`.
pub fn stack_actions_reverse(actions: &[DVector<f64>]) -> DVector<f64> {
    let da = actions.first().map_or(0, |a| a.len());
    let mut out = DVector::zeros(da * actions.len());
    for (j, a) in actions.iter().rev().enumerate() {
        out.rows_mut(j * da, da).copy_from(a);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::step_deterministic;
    use crate::systems::{LinearTest, Pendulum, PendulumParams};
    use std::f64::consts::PI;

    fn v(xs: &[f64]) -> StateVector {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn horizon_validation() {
        assert!(HorizonSpec::new(1e-3, 10, 5, 5).is_ok());
        assert!(HorizonSpec::new(1e-3, 10, 6, 5).is_err());
        assert!(HorizonSpec::new(1e-3, 10, 0, 0).is_err());
        assert!(HorizonSpec::new(0.0, 10, 1, 0).is_err());
        let spec = HorizonSpec::new(1e-3, 10, 3, 2).unwrap();
        // s + n + r − 1 = T_e
        assert_eq!(spec.observed_count() + spec.gap_steps + spec.action_steps - 1, 10);
    }

    #[test]
    fn linear_rollout_jacobians_are_constant() {
        let lin = LinearTest::new(0.5);
        let spec = HorizonSpec::new(0.1, 7, 7, 0).unwrap();
        let ro = rollout_autonomous(&lin, &v(&[2.0]), &spec).unwrap();
        assert_eq!(ro.states.len(), 8);
        assert_eq!(ro.states[0][0], 2.0);
        for j in &ro.step_jacobians {
            assert_eq!(j[(0, 0)], 1.0 + 0.5 * 0.1);
        }
    }

    #[test]
    fn upright_pendulum_is_a_fixed_point() {
        let p = Pendulum::new(PendulumParams::default()).unwrap();
        let spec = HorizonSpec::new(1e-3, 50, 50, 0).unwrap();
        let ro = rollout_autonomous(&p, &v(&[0.0, 0.0]), &spec).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1e-3, 9.81e-3, 1.0]);
        assert!(ro.states.iter().all(|x| x.amax() == 0.0));
        assert!(ro.step_jacobians.iter().all(|j| (j - &expected).amax() < 1e-15));
        assert!(ro.step_jacobians.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn linear_sensitivities_are_geometric() {
        let lin = LinearTest::new(1.0);
        let spec = HorizonSpec::new(0.1, 5, 5, 0).unwrap();
        let ro = rollout_autonomous(&lin, &v(&[0.0]), &spec).unwrap();
        let m = action_sensitivity(&ro, 3, 0).unwrap();
        assert!((m[(0, 0)] - 0.121).abs() < 1e-15);
        assert_eq!(action_sensitivity(&ro, 2, 1).unwrap(), ro.gains[1]);

        let flat = LinearTest::new(0.0);
        let ro = rollout_autonomous(&flat, &v(&[0.0]), &spec).unwrap();
        for s in 1..=5 {
            for r in 0..s {
                assert_eq!(action_sensitivity(&ro, s, r).unwrap()[(0, 0)], 0.1);
            }
        }
    }

    #[test]
    fn sensitivity_index_errors() {
        let lin = LinearTest::new(1.0);
        let spec = HorizonSpec::new(0.1, 5, 5, 0).unwrap();
        let ro = rollout_autonomous(&lin, &v(&[0.0]), &spec).unwrap();
        assert!(matches!(
            action_sensitivity(&ro, 2, 2),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            action_sensitivity(&ro, 6, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    /// Finite difference through the nonlinear Euler rollout with a single
    /// perturbed action.
    fn fd_through_rollout(
        model: &dyn SystemModel,
        x0: &StateVector,
        dt: f64,
        s: usize,
        r: usize,
        h: f64,
    ) -> DMatrix<f64> {
        let da = model.action_dim();
        let mut cols = Vec::new();
        for k in 0..da {
            let run = |eps: f64| {
                let mut x = x0.clone();
                for t in 0..s {
                    let mut a = DVector::zeros(da);
                    if t == r {
                        a[k] = eps;
                    }
                    x = step_deterministic(model, &x, &a, dt).unwrap();
                }
                x
            };
            cols.push((run(h) - run(-h)) / (2.0 * h));
        }
        DMatrix::from_columns(&cols)
    }

    #[test]
    fn pendulum_sensitivity_matches_rollout_finite_difference() {
        let p = Pendulum::new(PendulumParams::default()).unwrap();
        let x0 = v(&[PI / 2.0, 0.0]);
        let spec = HorizonSpec::new(1e-3, 10, 10, 0).unwrap();
        let ro = rollout_autonomous(&p, &x0, &spec).unwrap();
        let analytic = action_sensitivity(&ro, 10, 0).unwrap();
        let numeric = fd_through_rollout(&p, &x0, 1e-3, 10, 0, 1e-6);
        let rel = (&analytic - &numeric).norm() / analytic.norm();
        assert!(rel < 1e-3, "relative error {rel}");
    }

    #[test]
    fn both_accumulation_orders_match_entrywise_sensitivities() {
        let p = Pendulum::new(PendulumParams::default()).unwrap();
        let x0 = v(&[2.0, -0.7]);
        for t_e in 1..=5 {
            for t_a in 1..=t_e {
                for n in 0..=(t_e - t_a) {
                    let spec = HorizonSpec::new(0.05, t_e, t_a, n).unwrap();
                    let ro = rollout_autonomous(&p, &x0, &spec).unwrap();
                    for acc in [Accumulation::Forward, Accumulation::Backward] {
                        let f = assemble(&ro, &spec, 2, 1, Some(acc));
                        assert_eq!(f.entries.nrows(), 2 * spec.observed_count());
                        assert_eq!(f.entries.ncols(), t_a);
                        for i in 0..spec.observed_count() {
                            for j in 0..t_a {
                                let s = f.state_index(i);
                                let r = f.action_index(j);
                                let expected = action_sensitivity(&ro, s, r).unwrap();
                                let got = f.block(i, j);
                                assert!(
                                    (&got - &expected).amax() <= 1e-15 * expected.amax().max(1.0),
                                    "{acc:?} T_e={t_e} T_a={t_a} n={n} block ({i},{j})"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn single_step_horizon_is_the_gain() {
        let p = Pendulum::new(PendulumParams::default()).unwrap();
        let spec = HorizonSpec::new(1e-3, 1, 1, 0).unwrap();
        let f = build_sensitivity_matrix(&p, &v(&[0.3, 0.2]), &spec).unwrap();
        assert_eq!(f.entries, p.gain(&v(&[0.3, 0.2])) * 1e-3);
    }

    #[test]
    fn zero_gain_gives_zero_matrix() {
        let lin = LinearTest::with_gain(0.3, 0.0);
        let spec = HorizonSpec::new(0.01, 20, 4, 3).unwrap();
        let f = build_sensitivity_matrix(&lin, &v(&[1.0]), &spec).unwrap();
        assert_eq!(f.entries.shape(), (14, 4));
        assert!(f.entries.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn action_stacking_is_reverse_time() {
        let acts = vec![v(&[1.0]), v(&[2.0]), v(&[3.0])];
        assert_eq!(stack_actions_reverse(&acts).as_slice(), &[3.0, 2.0, 1.0]);
    }
}

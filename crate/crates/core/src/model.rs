//! Controlled dynamical systems and their explicit time discretization.
//!
//! A system evolves as `dx = f(x) dt + g(x) da + dη`. The discrete map used
//! everywhere in this crate is the explicit Euler map
//! `x ↦ x + f(x)·dt + g(x)·a·dt`, whose state Jacobian is `I + ∇f(x)·dt`
//! and whose per-step control influence is `g(x)·dt`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateVector = DVector<f64>;
pub type ActionVector = DVector<f64>;

/// A controlled system `dx = f(x) dt + g(x) da`.
///
/// Implementations must be pure: the same input always yields the same
/// output, so models can be shared across worker threads.
pub trait SystemModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn action_dim(&self) -> usize;

    /// Drift `f(x)`.
    fn drift(&self, x: &StateVector) -> StateVector;

    /// Control gain `g(x)`, a `state_dim × action_dim` matrix.
    fn gain(&self, x: &StateVector) -> DMatrix<f64>;

    /// Analytic Jacobian `∇f(x)`.
    fn drift_jacobian(&self, x: &StateVector) -> DMatrix<f64>;

    fn state_names(&self) -> Vec<String>;

    fn action_names(&self) -> Vec<String> {
        (0..self.action_dim()).map(|i| format!("a{i}")).collect()
    }

    /// State components that are angles; wrapped to (-π, π] for display and
    /// success tests, never inside the dynamics.
    fn angle_indices(&self) -> Vec<usize> {
        Vec::new()
    }
}

/// Noise levels for simulation and observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Scale of the Wiener increment per √s, entering through the control gain.
    pub process_std: f64,
    /// Standard deviation of the Gaussian observation noise.
    pub obs_std: f64,
}

impl NoiseSpec {
    pub fn new(process_std: f64, obs_std: f64) -> Result<Self> {
        let spec = NoiseSpec { process_std, obs_std };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.process_std >= 0.0) || !self.process_std.is_finite() {
            return Err(Error::invalid(
                "process_std",
                format!("must be finite and >= 0, got {}", self.process_std),
            ));
        }
        if !(self.obs_std > 0.0) || !self.obs_std.is_finite() {
            return Err(Error::invalid(
                "obs_std",
                format!("must be finite and > 0, got {}", self.obs_std),
            ));
        }
        Ok(())
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            process_std: 0.01,
            obs_std: 1.0,
        }
    }
}

pub(crate) fn check_state(model: &dyn SystemModel, x: &StateVector) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "state",
            expected: model.state_dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("input state"));
    }
    Ok(())
}

pub(crate) fn check_action(model: &dyn SystemModel, a: &ActionVector) -> Result<()> {
    if a.len() != model.action_dim() {
        return Err(Error::DimensionMismatch {
            what: "action",
            expected: model.action_dim(),
            got: a.len(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("action", "components must be finite"));
    }
    Ok(())
}

pub(crate) fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("dt", format!("must be finite and > 0, got {dt}")))
    }
}

fn finite_or_err(x: StateVector) -> Result<StateVector> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::non_finite("integrator output; dt may be too coarse"))
    }
}

/// One explicit Euler step: `x + f(x)·dt + g(x)·a·dt`.
pub fn step_deterministic(model: &dyn SystemModel, x: &StateVector, a: &ActionVector, dt: f64) -> Result<StateVector> {
    check_state(model, x)?;
    check_action(model, a)?;
    check_dt(dt)?;
    finite_or_err(euler(model, x, a, dt))
}

fn euler(model: &dyn SystemModel, x: &StateVector, a: &ActionVector, dt: f64) -> StateVector {
    let mut next = x + model.drift(x) * dt;
    next += model.gain(x) * a * dt;
    next
}

/// One Euler–Maruyama step. Process noise enters through the control gain:
/// the deterministic step plus `g(x)·ξ` with `ξ ~ N(0, process_std²·dt)` per
/// action channel. With `process_std == 0` no random numbers are drawn and
/// the result equals [`step_deterministic`] exactly.
pub fn step_stochastic<R: Rng + ?Sized>(
    model: &dyn SystemModel,
    x: &StateVector,
    a: &ActionVector,
    dt: f64,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<StateVector> {
    check_state(model, x)?;
    check_action(model, a)?;
    check_dt(dt)?;
    noise.validate()?;
    let mut next = euler(model, x, a, dt);
    if noise.process_std > 0.0 {
        let scale = noise.process_std * dt.sqrt();
        let xi = DVector::from_fn(model.action_dim(), |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        next += model.gain(x) * xi;
    }
    finite_or_err(next)
}

/// Central-difference Jacobian of `f` at `x`, column `j` being
/// `(f(x + h·e_j) − f(x − h·e_j)) / 2h`.
pub fn finite_diff_jacobian<F>(f: F, x: &StateVector, h: f64) -> DMatrix<f64>
where
    F: Fn(&StateVector) -> StateVector,
{
    let n = x.len();
    let mut columns = Vec::with_capacity(n);
    for j in 0..n {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += h;
        minus[j] -= h;
        columns.push((f(&plus) - f(&minus)) / (2.0 * h));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, n, |i, j| columns[j][i])
}

/// Default step for [`finite_diff_jacobian`]: `1e-6·max(1, |x|∞)`.
pub fn default_fd_step(x: &StateVector) -> f64 {
    1e-6 * x.amax().max(1.0)
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = theta.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

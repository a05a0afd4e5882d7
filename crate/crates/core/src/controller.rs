//! Greedy empowerment maximization: at each decision step pick the action
//! whose successor state has the largest empowerment, hold it for one
//! decision interval, repeat.

use std::cmp::Ordering;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{variant_empowerment, ChannelSpec, Variant};
use crate::error::{Error, Result};
use crate::model::{
    check_dt, check_state, step_deterministic, step_stochastic, ActionVector, NoiseSpec, StateVector, SystemModel,
};
use crate::sensitivity::HorizonSpec;

/// Default interval between decisions, in seconds. Shorter intervals let the
/// single pendulum overshoot the upright into continuous rotation.
pub const DEFAULT_DECISION_DT: f64 = 0.25;

/// Upper bound on the number of candidate actions per decision.
pub const MAX_CANDIDATES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPolicySpec {
    pub variant: Variant,
    pub horizon: HorizonSpec,
    pub channel: ChannelSpec,
    /// Box bound `‖a‖∞ ≤ action_bound` on executed actions.
    pub action_bound: f64,
    /// Grid points per action dimension; odd so that zero is included.
    pub action_grid_size: usize,
    /// Interval `Δt′` between decisions, in seconds.
    pub decision_dt: f64,
    /// Integration step used while an action is held.
    pub sim_dt: f64,
    /// Successor samples averaged per candidate; 1 uses the noise-free successor.
    pub expectation_samples: usize,
}

impl ControlPolicySpec {
    /// Policy with the default action grid and timing for a variant with
    /// the given horizon.
    pub fn for_variant(variant: Variant, dt: f64, horizon_steps: usize, channel: ChannelSpec) -> Result<Self> {
        let spec = ControlPolicySpec {
            variant,
            horizon: variant.horizon(dt, horizon_steps)?,
            channel,
            action_bound: 1.0,
            action_grid_size: 21,
            decision_dt: DEFAULT_DECISION_DT,
            sim_dt: 1e-3,
            expectation_samples: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.horizon.validate()?;
        self.channel.validate()?;
        if !self.variant.matches(&self.horizon) {
            return Err(Error::invalid(
                "variant",
                format!("horizon indices do not match the `{}` variant", self.variant.name()),
            ));
        }
        if !(self.action_bound > 0.0) || !self.action_bound.is_finite() {
            return Err(Error::invalid("action_bound", "must be finite and > 0"));
        }
        if self.action_grid_size < 3 || self.action_grid_size.is_multiple_of(2) {
            return Err(Error::invalid("action_grid_size", "must be odd and >= 3"));
        }
        check_dt(self.decision_dt).map_err(|_| Error::invalid("decision_dt", "must be finite and > 0"))?;
        check_dt(self.sim_dt).map_err(|_| Error::invalid("sim_dt", "must be finite and > 0"))?;
        if self.decision_dt < self.sim_dt {
            return Err(Error::invalid("decision_dt", "must be >= sim_dt"));
        }
        substeps(self.decision_dt, self.sim_dt)?;
        if self.expectation_samples == 0 {
            return Err(Error::invalid("expectation_samples", "must be >= 1"));
        }
        Ok(())
    }

    fn value(&self, model: &dyn SystemModel, x: &StateVector) -> Result<f64> {
        Ok(variant_empowerment(model, x, self.variant, &self.horizon, &self.channel)?.value_nats)
    }
}

/// Number of `fine` steps in `coarse`, which must be an integer multiple.
pub(crate) fn substeps(coarse: f64, fine: f64) -> Result<usize> {
    let ratio = coarse / fine;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
        return Err(Error::invalid(
            "sim_dt",
            format!("{coarse} is not an integer multiple of {fine}"),
        ));
    }
    Ok(n as usize)
}

/// Uniform grid over `[−bound, bound]` per action dimension, Cartesian
/// product across dimensions, first dimension varying slowest.
pub fn candidate_actions(spec: &ControlPolicySpec, action_dim: usize) -> Result<Vec<ActionVector>> {
    let n = spec.action_grid_size;
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::invalid("action_grid_size", "must be odd and >= 3"));
    }
    let count = (0..action_dim).try_fold(1usize, |acc, _| acc.checked_mul(n));
    let count = match count {
        Some(c) if c <= MAX_CANDIDATES => c,
        other => {
            return Err(Error::GridTooLarge {
                count: other.unwrap_or(usize::MAX),
                limit: MAX_CANDIDATES,
            })
        }
    };
    let mid = (n - 1) / 2;
    let bound = spec.action_bound;
    let levels: Vec<f64> = (0..n)
        .map(|i| match i.cmp(&mid) {
            Ordering::Equal => 0.0,
            _ if i == 0 => -bound,
            _ if i == n - 1 => bound,
            _ => bound * (i as f64 - mid as f64) / mid as f64,
        })
        .collect();

    let mut out = Vec::with_capacity(count);
    for flat in 0..count {
        let mut rem = flat;
        let mut a = DVector::zeros(action_dim);
        for d in (0..action_dim).rev() {
            a[d] = levels[rem % n];
            rem /= n;
        }
        out.push(a);
    }
    Ok(out)
}

/// Orders candidates by value (descending), then by `‖a‖₂` (ascending), then
/// lexicographically.
fn prefer(a: &(ActionVector, f64), b: &(ActionVector, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| a.0.norm_squared().total_cmp(&b.0.norm_squared()))
        .then_with(|| {
            a.0.iter()
                .zip(b.0.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

fn select(mut scored: Vec<(ActionVector, f64)>) -> (ActionVector, f64) {
    scored.sort_by(prefer);
    scored.swap_remove(0)
}

/// The action maximizing empowerment at the noise-free successor
/// `x + (f(x) + g(x)·a)·decision_dt`.
pub fn greedy_action(
    model: &dyn SystemModel,
    x: &StateVector,
    spec: &ControlPolicySpec,
) -> Result<(ActionVector, f64)> {
    greedy_action_averaged(model, x, spec, &[])
}

/// Like [`greedy_action`] but averages empowerment over successors shifted
/// by `g(x)·ξ` for each perturbation `ξ`. The same perturbations are used
/// for every candidate. An empty slice means the noise-free successor.
pub fn greedy_action_averaged(
    model: &dyn SystemModel,
    x: &StateVector,
    spec: &ControlPolicySpec,
    perturbations: &[ActionVector],
) -> Result<(ActionVector, f64)> {
    check_state(model, x)?;
    let candidates = candidate_actions(spec, model.action_dim())?;
    let gain = model.gain(x);
    let scored: Result<Vec<(ActionVector, f64)>> = candidates
        .into_par_iter()
        .map(|a| {
            let next = step_deterministic(model, x, &a, spec.decision_dt)?;
            let value = if perturbations.is_empty() {
                spec.value(model, &next)?
            } else {
                let mut total = 0.0;
                for xi in perturbations {
                    total += spec.value(model, &(&next + &gain * xi))?;
                }
                total / perturbations.len() as f64
            };
            Ok((a, value))
        })
        .collect();
    Ok(select(scored?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
    /// Decision times in seconds.
    pub times: Vec<f64>,
    /// State at each decision time.
    pub states: Vec<Vec<f64>>,
    /// Action chosen at each decision time and held until the next.
    pub actions: Vec<Vec<f64>>,
    /// Empowerment of the chosen successor at each decision.
    pub empowerment_trace: Vec<f64>,
    /// State after the last held action.
    pub final_state: Vec<f64>,
    pub failed: bool,
    pub failure: Option<String>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Closed-loop simulation of the greedy controller for `duration_s`.
///
/// Each decision holds the greedy action for `decision_dt`, integrating with
/// Euler–Maruyama at `sim_dt`. A non-finite state stops the loop and returns
/// the partial rollout with `failed` set.
pub fn run_rollout(
    model: &dyn SystemModel,
    x0: &StateVector,
    duration_s: f64,
    spec: &ControlPolicySpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Rollout> {
    run_rollout_observed(model, x0, duration_s, spec, noise, seed, &mut |_, _| {})
}

/// [`run_rollout`] that also reports `(t, x)` at the start and after every
/// integration step, for checks finer than the decision interval.
pub fn run_rollout_observed(
    model: &dyn SystemModel,
    x0: &StateVector,
    duration_s: f64,
    spec: &ControlPolicySpec,
    noise: &NoiseSpec,
    seed: u64,
    observer: &mut dyn FnMut(f64, &StateVector),
) -> Result<Rollout> {
    spec.validate()?;
    noise.validate()?;
    check_state(model, x0)?;
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::invalid("duration_s", "must be finite and > 0"));
    }
    let decisions = substeps(duration_s, spec.decision_dt)
        .map_err(|_| Error::invalid("duration_s", "must be a multiple of decision_dt"))?;
    let inner = substeps(spec.decision_dt, spec.sim_dt)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Rollout {
        state_names: model.state_names(),
        action_names: model.action_names(),
        times: Vec::with_capacity(decisions),
        states: Vec::with_capacity(decisions),
        actions: Vec::with_capacity(decisions),
        empowerment_trace: Vec::with_capacity(decisions),
        final_state: Vec::new(),
        failed: false,
        failure: None,
    };

    let mut x = x0.clone();
    observer(0.0, &x);
    'decide: for k in 0..decisions {
        let perturbations = sample_perturbations(model, spec, noise, &mut rng);
        let (action, value) = match greedy_action_averaged(model, &x, spec, &perturbations) {
            Ok(choice) => choice,
            Err(e @ Error::NonFiniteState { .. }) => {
                out.failed = true;
                out.failure = Some(e.to_string());
                break 'decide;
            }
            Err(e) => return Err(e),
        };
        out.times.push(k as f64 * spec.decision_dt);
        out.states.push(x.iter().copied().collect());
        out.actions.push(action.iter().copied().collect());
        out.empowerment_trace.push(value);
        for i in 0..inner {
            match step_stochastic(model, &x, &action, spec.sim_dt, noise, &mut rng) {
                Ok(next) => {
                    x = next;
                    observer((k * inner + i + 1) as f64 * spec.sim_dt, &x);
                }
                Err(e) => {
                    out.failed = true;
                    out.failure = Some(e.to_string());
                    break 'decide;
                }
            }
        }
    }
    out.final_state = x.iter().copied().collect();
    Ok(out)
}

fn sample_perturbations(
    model: &dyn SystemModel,
    spec: &ControlPolicySpec,
    noise: &NoiseSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<ActionVector> {
    if spec.expectation_samples <= 1 || noise.process_std == 0.0 {
        return Vec::new();
    }
    let scale = noise.process_std * spec.decision_dt.sqrt();
    (0..spec.expectation_samples)
        .map(|_| DVector::from_fn(model.action_dim(), |_, _| scale * rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

//! Generalized empowerment as the capacity of the linear Gaussian channel
//! `Δx = F·Δa + η̃`.
//!
//! The capacity is `½ Σ ln(1 + γ_i σ_i)` maximized over channel powers
//! `σ_i ≥ 0` with `Σ σ_i = P`, where the channel gains `γ_i` are the
//! noise-scaled singular values `ρ_i` of `F` ([`CapacityConvention::Paper`])
//! or their squares ([`CapacityConvention::Squared`]).
//!
//! `P` is the energy of the control signal over the control window, so a
//! discrete action sequence satisfies `Σ a_k²·dt = P`. In terms of the
//! discrete matrix this divides the singular values by `√dt`, which makes
//! the capacity converge to a finite value as `dt → 0` at a fixed physical
//! horizon.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_dt, check_state, StateVector, SystemModel};
use crate::sensitivity::{build_sensitivity_matrix, HorizonSpec};

/// Relative threshold below which singular values are treated as zero.
pub const SINGULAR_VALUE_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityConvention {
    /// Channel gain `ρ_i`, the noise-scaled singular value itself.
    #[default]
    Paper,
    /// Channel gain `ρ_i²`, the textbook Gaussian-channel form.
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Control energy budget `P` over the control window.
    pub power: f64,
    /// Standard deviation of the effective Gaussian noise, including
    /// observation noise.
    pub noise_std: f64,
    #[serde(default)]
    pub convention: CapacityConvention,
}

impl ChannelSpec {
    pub fn new(power: f64, noise_std: f64) -> Result<Self> {
        let spec = ChannelSpec {
            power,
            noise_std,
            convention: CapacityConvention::Paper,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_convention(mut self, convention: CapacityConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power >= 0.0) || !self.power.is_finite() {
            return Err(Error::invalid(
                "power",
                format!("must be finite and >= 0, got {}", self.power),
            ));
        }
        if !(self.noise_std > 0.0) || !self.noise_std.is_finite() {
            return Err(Error::invalid(
                "noise_std",
                format!("must be finite and > 0, got {}", self.noise_std),
            ));
        }
        Ok(())
    }
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec {
            power: 1.0,
            noise_std: 1.0,
            convention: CapacityConvention::Paper,
        }
    }
}

/// Optimal split of the power budget across parallel channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    /// `σ_i`, aligned with the channel gains it was computed for.
    pub channel_powers: Vec<f64>,
    /// Water level `μ`; zero when no channel can carry information.
    pub water_level: f64,
    pub active_count: usize,
}

impl PowerAllocation {
    fn empty(n: usize) -> Self {
        PowerAllocation {
            channel_powers: vec![0.0; n],
            water_level: 0.0,
            active_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpowermentResult {
    pub value_nats: f64,
    /// Noise-scaled singular values `ρ_i`, descending.
    pub singular_values: Vec<f64>,
    pub allocation: PowerAllocation,
    pub spec: HorizonSpec,
    pub state: Vec<f64>,
}

/// Singular values of `f` divided by `noise_std`, sorted descending, with
/// values below `1e-12·max` set to zero.
pub fn scaled_singular_values(f: &DMatrix<f64>, noise_std: f64) -> Result<Vec<f64>> {
    if !(noise_std > 0.0) {
        return Err(Error::invalid("noise_std", "must be > 0"));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("sensitivity matrix"));
    }
    if f.is_empty() {
        return Ok(Vec::new());
    }
    let svd = f
        .clone()
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let mut values: Vec<f64> = svd.singular_values.iter().map(|s| s / noise_std).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    truncate_small(&mut values);
    Ok(values)
}

fn truncate_small(values: &mut [f64]) {
    let max = values.first().copied().unwrap_or(0.0);
    for v in values.iter_mut() {
        if *v < SINGULAR_VALUE_CUTOFF * max || *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Maps noise-scaled singular values to channel gains.
pub fn channel_gains(rho: &[f64], convention: CapacityConvention) -> Vec<f64> {
    match convention {
        CapacityConvention::Paper => rho.to_vec(),
        CapacityConvention::Squared => rho.iter().map(|r| r * r).collect(),
    }
}

/// Water-filling over channel gains sorted descending.
///
/// Tries `k = 1, 2, …` active channels with `μ_k = (P + Σ_{i≤k} 1/γ_i)/k` and
/// keeps the largest `k` whose weakest channel still lies below the water
/// level. Channels with zero gain never receive power; if every gain is zero
/// the allocation is empty.
pub fn water_fill(gains: &[f64], power: f64) -> Result<PowerAllocation> {
    if !(power >= 0.0) || !power.is_finite() {
        return Err(Error::invalid("power", format!("must be finite and >= 0, got {power}")));
    }
    if gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::invalid("gains", "must be finite and >= 0"));
    }
    if gains.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid("gains", "must be sorted descending"));
    }
    let usable = gains.iter().take_while(|&&g| g > 0.0).count();
    if usable == 0 {
        return Ok(PowerAllocation::empty(gains.len()));
    }

    let mut floor_sum = 0.0;
    let mut active = 0;
    let mut level = 1.0 / gains[0];
    for (k, &g) in gains[..usable].iter().enumerate() {
        let floor = 1.0 / g;
        let candidate = (power + floor_sum + floor) / (k + 1) as f64;
        if candidate > floor {
            floor_sum += floor;
            active = k + 1;
            level = candidate;
        } else {
            break;
        }
    }

    let channel_powers = gains
        .iter()
        .enumerate()
        .map(|(i, &g)| if i < active { level - 1.0 / g } else { 0.0 })
        .collect();
    Ok(PowerAllocation {
        channel_powers,
        water_level: level,
        active_count: active,
    })
}

/// `½ Σ ln(1 + γ_i σ_i)`.
pub fn capacity_nats(gains: &[f64], allocation: &PowerAllocation) -> f64 {
    0.5 * gains
        .iter()
        .zip(&allocation.channel_powers)
        .map(|(g, s)| (g * s).ln_1p())
        .sum::<f64>()
}

/// Builds the result from noise-scaled singular values already normalized to
/// the control-energy budget.
fn empowerment_from_rho(
    rho: Vec<f64>,
    channel: &ChannelSpec,
    spec: &HorizonSpec,
    x0: &StateVector,
) -> Result<EmpowermentResult> {
    let gains = channel_gains(&rho, channel.convention);
    let allocation = water_fill(&gains, channel.power)?;
    let value_nats = capacity_nats(&gains, &allocation);
    if !value_nats.is_finite() {
        return Err(Error::non_finite("capacity"));
    }
    Ok(EmpowermentResult {
        value_nats,
        singular_values: rho,
        allocation,
        spec: *spec,
        state: x0.iter().copied().collect(),
    })
}

/// Empowerment between the actions `a_0 … a_{T_a−1}` and the states
/// `x̄_{T_a+n} … x̄_{T_e}`.
pub fn generalized_empowerment(
    model: &dyn SystemModel,
    x0: &StateVector,
    spec: &HorizonSpec,
    channel: &ChannelSpec,
) -> Result<EmpowermentResult> {
    channel.validate()?;
    let f = build_sensitivity_matrix(model, x0, spec)?;
    let rho = scaled_singular_values(&f.entries, channel.noise_std * spec.dt.sqrt())?;
    empowerment_from_rho(rho, channel, spec, x0)
}

/// Which slice of the sensitivity matrix drives the empowerment value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Variant {
    /// All actions against the final state: `T_a = T_e`, `n = 0`.
    Classic,
    /// One initial action against the whole trajectory: `T_a = 1`, `n = 0`.
    KickedCef,
    /// One initial action against the final state: `T_a = 1`, `n = T_e − 1`.
    ControlledLyapunov,
    Generalized {
        action_steps: usize,
        gap_steps: usize,
    },
}

impl Variant {
    pub fn horizon(&self, dt: f64, horizon_steps: usize) -> Result<HorizonSpec> {
        let (t_a, n) = match *self {
            Variant::Classic => (horizon_steps, 0),
            Variant::KickedCef => (1, 0),
            Variant::ControlledLyapunov => (1, horizon_steps.saturating_sub(1)),
            Variant::Generalized {
                action_steps,
                gap_steps,
            } => (action_steps, gap_steps),
        };
        HorizonSpec::new(dt, horizon_steps, t_a, n)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Classic => "classic",
            Variant::KickedCef => "kicked_cef",
            Variant::ControlledLyapunov => "controlled_lyapunov",
            Variant::Generalized { .. } => "generalized",
        }
    }

    /// True when `spec` has the index shape this variant prescribes.
    pub fn matches(&self, spec: &HorizonSpec) -> bool {
        self.horizon(spec.dt, spec.horizon_steps)
            .map(|h| h == *spec)
            .unwrap_or(false)
    }
}

pub fn classic_empowerment(
    model: &dyn SystemModel,
    x0: &StateVector,
    horizon_steps: usize,
    dt: f64,
    channel: &ChannelSpec,
) -> Result<EmpowermentResult> {
    let spec = Variant::Classic.horizon(dt, horizon_steps)?;
    generalized_empowerment(model, x0, &spec, channel)
}

pub fn kicked_cef(
    model: &dyn SystemModel,
    x0: &StateVector,
    horizon_steps: usize,
    dt: f64,
    channel: &ChannelSpec,
) -> Result<EmpowermentResult> {
    let spec = Variant::KickedCef.horizon(dt, horizon_steps)?;
    generalized_empowerment(model, x0, &spec, channel)
}

/// Empowerment of `variant` over `horizon`. The controlled-Lyapunov variant
/// goes through the renormalized product so long horizons stay finite.
pub fn variant_empowerment(
    model: &dyn SystemModel,
    x0: &StateVector,
    variant: Variant,
    horizon: &HorizonSpec,
    channel: &ChannelSpec,
) -> Result<EmpowermentResult> {
    if !variant.matches(horizon) {
        return Err(Error::invalid(
            "variant",
            format!("horizon indices do not match the `{}` variant", variant.name()),
        ));
    }
    match variant {
        Variant::ControlledLyapunov => {
            Ok(controlled_lyapunov(model, x0, horizon.horizon_steps, horizon.dt, channel)?.empowerment)
        }
        _ => generalized_empowerment(model, x0, horizon, channel),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovResult {
    /// Empowerment of the single block `∂x̄_{T_e}/∂a_0`.
    pub empowerment: EmpowermentResult,
    /// Controlled Lyapunov exponents in 1/s, descending; one per
    /// controllable direction (`min(d_x, d_a)` entries).
    pub exponents: Vec<f64>,
    /// Set when a singular value vanished, leaving a `−∞` exponent.
    pub unreliable: bool,
}

const RESCALE_HIGH: f64 = 1e100;
const RESCALE_LOW: f64 = 1e-100;

/// Controlled Lyapunov exponents `ln ς_i(M) / (T_e·dt)` where
/// `M = J_{T_e−1} ⋯ J_1 · g(x̄_0)` is the impulse response of the state at
/// `T_e` to the first action, together with the empowerment of that block.
///
/// The product is renormalized as it grows so that long horizons neither
/// overflow nor underflow.
pub fn controlled_lyapunov(
    model: &dyn SystemModel,
    x0: &StateVector,
    horizon_steps: usize,
    dt: f64,
    channel: &ChannelSpec,
) -> Result<LyapunovResult> {
    channel.validate()?;
    check_dt(dt)?;
    check_state(model, x0)?;
    let spec = Variant::ControlledLyapunov.horizon(dt, horizon_steps)?;
    let n = model.state_dim();
    let identity = DMatrix::<f64>::identity(n, n);

    let mut m = model.gain(x0);
    let mut log_scale = 0.0;
    let mut x = x0 + model.drift(x0) * dt;
    for step in 1..horizon_steps {
        let jac = &identity + model.drift_jacobian(&x) * dt;
        m = jac * m;
        x += model.drift(&x) * dt;
        if x.iter().any(|v| !v.is_finite()) || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("lyapunov rollout step {step}")));
        }
        let size = m.amax();
        if size > RESCALE_HIGH || (size > 0.0 && size < RESCALE_LOW) {
            m /= size;
            log_scale += size.ln();
        }
    }

    let k = n.min(model.action_dim());
    let raw = scaled_singular_values(&m, 1.0)?;
    let duration = horizon_steps as f64 * dt;
    let exponents: Vec<f64> = raw[..k]
        .iter()
        .map(|&s| {
            if s > 0.0 {
                (s.ln() + log_scale) / duration
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let unreliable = exponents.iter().any(|e| !e.is_finite());

    // Singular values of the block F = M·dt, energy-normalized by √dt.
    let log_factor = log_scale + 0.5 * dt.ln() - channel.noise_std.ln();
    let rho: Vec<f64> = raw
        .iter()
        .map(|&s| if s > 0.0 { (s.ln() + log_factor).exp() } else { 0.0 })
        .collect();
    let empowerment = empowerment_from_rho(rho, channel, &spec, x0)?;
    Ok(LyapunovResult {
        empowerment,
        exponents,
        unreliable,
    })
}

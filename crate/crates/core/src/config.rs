//! Run configuration: a TOML document with flat sections, validated into
//! the types the computational modules consume.
//!
//! Any key may be overridden from the environment as
//! `EMPOWER__<SECTION>__<KEY>=<toml value>`, e.g.
//! `EMPOWER__CONTROL__SEED=7` or `EMPOWER__SYSTEM__KIND=cartpole`.

use std::f64::consts::PI;

use serde::Deserialize;

use crate::capacity::{CapacityConvention, ChannelSpec, Variant};
use crate::controller::{ControlPolicySpec, DEFAULT_DECISION_DT};
use crate::error::{Error, ParseError, Result};
use crate::landscape::GridSpec;
use crate::model::{NoiseSpec, StateVector, SystemModel};
use crate::sensitivity::HorizonSpec;
use crate::systems::{
    CartPole, CartPoleParams, DoublePendulum, DoublePendulumParams, LinearTest, Pendulum, PendulumParams,
};

/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "EMPOWER__";

#[derive(Debug, Clone, PartialEq)]
pub enum SystemConfig {
    Pendulum(PendulumParams),
    DoublePendulum(DoublePendulumParams),
    CartPole(CartPoleParams),
    Linear { alpha: f64, gain: f64 },
}

impl SystemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            SystemConfig::Pendulum(_) => "pendulum",
            SystemConfig::DoublePendulum(_) => "double_pendulum",
            SystemConfig::CartPole(_) => "cartpole",
            SystemConfig::Linear { .. } => "linear",
        }
    }

    pub fn build(&self) -> Result<Box<dyn SystemModel>> {
        Ok(match *self {
            SystemConfig::Pendulum(p) => Box::new(Pendulum::new(p)?),
            SystemConfig::DoublePendulum(p) => Box::new(DoublePendulum::new(p)?),
            SystemConfig::CartPole(p) => Box::new(CartPole::new(p)?),
            SystemConfig::Linear { alpha, gain } => Box::new(LinearTest::with_gain(alpha, gain)),
        })
    }

    fn default_state(&self) -> Vec<f64> {
        match self {
            SystemConfig::Pendulum(_) => vec![PI, 0.0],
            SystemConfig::DoublePendulum(_) => vec![PI, 0.0, 0.0, 0.0],
            SystemConfig::CartPole(_) => vec![0.0, PI, 0.0, 0.0],
            SystemConfig::Linear { .. } => vec![1.0],
        }
    }

    fn default_grid(&self) -> GridSpec {
        match self {
            SystemConfig::Pendulum(_) => GridSpec::plane([(-PI, PI), (-2.0 * PI, 2.0 * PI)], [101, 101]),
            SystemConfig::DoublePendulum(_) => GridSpec {
                axes: [0, 1],
                ranges: [(-PI, PI), (-PI, PI)],
                resolution: [101, 101],
                fixed_values: vec![0.0, 0.0],
            },
            SystemConfig::CartPole(_) => GridSpec {
                axes: [1, 3],
                ranges: [(-PI, PI), (-2.0 * PI, 2.0 * PI)],
                resolution: [101, 101],
                fixed_values: vec![0.0, 0.0],
            },
            SystemConfig::Linear { .. } => GridSpec::plane([(-1.0, 1.0), (-1.0, 1.0)], [101, 101]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub t_e_s: f64,
    pub dt_list: Vec<f64>,
    /// Evaluation state; `None` means the maximum of the configured grid.
    pub state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovConfig {
    pub horizon_steps: usize,
    pub dt: f64,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
    pub svg: bool,
    /// Run a rollout from the initial state and draw it over the heatmap.
    pub overlay_rollout: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub initial_state: Vec<f64>,
    pub variant: Variant,
    pub horizon: HorizonSpec,
    pub channel: ChannelSpec,
    pub policy: ControlPolicySpec,
    pub noise: NoiseSpec,
    pub duration_s: f64,
    pub seed: u64,
    pub grid: GridSpec,
    pub convergence: ConvergenceConfig,
    pub lyapunov: LyapunovConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn initial_state(&self) -> StateVector {
        StateVector::from_column_slice(&self.initial_state)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<RawSystem>,
    empowerment: Option<RawEmpowerment>,
    control: Option<RawControl>,
    grid: Option<RawGrid>,
    convergence: Option<RawConvergence>,
    lyapunov: Option<RawLyapunov>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    kind: Option<String>,
    initial_state: Option<Vec<f64>>,
    gravity: Option<f64>,
    mass: Option<f64>,
    length: Option<f64>,
    m1: Option<f64>,
    m2: Option<f64>,
    l1: Option<f64>,
    l2: Option<f64>,
    lc1: Option<f64>,
    lc2: Option<f64>,
    i1: Option<f64>,
    i2: Option<f64>,
    cart_mass: Option<f64>,
    pole_mass: Option<f64>,
    pole_length: Option<f64>,
    alpha: Option<f64>,
    gain: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEmpowerment {
    variant: Option<String>,
    dt: Option<f64>,
    horizon_steps: Option<usize>,
    action_steps: Option<usize>,
    gap_steps: Option<usize>,
    power: Option<f64>,
    noise_std: Option<f64>,
    capacity_convention: Option<CapacityConvention>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    action_bound: Option<f64>,
    action_grid_size: Option<usize>,
    decision_dt: Option<f64>,
    sim_dt: Option<f64>,
    expectation_samples: Option<usize>,
    duration_s: Option<f64>,
    process_std: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    axes: Option<[usize; 2]>,
    ranges: Option<[[f64; 2]; 2]>,
    resolution: Option<[usize; 2]>,
    fixed_values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConvergence {
    t_e_s: Option<f64>,
    dt_list: Option<Vec<f64>>,
    state: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLyapunov {
    horizon_steps: Option<usize>,
    dt: Option<f64>,
    state: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    svg: Option<bool>,
    overlay_rollout: Option<bool>,
}

/// Locates keys in the source text for error messages.
struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn line_of(&self, key: &str) -> Option<usize> {
        let (section, name) = key.split_once('.')?;
        let mut current = "";
        for (n, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = header.trim();
                continue;
            }
            if current == section {
                if let Some(rest) = line.strip_prefix(name) {
                    if rest.trim_start().starts_with('=') {
                        return Some(n + 1);
                    }
                }
            }
        }
        None
    }

    fn error(&self, key: &str, reason: impl Into<String>) -> Error {
        Error::Config(ParseError {
            key: key.to_string(),
            reason: reason.into(),
            line: self.line_of(key),
        })
    }

    /// Re-labels a validation error from a computational module with the
    /// config key it came from.
    fn relabel(&self, key: &str) -> impl Fn(Error) -> Error + '_ {
        let key = key.to_string();
        move |e| match e {
            Error::Config(p) => Error::Config(p),
            other => self.error(&key, other.to_string()),
        }
    }
}

fn offset_to_line(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn toml_error(text: &str, e: toml::de::Error) -> Error {
    let message = e.message().to_string();
    let line = e.span().map(|s| offset_to_line(text, s.start));
    let name = message
        .split_once("unknown field `")
        .and_then(|(_, rest)| rest.split_once('`'))
        .map(|(k, _)| k.to_string())
        .or_else(|| {
            let raw = text.lines().nth(line? - 1)?;
            let (k, _) = raw.split_once('=')?;
            Some(k.trim().to_string())
        })
        .unwrap_or_default();
    let section = line.and_then(|l| {
        text.lines()
            .take(l)
            .filter_map(|raw| raw.trim().strip_prefix('[').and_then(|h| h.strip_suffix(']')))
            .last()
            .map(str::trim)
    });
    let key = match section {
        Some(sec) if !name.is_empty() && sec != name => format!("{sec}.{name}"),
        _ => name,
    };
    Error::Config(ParseError {
        key,
        reason: message,
        line,
    })
}

/// Applies `EMPOWER__SECTION__KEY=value` overrides from `vars` to `table`.
fn apply_overrides(table: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    for (name, raw) in vars {
        let Some(path) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let Some((section, key)) = path.split_once("__") else {
            return Err(Error::Config(ParseError {
                key: path.to_lowercase(),
                reason: format!("environment override `{name}` must name SECTION__KEY"),
                line: None,
            }));
        };
        let value = parse_override(&raw);
        let entry = table
            .entry(section.to_lowercase())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(key.to_lowercase(), value);
            }
            _ => {
                return Err(Error::Config(ParseError {
                    key: section.to_lowercase(),
                    reason: "is not a section".into(),
                    line: None,
                }))
            }
        }
    }
    Ok(())
}

/// Reads an override as a TOML value, falling back to a bare string.
fn parse_override(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Parses and validates a config document without consulting the
/// environment.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with_env(text, std::iter::empty())
}

/// Parses `text` with overrides taken from the process environment.
pub fn parse_config_from_env(text: &str) -> Result<RunConfig> {
    parse_config_with_env(text, std::env::vars())
}

pub fn parse_config_with_env(text: &str, vars: impl IntoIterator<Item = (String, String)>) -> Result<RunConfig> {
    // Deserializing straight from the text keeps source spans for errors;
    // overrides are applied to the parsed table afterwards.
    toml::from_str::<RawConfig>(text).map_err(|e| toml_error(text, e))?;
    let mut table: toml::Table = text.parse().map_err(|e| toml_error(text, e))?;
    apply_overrides(&mut table, vars)?;
    let raw: RawConfig = toml::Value::Table(table).try_into().map_err(|e| toml_error(text, e))?;
    build(raw, &Source { text })
}

fn check_state(src: &Source, key: &str, state: &[f64], dim: usize) -> Result<()> {
    if state.len() != dim {
        return Err(src.error(key, format!("expected {dim} components, got {}", state.len())));
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(src.error(key, "components must be finite"));
    }
    Ok(())
}

fn build_system(src: &Source, s: &RawSystem) -> Result<SystemConfig> {
    let kind = s.kind.as_deref().unwrap_or("pendulum");
    let given: [(&str, Option<f64>); 17] = [
        ("gravity", s.gravity),
        ("mass", s.mass),
        ("length", s.length),
        ("m1", s.m1),
        ("m2", s.m2),
        ("l1", s.l1),
        ("l2", s.l2),
        ("lc1", s.lc1),
        ("lc2", s.lc2),
        ("i1", s.i1),
        ("i2", s.i2),
        ("cart_mass", s.cart_mass),
        ("pole_mass", s.pole_mass),
        ("pole_length", s.pole_length),
        ("alpha", s.alpha),
        ("gain", s.gain),
        ("kind", None),
    ];
    let allowed: &[&str] = match kind {
        "pendulum" => &["gravity", "mass", "length"],
        "double_pendulum" => &["gravity", "m1", "m2", "l1", "l2", "lc1", "lc2", "i1", "i2"],
        "cartpole" => &["gravity", "cart_mass", "pole_mass", "pole_length"],
        "linear" => &["alpha", "gain"],
        other => {
            return Err(src.error(
                "system.kind",
                format!("unknown system `{other}` (expected pendulum, double_pendulum, cartpole or linear)"),
            ))
        }
    };
    for (name, value) in given {
        if value.is_some() && !allowed.contains(&name) {
            let key = format!("system.{name}");
            return Err(src.error(&key, format!("not a parameter of `{kind}`")));
        }
    }
    let system = match kind {
        "pendulum" => {
            let d = PendulumParams::default();
            SystemConfig::Pendulum(PendulumParams {
                mass: s.mass.unwrap_or(d.mass),
                length: s.length.unwrap_or(d.length),
                gravity: s.gravity.unwrap_or(d.gravity),
            })
        }
        "double_pendulum" => {
            let d = DoublePendulumParams::default();
            SystemConfig::DoublePendulum(DoublePendulumParams {
                m1: s.m1.unwrap_or(d.m1),
                m2: s.m2.unwrap_or(d.m2),
                l1: s.l1.unwrap_or(d.l1),
                l2: s.l2.unwrap_or(d.l2),
                lc1: s.lc1.unwrap_or(d.lc1),
                lc2: s.lc2.unwrap_or(d.lc2),
                i1: s.i1.unwrap_or(d.i1),
                i2: s.i2.unwrap_or(d.i2),
                gravity: s.gravity.unwrap_or(d.gravity),
            })
        }
        "cartpole" => {
            let d = CartPoleParams::default();
            SystemConfig::CartPole(CartPoleParams {
                cart_mass: s.cart_mass.unwrap_or(d.cart_mass),
                pole_mass: s.pole_mass.unwrap_or(d.pole_mass),
                pole_length: s.pole_length.unwrap_or(d.pole_length),
                gravity: s.gravity.unwrap_or(d.gravity),
            })
        }
        _ => SystemConfig::Linear {
            alpha: s.alpha.unwrap_or(0.0),
            gain: s.gain.unwrap_or(1.0),
        },
    };
    system.build().map_err(|e| match e {
        Error::InvalidParameter { name, reason } => src.error(&format!("system.{name}"), reason),
        other => src.error("system.kind", other.to_string()),
    })?;
    Ok(system)
}

fn parse_variant(src: &Source, name: &str, action_steps: Option<usize>, gap_steps: Option<usize>) -> Result<Variant> {
    let fixed = match name {
        "classic" => Variant::Classic,
        "kicked_cef" => Variant::KickedCef,
        "controlled_lyapunov" => Variant::ControlledLyapunov,
        "generalized" => {
            let action_steps = action_steps
                .ok_or_else(|| src.error("empowerment.action_steps", "required for the generalized variant"))?;
            return Ok(Variant::Generalized {
                action_steps,
                gap_steps: gap_steps.unwrap_or(0),
            });
        }
        other => {
            return Err(src.error(
                "empowerment.variant",
                format!("unknown variant `{other}` (expected classic, kicked_cef, controlled_lyapunov or generalized)"),
            ))
        }
    };
    Ok(fixed)
}

fn build(raw: RawConfig, src: &Source) -> Result<RunConfig> {
    let raw_system = raw.system.unwrap_or_default();
    let system = build_system(src, &raw_system)?;
    let dim = system.build()?.state_dim();
    let initial_state = raw_system
        .initial_state
        .clone()
        .unwrap_or_else(|| system.default_state());
    check_state(src, "system.initial_state", &initial_state, dim)?;

    let e = raw.empowerment.unwrap_or_default();
    let variant = parse_variant(
        src,
        e.variant.as_deref().unwrap_or("classic"),
        e.action_steps,
        e.gap_steps,
    )?;
    let dt = e.dt.unwrap_or(1e-3);
    let horizon_steps = e.horizon_steps.unwrap_or(500);
    if let Variant::Generalized {
        action_steps,
        gap_steps,
    } = variant
    {
        if action_steps + gap_steps > horizon_steps {
            return Err(src.error(
                "empowerment.gap_steps",
                format!(
                    "action_steps + gap_steps = {} exceeds horizon_steps = {horizon_steps}",
                    action_steps + gap_steps
                ),
            ));
        }
    }
    let horizon = variant
        .horizon(dt, horizon_steps)
        .map_err(src.relabel("empowerment.horizon_steps"))?;
    if !matches!(variant, Variant::Generalized { .. }) {
        for (key, given, implied) in [
            ("empowerment.action_steps", e.action_steps, horizon.action_steps),
            ("empowerment.gap_steps", e.gap_steps, horizon.gap_steps),
        ] {
            if given.is_some_and(|g| g != implied) {
                return Err(src.error(key, format!("the `{}` variant implies {implied}", variant.name())));
            }
        }
    }
    let defaults = ChannelSpec::default();
    let channel = ChannelSpec {
        power: e.power.unwrap_or(defaults.power),
        noise_std: e.noise_std.unwrap_or(defaults.noise_std),
        convention: e.capacity_convention.unwrap_or_default(),
    };
    channel.validate().map_err(|err| match err {
        Error::InvalidParameter { name, reason } => src.error(&format!("empowerment.{name}"), reason),
        other => other,
    })?;

    let c = raw.control.unwrap_or_default();
    let policy = ControlPolicySpec {
        variant,
        horizon,
        channel,
        action_bound: c.action_bound.unwrap_or(1.0),
        action_grid_size: c.action_grid_size.unwrap_or(21),
        decision_dt: c.decision_dt.unwrap_or(DEFAULT_DECISION_DT),
        sim_dt: c.sim_dt.unwrap_or(1e-3),
        expectation_samples: c.expectation_samples.unwrap_or(1),
    };
    policy.validate().map_err(|err| match err {
        Error::InvalidParameter { name, reason } => src.error(&format!("control.{name}"), reason),
        other => other,
    })?;
    let noise = NoiseSpec::new(c.process_std.unwrap_or(0.01), 1.0).map_err(src.relabel("control.process_std"))?;
    let duration_s = c.duration_s.unwrap_or(30.0);
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(src.error("control.duration_s", "must be finite and > 0"));
    }
    crate::controller::substeps(duration_s, policy.decision_dt)
        .map_err(|_| src.error("control.duration_s", "must be a multiple of decision_dt"))?;

    let raw_has_grid = raw.grid.is_some();
    let g = raw.grid.unwrap_or_default();
    let default_grid = system.default_grid();
    let grid = GridSpec {
        axes: g.axes.unwrap_or(default_grid.axes),
        ranges: g
            .ranges
            .map(|r| [(r[0][0], r[0][1]), (r[1][0], r[1][1])])
            .unwrap_or(default_grid.ranges),
        resolution: g.resolution.unwrap_or(default_grid.resolution),
        fixed_values: g.fixed_values.unwrap_or(default_grid.fixed_values),
    };
    // A scalar state has no plane to sweep; its grid is only checked if a
    // landscape is actually requested.
    let grid_check = if dim >= 2 || raw_has_grid {
        grid.validate(dim)
    } else {
        Ok(())
    };
    grid_check.map_err(|err| match err {
        Error::InvalidParameter { name, reason } => src.error(&format!("grid.{name}"), reason),
        Error::DimensionMismatch { what, expected, got } => src.error(
            &format!("grid.{what}"),
            format!("expected {expected} values, got {got}"),
        ),
        other => other,
    })?;

    let cv = raw.convergence.unwrap_or_default();
    let convergence = ConvergenceConfig {
        t_e_s: cv.t_e_s.unwrap_or(horizon.horizon_seconds()),
        dt_list: cv.dt_list.unwrap_or_else(|| vec![4e-3, 1e-3, 2.5e-4, 6.25e-5]),
        state: cv.state,
    };
    if convergence.dt_list.is_empty() || convergence.dt_list.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(src.error("convergence.dt_list", "must be a non-empty list of positive steps"));
    }
    if convergence.dt_list.windows(2).any(|w| w[1] > w[0]) {
        return Err(src.error("convergence.dt_list", "must be ordered from coarse to fine"));
    }
    for &step in &convergence.dt_list {
        crate::controller::substeps(convergence.t_e_s, step).map_err(|_| {
            src.error(
                "convergence.dt_list",
                format!("{step} does not divide t_e_s = {}", convergence.t_e_s),
            )
        })?;
    }
    if let Some(state) = &convergence.state {
        check_state(src, "convergence.state", state, dim)?;
    }

    let ly = raw.lyapunov.unwrap_or_default();
    let lyapunov = LyapunovConfig {
        horizon_steps: ly.horizon_steps.unwrap_or(horizon_steps),
        dt: ly.dt.unwrap_or(dt),
        state: ly.state.unwrap_or_else(|| initial_state.clone()),
    };
    if lyapunov.horizon_steps == 0 {
        return Err(src.error("lyapunov.horizon_steps", "must be >= 1"));
    }
    if !(lyapunov.dt > 0.0) || !lyapunov.dt.is_finite() {
        return Err(src.error("lyapunov.dt", "must be finite and > 0"));
    }
    check_state(src, "lyapunov.state", &lyapunov.state, dim)?;

    let o = raw.output.unwrap_or_default();
    let output = OutputConfig {
        dir: o.dir.unwrap_or_else(|| "out".to_string()),
        svg: o.svg.unwrap_or(false),
        overlay_rollout: o.overlay_rollout.unwrap_or(false),
    };

    Ok(RunConfig {
        system,
        initial_state,
        variant,
        horizon,
        channel,
        policy,
        noise,
        duration_s,
        seed: c.seed.unwrap_or(0),
        grid,
        convergence,
        lyapunov,
        output,
    })
}

//! C ABI over the `empower` crate.
//!
//! Systems and rollouts are opaque handles created and freed through this
//! interface. Every fallible call returns an [`EmpStatus`]; on failure the
//! message is kept per thread and read with [`emp_last_error_message`].
//! Output arrays are caller-allocated: the call reports the required length
//! and returns `EMP_STATUS_BUFFER_TOO_SMALL` when the capacity is short.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use empower::capacity::{capacity_nats, controlled_lyapunov, variant_empowerment, water_fill};
use empower::controller::{greedy_action, run_rollout, ControlPolicySpec, Rollout};
use empower::model::{NoiseSpec, StateVector, SystemModel};
use empower::systems::{
    CartPole, CartPoleParams, DoublePendulum, DoublePendulumParams, LinearTest, Pendulum, PendulumParams,
};
use empower::{parse_config, CapacityConvention, ChannelSpec, Error, HorizonSpec, Variant};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFiniteState = 4,
    NumericalFailure = 5,
    ConfigError = 6,
    BufferTooSmall = 7,
    IoError = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmpVariant {
    Classic = 0,
    KickedCef = 1,
    ControlledLyapunov = 2,
    /// Uses `action_steps` and `gap_steps` from [`EmpHorizon`].
    Generalized = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EmpChannel {
    pub power: f64,
    pub noise_std: f64,
    /// Use `ρ²` instead of `ρ` as the channel gain.
    pub squared_gains: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EmpHorizon {
    pub variant: EmpVariant,
    pub dt: f64,
    pub horizon_steps: usize,
    pub action_steps: usize,
    pub gap_steps: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EmpPolicy {
    pub horizon: EmpHorizon,
    pub channel: EmpChannel,
    pub action_bound: f64,
    pub action_grid_size: usize,
    pub decision_dt: f64,
    pub sim_dt: f64,
    pub expectation_samples: usize,
}

/// Opaque handle to a controlled system.
pub struct EmpSystem {
    model: Box<dyn SystemModel>,
}

/// Opaque handle to a finished rollout.
pub struct EmpRollout {
    inner: Rollout,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> EmpStatus {
    match err {
        Error::DimensionMismatch { .. } => EmpStatus::DimensionMismatch,
        Error::InvalidParameter { .. } | Error::IndexOutOfRange { .. } | Error::GridTooLarge { .. } => {
            EmpStatus::InvalidArgument
        }
        Error::NonFiniteState { .. } => EmpStatus::NonFiniteState,
        Error::SingularMassMatrix { .. } | Error::NumericalFailure(_) => EmpStatus::NumericalFailure,
        Error::Config(_) => EmpStatus::ConfigError,
        Error::Io(_) | Error::Json(_) => EmpStatus::IoError,
    }
}

struct Fail(EmpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(EmpStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EmpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EmpStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside the library");
            EmpStatus::Panic
        }
    }
}

unsafe fn input<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

/// Copies `data` into the caller's buffer, always reporting the full length.
unsafe fn output(data: &[f64], buf: *mut f64, cap: usize, len_out: *mut usize) -> Result<(), Fail> {
    if !len_out.is_null() {
        *len_out = data.len();
    }
    if data.len() > cap {
        return Err(Fail(
            EmpStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", data.len()),
        ));
    }
    if data.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(null("buffer"));
    }
    slice::from_raw_parts_mut(buf, data.len()).copy_from_slice(data);
    Ok(())
}

unsafe fn write<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    *ptr = value;
    Ok(())
}

unsafe fn system<'a>(sys: *const EmpSystem) -> Result<&'a dyn SystemModel, Fail> {
    sys.as_ref().map(|s| s.model.as_ref()).ok_or_else(|| null("system"))
}

unsafe fn state_arg(model: &dyn SystemModel, ptr: *const f64, len: usize) -> Result<StateVector, Fail> {
    if len != model.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "state",
            expected: model.state_dim(),
            got: len,
        }
        .into());
    }
    Ok(StateVector::from_column_slice(input(ptr, len, "state")?))
}

fn channel(c: &EmpChannel) -> Result<ChannelSpec, Fail> {
    let convention = if c.squared_gains {
        CapacityConvention::Squared
    } else {
        CapacityConvention::Paper
    };
    Ok(ChannelSpec::new(c.power, c.noise_std)?.with_convention(convention))
}

fn variant(h: &EmpHorizon) -> Variant {
    match h.variant {
        EmpVariant::Classic => Variant::Classic,
        EmpVariant::KickedCef => Variant::KickedCef,
        EmpVariant::ControlledLyapunov => Variant::ControlledLyapunov,
        EmpVariant::Generalized => Variant::Generalized {
            action_steps: h.action_steps,
            gap_steps: h.gap_steps,
        },
    }
}

fn horizon(h: &EmpHorizon) -> Result<(Variant, HorizonSpec), Fail> {
    let v = variant(h);
    Ok((v, v.horizon(h.dt, h.horizon_steps)?))
}

fn policy(p: &EmpPolicy) -> Result<ControlPolicySpec, Fail> {
    let (variant, horizon) = horizon(&p.horizon)?;
    let spec = ControlPolicySpec {
        variant,
        horizon,
        channel: channel(&p.channel)?,
        action_bound: p.action_bound,
        action_grid_size: p.action_grid_size,
        decision_dt: p.decision_dt,
        sim_dt: p.sim_dt,
        expectation_samples: p.expectation_samples,
    };
    spec.validate()?;
    Ok(spec)
}

fn boxed(model: Box<dyn SystemModel>) -> *mut EmpSystem {
    Box::into_raw(Box::new(EmpSystem { model }))
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `cap` bytes. Returns the length the
/// full message needs, including the terminator.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn emp_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            let dst = slice::from_raw_parts_mut(buf as *mut u8, n + 1);
            dst[..n].copy_from_slice(&bytes[..n]);
            dst[n] = 0;
        }
        bytes.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn emp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Default channel: unit power and unit noise, gains `ρ`.
#[no_mangle]
pub extern "C" fn emp_channel_default() -> EmpChannel {
    EmpChannel {
        power: 1.0,
        noise_std: 1.0,
        squared_gains: false,
    }
}

/// Policy with the library's default grid and timing for `variant`.
/// `action_steps` and `gap_steps` start at zero and must be set for
/// `EMP_VARIANT_GENERALIZED`.
#[no_mangle]
pub extern "C" fn emp_policy_default(variant: EmpVariant, dt: f64, horizon_steps: usize) -> EmpPolicy {
    EmpPolicy {
        horizon: EmpHorizon {
            variant,
            dt,
            horizon_steps,
            action_steps: 0,
            gap_steps: 0,
        },
        channel: emp_channel_default(),
        action_bound: 1.0,
        action_grid_size: 21,
        decision_dt: empower::controller::DEFAULT_DECISION_DT,
        sim_dt: dt,
        expectation_samples: 1,
    }
}

/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn emp_system_pendulum(
    mass: f64,
    length: f64,
    gravity: f64,
    out: *mut *mut EmpSystem,
) -> EmpStatus {
    guard(|| {
        let model = Pendulum::new(PendulumParams { mass, length, gravity })?;
        write(out, boxed(Box::new(model)), "out")
    })
}

/// Double pendulum driven at the middle joint. `lc*` are distances to the
/// link centres of mass and `i*` the link inertias about them.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn emp_system_double_pendulum(
    m1: f64,
    m2: f64,
    l1: f64,
    l2: f64,
    lc1: f64,
    lc2: f64,
    i1: f64,
    i2: f64,
    gravity: f64,
    out: *mut *mut EmpSystem,
) -> EmpStatus {
    guard(|| {
        let params = DoublePendulumParams {
            m1,
            m2,
            l1,
            l2,
            lc1,
            lc2,
            i1,
            i2,
            gravity,
        };
        write(out, boxed(Box::new(DoublePendulum::new(params)?)), "out")
    })
}

/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn emp_system_cartpole(
    cart_mass: f64,
    pole_mass: f64,
    pole_length: f64,
    gravity: f64,
    out: *mut *mut EmpSystem,
) -> EmpStatus {
    guard(|| {
        let params = CartPoleParams {
            cart_mass,
            pole_mass,
            pole_length,
            gravity,
        };
        write(out, boxed(Box::new(CartPole::new(params)?)), "out")
    })
}

/// Scalar system `dx = alpha·x dt + gain·da`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn emp_system_linear(alpha: f64, gain: f64, out: *mut *mut EmpSystem) -> EmpStatus {
    guard(|| {
        if !alpha.is_finite() || !gain.is_finite() {
            return Err(Fail(EmpStatus::InvalidArgument, "alpha and gain must be finite".into()));
        }
        write(out, boxed(Box::new(LinearTest::with_gain(alpha, gain))), "out")
    })
}

/// Builds the system described by the `[system]` section of a TOML run
/// configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated UTF-8 string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn emp_system_from_config(toml: *const c_char, out: *mut *mut EmpSystem) -> EmpStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|_| Fail(EmpStatus::InvalidArgument, "config is not valid UTF-8".into()))?;
        let cfg = parse_config(text)?;
        write(out, boxed(cfg.system.build()?), "out")
    })
}

/// # Safety
/// `sys` must be null or a handle from an `emp_system_*` constructor that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn emp_system_free(sys: *mut EmpSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// State dimension, or 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn emp_system_state_dim(sys: *const EmpSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.model.state_dim())
}

/// Action dimension, or 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn emp_system_action_dim(sys: *const EmpSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.model.action_dim())
}

/// Empowerment in nats at `state` for the variant and horizon in `h`.
///
/// # Safety
/// `sys` must be a live handle, `state` must point to `state_len` values,
/// `h` and `c` must be valid, and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn emp_empowerment(
    sys: *const EmpSystem,
    state: *const f64,
    state_len: usize,
    h: *const EmpHorizon,
    c: *const EmpChannel,
    out_value: *mut f64,
) -> EmpStatus {
    guard(|| {
        let model = system(sys)?;
        let x = state_arg(model, state, state_len)?;
        let (variant, spec) = horizon(h.as_ref().ok_or_else(|| null("horizon"))?)?;
        let channel = channel(c.as_ref().ok_or_else(|| null("channel"))?)?;
        let r = variant_empowerment(model, &x, variant, &spec, &channel)?;
        write(out_value, r.value_nats, "out_value")
    })
}

/// Greedy empowerment-maximizing action at `state`.
///
/// # Safety
/// `sys` must be a live handle, `state` must point to `state_len` values,
/// `p` must be valid, `action` must hold `action_cap` values, and
/// `out_value` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn emp_greedy_action(
    sys: *const EmpSystem,
    state: *const f64,
    state_len: usize,
    p: *const EmpPolicy,
    action: *mut f64,
    action_cap: usize,
    out_value: *mut f64,
) -> EmpStatus {
    guard(|| {
        let model = system(sys)?;
        let x = state_arg(model, state, state_len)?;
        let spec = policy(p.as_ref().ok_or_else(|| null("policy"))?)?;
        let (a, value) = greedy_action(model, &x, &spec)?;
        output(a.as_slice(), action, action_cap, std::ptr::null_mut())?;
        if !out_value.is_null() {
            *out_value = value;
        }
        Ok(())
    })
}

/// Closed-loop greedy rollout. A rollout stopped by a non-finite state is
/// still returned; check [`emp_rollout_failed`].
///
/// # Safety
/// `sys` must be a live handle, `x0` must point to `state_len` values, `p`
/// must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn emp_rollout_run(
    sys: *const EmpSystem,
    x0: *const f64,
    state_len: usize,
    duration_s: f64,
    p: *const EmpPolicy,
    process_std: f64,
    seed: u64,
    out: *mut *mut EmpRollout,
) -> EmpStatus {
    guard(|| {
        let model = system(sys)?;
        let x = state_arg(model, x0, state_len)?;
        let spec = policy(p.as_ref().ok_or_else(|| null("policy"))?)?;
        let noise = NoiseSpec::new(process_std, 1.0)?;
        let inner = run_rollout(model, &x, duration_s, &spec, &noise, seed)?;
        write(out, Box::into_raw(Box::new(EmpRollout { inner })), "out")
    })
}

/// # Safety
/// `ro` must be null or a rollout handle that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn emp_rollout_free(ro: *mut EmpRollout) {
    if !ro.is_null() {
        drop(Box::from_raw(ro));
    }
}

/// Number of recorded decision points (one per held action), or 0 for a null handle.
///
/// # Safety
/// `ro` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn emp_rollout_len(ro: *const EmpRollout) -> usize {
    ro.as_ref().map_or(0, |r| r.inner.len())
}

/// True when the rollout stopped early on a non-finite state.
///
/// # Safety
/// `ro` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn emp_rollout_failed(ro: *const EmpRollout) -> bool {
    ro.as_ref().is_some_and(|r| r.inner.failed)
}

unsafe fn rollout_field(
    ro: *const EmpRollout,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
    pick: impl FnOnce(&Rollout) -> Vec<f64>,
) -> EmpStatus {
    guard(|| {
        let r = ro.as_ref().ok_or_else(|| null("rollout"))?;
        output(&pick(&r.inner), buf, cap, len_out)
    })
}

/// Decision times in seconds.
///
/// # Safety
/// `ro` must be a live handle, `buf` must hold `cap` values, and `len_out`
/// must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn emp_rollout_times(
    ro: *const EmpRollout,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> EmpStatus {
    rollout_field(ro, buf, cap, len_out, |r| r.times.clone())
}

/// States, row-major (`len × state_dim`).
///
/// # Safety
/// As for [`emp_rollout_times`].
#[no_mangle]
pub unsafe extern "C" fn emp_rollout_states(
    ro: *const EmpRollout,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> EmpStatus {
    rollout_field(ro, buf, cap, len_out, |r| r.states.concat())
}

/// State at the end of the rollout (after the last held action).
///
/// # Safety
/// As for [`emp_rollout_times`].
#[no_mangle]
pub unsafe extern "C" fn emp_rollout_final_state(
    ro: *const EmpRollout,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> EmpStatus {
    rollout_field(ro, buf, cap, len_out, |r| r.final_state.clone())
}

/// Actions, row-major (`len × action_dim`).
///
/// # Safety
/// As for [`emp_rollout_times`].
#[no_mangle]
pub unsafe extern "C" fn emp_rollout_actions(
    ro: *const EmpRollout,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> EmpStatus {
    rollout_field(ro, buf, cap, len_out, |r| r.actions.concat())
}

/// Empowerment at each decision point, in nats.
///
/// # Safety
/// As for [`emp_rollout_times`].
#[no_mangle]
pub unsafe extern "C" fn emp_rollout_empowerment(
    ro: *const EmpRollout,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> EmpStatus {
    rollout_field(ro, buf, cap, len_out, |r| r.empowerment_trace.clone())
}

/// Controlled Lyapunov exponents in 1/s, descending. Unreachable directions
/// are reported as `-INFINITY`.
///
/// # Safety
/// `sys` must be a live handle, `state` must point to `state_len` values,
/// `exponents` must hold `cap` values, and `len_out` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn emp_controlled_lyapunov(
    sys: *const EmpSystem,
    state: *const f64,
    state_len: usize,
    horizon_steps: usize,
    dt: f64,
    exponents: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> EmpStatus {
    guard(|| {
        let model = system(sys)?;
        let x = state_arg(model, state, state_len)?;
        let r = controlled_lyapunov(model, &x, horizon_steps, dt, &ChannelSpec::default())?;
        output(&r.exponents, exponents, cap, len_out)
    })
}

/// Water-filling power split over parallel Gaussian channels with the given
/// gains, in any order. Writes one power per gain (aligned with `gains`) and
/// the resulting capacity in nats.
///
/// # Safety
/// `gains` must point to `n` values, `powers` must hold `n` values, and
/// `out_capacity` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn emp_water_fill(
    gains: *const f64,
    n: usize,
    power: f64,
    powers: *mut f64,
    out_capacity: *mut f64,
) -> EmpStatus {
    guard(|| {
        let g = input(gains, n, "gains")?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| g[b].total_cmp(&g[a]));
        let sorted: Vec<f64> = order.iter().map(|&i| g[i]).collect();
        let alloc = water_fill(&sorted, power)?;
        let mut aligned = vec![0.0; n];
        for (k, &i) in order.iter().enumerate() {
            aligned[i] = alloc.channel_powers[k];
        }
        output(&aligned, powers, n, std::ptr::null_mut())?;
        if !out_capacity.is_null() {
            *out_capacity = capacity_nats(&sorted, &alloc);
        }
        Ok(())
    })
}

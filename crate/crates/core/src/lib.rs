//! Generalized empowerment for controlled stochastic dynamical systems.
//!
//! The pipeline is: roll out the autonomous trajectory, chain the step
//! Jacobians into a linear-response matrix from actions to future states,
//! and take the water-filling capacity of the resulting Gaussian channel.
//! A greedy controller then climbs the empowerment landscape.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod commands;
pub mod config;
pub mod controller;
pub mod error;
pub mod io;
pub mod landscape;
pub mod model;
pub mod sensitivity;
pub mod systems;

pub use capacity::{
    capacity_nats, channel_gains, classic_empowerment, controlled_lyapunov, generalized_empowerment, kicked_cef,
    scaled_singular_values, variant_empowerment, water_fill, CapacityConvention, ChannelSpec, EmpowermentResult,
    LyapunovResult, PowerAllocation, Variant,
};
pub use commands::{cmd_convergence, cmd_landscape, cmd_lyapunov, cmd_rollout};
pub use config::{parse_config, RunConfig, SystemConfig};
pub use controller::{candidate_actions, greedy_action, run_rollout, run_rollout_observed, ControlPolicySpec, Rollout};
pub use error::{Error, ParseError, Result};
pub use landscape::{convergence_study, evaluate_landscape, richardson_limit, ConvergenceRow, GridSpec, LandscapeGrid};
pub use model::{
    finite_diff_jacobian, step_deterministic, step_stochastic, wrap_angle, ActionVector, NoiseSpec, StateVector,
    SystemModel,
};
pub use sensitivity::{
    action_sensitivity, build_sensitivity_matrix, rollout_autonomous, AutonomousRollout, HorizonSpec, SensitivityMatrix,
};
pub use systems::{
    CartPole, CartPoleParams, DoublePendulum, DoublePendulumParams, LinearTest, Pendulum, PendulumParams,
};

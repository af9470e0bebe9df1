//! Gradient dynamics of the (weighted) square-loss unconstrained features
//! model `L = W H`, together with the closed-form mode trajectories they are
//! checked against.

mod init;
mod step;
mod theory;
mod trajectory;

pub use init::{init_state, InitKind, InitSpec, ModelState};
pub use step::{flow_derivative, gd_step, integrate_step, weighted_loss, Integrator};
pub use theory::{
    learning_schedule, step_limit_factor, theory_factor, LearningSchedule, TheoryTrajectory,
};
pub use trajectory::{
    crossing_thresholds, crossing_times, mode_factors, simulate, simulate_with, subspace_residuals,
    RunSettings, SubspaceResiduals, Trajectory,
};

/// Default initialization log-scale.
pub const DEFAULT_DELTA: f64 = 8.0;

/// Default step size numerator: `η = 0.01 / (σ_max · λ_max)`.
pub const DEFAULT_ETA_SCALE: f64 = 0.01;

pub fn default_eta(sigma_max: f64, lambda_max: f64) -> f64 {
    DEFAULT_ETA_SCALE / (sigma_max * lambda_max)
}

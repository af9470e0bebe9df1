use serde::Serialize;

use crate::error::{Error, Result};

/// Closed-form mode factor `1 / (1 + (σ e^{2δ} − 1) e^{−2σλt})`.
///
/// `λ = 1` is the unweighted case.
pub fn theory_factor(sigma: f64, lambda: f64, delta: f64, t: f64) -> f64 {
    let rate = 2.0 * sigma * lambda * t;
    let c = sigma * (2.0 * delta).exp() - 1.0;
    let correction = if c.is_finite() {
        c * (-rate).exp()
    } else {
        (2.0 * delta + sigma.ln() - rate).exp()
    };
    1.0 / (1.0 + correction)
}

/// Vanishing-initialization limit of `theory_factor(σ, λ, δ, δ t)`: zero
/// before `T = 1/(σλ)`, `1/(1+σ)` at `T`, one after.
pub fn step_limit_factor(sigma: f64, lambda: f64, t_rescaled: f64) -> f64 {
    let t_learn = 1.0 / (sigma * lambda);
    if t_rescaled < t_learn {
        0.0
    } else if t_rescaled == t_learn {
        1.0 / (1.0 + sigma)
    } else {
        1.0
    }
}

/// Samples of one mode's closed-form factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryTrajectory {
    pub sigma: f64,
    pub lambda: f64,
    pub delta: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TheoryTrajectory {
    pub fn sample(sigma: f64, lambda: f64, delta: f64, times: &[f64]) -> Self {
        TheoryTrajectory {
            sigma,
            lambda,
            delta,
            times: times.to_vec(),
            values: times
                .iter()
                .map(|&t| theory_factor(sigma, lambda, delta, t))
                .collect(),
        }
    }
}

/// Learning times `Tᵢ = 1/(σᵢλᵢ)` and the window `(T_max − T_min)/T_min`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningSchedule {
    pub times: Vec<f64>,
    pub window: f64,
}

impl LearningSchedule {
    pub fn t_min(&self) -> f64 {
        self.times.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn t_max(&self) -> f64 {
        self.times.iter().copied().fold(0.0, f64::max)
    }
}

pub fn learning_schedule(sigma: &[f64], lambda: &[f64]) -> Result<LearningSchedule> {
    if sigma.len() != lambda.len() || sigma.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} singular values vs {} effective weights",
            sigma.len(),
            lambda.len()
        )));
    }
    if let Some(bad) = sigma
        .iter()
        .chain(lambda)
        .find(|&&x| !(x.is_finite() && x > 0.0))
    {
        return Err(Error::InvalidArgument(format!(
            "singular values and effective weights must be positive (got {bad})"
        )));
    }
    let times: Vec<f64> = sigma.iter().zip(lambda).map(|(s, l)| 1.0 / (s * l)).collect();
    let mut schedule = LearningSchedule { times, window: 0.0 };
    let (lo, hi) = (schedule.t_min(), schedule.t_max());
    schedule.window = (hi - lo) / lo;
    Ok(schedule)
}

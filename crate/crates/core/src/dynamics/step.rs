use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::init::ModelState;
use crate::error::{Error, Result};
use crate::reweight::WeightSpec;
use crate::sel::SelMatrix;

/// Time discretization of the gradient flow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Explicit Euler, i.e. plain full-batch gradient descent.
    #[default]
    Euler,
    /// Classical fourth-order Runge–Kutta on the same flow.
    Rk4,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
        }
    }
}

/// `(Z − WH) Ω`: the weighted residual.
fn weighted_residual(w: &Array2<f64>, h: &Array2<f64>, z: &SelMatrix, weights: &WeightSpec) -> Array2<f64> {
    let mut e = &z.entries - &w.dot(h);
    e *= &weights.per_example.view().insert_axis(Axis(0));
    e
}

/// Time derivative `(Ẇ, Ḣ) = ((Z − WH) Ω Hᵀ, Wᵀ (Z − WH) Ω)` of gradient
/// flow on `½ ‖(Z − WH) Ω^{1/2}‖²_F`.
pub fn flow_derivative(
    w: &Array2<f64>,
    h: &Array2<f64>,
    z: &SelMatrix,
    weights: &WeightSpec,
) -> (Array2<f64>, Array2<f64>) {
    let e = weighted_residual(w, h, z, weights);
    (e.dot(&h.t()), w.t().dot(&e))
}

/// `½ Σᵢ ωᵢ ‖zᵢ − W hᵢ‖²`.
pub fn weighted_loss(state: &ModelState, z: &SelMatrix, weights: &WeightSpec) -> f64 {
    let r = &z.entries - &state.logits();
    r.columns()
        .into_iter()
        .zip(weights.per_example.iter())
        .map(|(col, &om)| om * col.dot(&col))
        .sum::<f64>()
        * 0.5
}

fn check_shapes(state: &ModelState, z: &SelMatrix, weights: &WeightSpec) -> Result<()> {
    let (k, d) = state.w.dim();
    if state.h.nrows() != d || z.k() != k || z.n() != state.h.ncols() || weights.n() != z.n() {
        return Err(Error::ShapeMismatch(format!(
            "W {:?}, H {:?}, Z {:?}, {} weights",
            state.w.dim(),
            state.h.dim(),
            z.entries.dim(),
            weights.n()
        )));
    }
    Ok(())
}

fn advance(state: &ModelState, w: Array2<f64>, h: Array2<f64>, eta: f64) -> Result<ModelState> {
    let step = state.step + 1;
    let next = ModelState {
        w,
        h,
        step,
        time: step as f64 * eta,
    };
    if !next.is_finite() {
        return Err(Error::Divergence {
            step,
            reason: "non-finite parameters".into(),
        });
    }
    Ok(next)
}

/// One explicit-Euler step. `W` and `H` are both updated from the pre-step
/// state.
pub fn gd_step(state: &ModelState, z: &SelMatrix, weights: &WeightSpec, eta: f64) -> Result<ModelState> {
    integrate_step(state, z, weights, eta, Integrator::Euler)
}

pub fn integrate_step(
    state: &ModelState,
    z: &SelMatrix,
    weights: &WeightSpec,
    eta: f64,
    integrator: Integrator,
) -> Result<ModelState> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive (got {eta})")));
    }
    check_shapes(state, z, weights)?;
    let (w0, h0) = (&state.w, &state.h);
    match integrator {
        Integrator::Euler => {
            let (dw, dh) = flow_derivative(w0, h0, z, weights);
            advance(state, w0 + &(dw * eta), h0 + &(dh * eta), eta)
        }
        Integrator::Rk4 => {
            let half = 0.5 * eta;
            let (k1w, k1h) = flow_derivative(w0, h0, z, weights);
            let (k2w, k2h) = flow_derivative(&(w0 + &(&k1w * half)), &(h0 + &(&k1h * half)), z, weights);
            let (k3w, k3h) = flow_derivative(&(w0 + &(&k2w * half)), &(h0 + &(&k2h * half)), z, weights);
            let (k4w, k4h) = flow_derivative(&(w0 + &(&k3w * eta)), &(h0 + &(&k3h * eta)), z, weights);
            let sixth = eta / 6.0;
            let w = w0 + &((k1w + &(k2w * 2.0) + &(k3w * 2.0) + &k4w) * sixth);
            let h = h0 + &((k1h + &(k2h * 2.0) + &(k3h * 2.0) + &k4h) * sixth);
            advance(state, w, h, eta)
        }
    }
}

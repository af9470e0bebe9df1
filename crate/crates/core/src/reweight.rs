//! Per-example loss weights and the effective per-mode weights `Λ = VᵀΩV`.

use ndarray::{Array1, Array2, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sel::StepConfig;
use crate::spectral::frobenius;

/// Off-diagonal norm of `VᵀΩV` above which the weighting is rejected.
pub const DIAGONAL_TOL: f64 = 1e-8;

/// Diagonal of the loss weight matrix `Ω`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSpec {
    /// Exponent of the inverse class frequency; 0 is vanilla ERM.
    pub gamma: f64,
    pub majority_weight: f64,
    pub minority_weight: f64,
    pub per_example: Array1<f64>,
}

impl WeightSpec {
    /// All weights equal to one.
    pub fn uniform(n: usize) -> Self {
        WeightSpec {
            gamma: 0.0,
            majority_weight: 1.0,
            minority_weight: 1.0,
            per_example: Array1::ones(n),
        }
    }

    /// Multiplies every weight by `c`.
    pub fn scaled(mut self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight scale must be positive (got {c})"
            )));
        }
        self.majority_weight *= c;
        self.minority_weight *= c;
        self.per_example *= c;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.per_example.len()
    }

    pub fn is_uniform(&self) -> bool {
        let first = self.per_example.first().copied().unwrap_or(1.0);
        self.per_example.iter().all(|&w| w == first)
    }
}

/// Weights `∝ (class frequency)^(−γ)` for a STEP instance.
///
/// The common factor `(k/2)^γ` is dropped, leaving `((R+1)/R)^γ` on majority
/// examples and `(R+1)^γ` on minority examples. At `γ = 1/2` these are
/// `√((R+1)/R)` and `√(R+1)`.
pub fn step_weights(cfg: &StepConfig, gamma: f64) -> Result<WeightSpec> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::config(
            "WeightSpec.gamma",
            format!("gamma must lie in [0, 1] (got {gamma})"),
        ));
    }
    let r = cfg.ratio;
    let (majority_weight, minority_weight) = if gamma == 0.0 {
        (1.0, 1.0)
    } else {
        (((r + 1.0) / r).powf(gamma), (r + 1.0).powf(gamma))
    };
    let per_example = cfg
        .labels()
        .into_iter()
        .map(|c| {
            if cfg.is_majority(c) {
                majority_weight
            } else {
                minority_weight
            }
        })
        .collect();
    Ok(WeightSpec {
        gamma,
        majority_weight,
        minority_weight,
        per_example,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveWeights {
    pub lambdas: Array1<f64>,
    /// Frobenius norm of the off-diagonal part of `VᵀΩV`.
    pub off_diag_norm: f64,
}

/// `VᵀΩV`, computed densely.
pub fn weighted_gram(v: ArrayView2<f64>, w: &WeightSpec) -> Result<Array2<f64>> {
    if v.nrows() != w.n() {
        return Err(Error::ShapeMismatch(format!(
            "V has {} rows but {} weights were given",
            v.nrows(),
            w.n()
        )));
    }
    let omega_v = &v * &w.per_example.view().insert_axis(ndarray::Axis(1));
    Ok(v.t().dot(&omega_v))
}

/// Diagonal of `VᵀΩV`, after checking that the off-diagonal part vanishes.
pub fn effective_weights(v: ArrayView2<f64>, w: &WeightSpec) -> Result<EffectiveWeights> {
    let gram = weighted_gram(v, w)?;
    let lambdas = gram.diag().to_owned();
    let mut off = gram;
    off.diag_mut().fill(0.0);
    let off_diag_norm = frobenius(off.view());
    if off_diag_norm > DIAGONAL_TOL {
        return Err(Error::NonDiagonalWeighting {
            residual: off_diag_norm,
            tolerance: DIAGONAL_TOL,
        });
    }
    Ok(EffectiveWeights {
        lambdas,
        off_diag_norm,
    })
}

/// `‖ΩV − VΛ‖_F`: how far the columns of `V` are from being eigenvectors of
/// `Ω`.
///
/// A diagonal `VᵀΩV` does not make this vanish. When it is nonzero, weighted
/// gradient flow moves the logits out of `span(V)`, and the mode whose column
/// of `V` is not an eigenvector (the maj-min mode under STEP reweighting)
/// does not follow the decoupled sigmoid.
pub fn eigen_alignment_residual(v: ArrayView2<f64>, w: &WeightSpec, eff: &EffectiveWeights) -> f64 {
    let omega_v = &v * &w.per_example.view().insert_axis(ndarray::Axis(1));
    let v_lambda = &v * &eff.lambdas;
    frobenius((&omega_v - &v_lambda).view())
}

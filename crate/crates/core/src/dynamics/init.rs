use ndarray::{Array2, ArrayView2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sel::StepConfig;
use crate::spectral::{frobenius, SpectralFactors};

const ROTATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    /// `W(0) = e^{−δ} U Rᵀ`, `H(0) = e^{−δ} R Vᵀ`.
    Spectral,
    /// Gaussian entries rescaled to the spectral initialization's norms.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec {
    pub kind: InitKind,
    pub delta: f64,
    /// Only used by [`InitKind::Random`].
    pub seed: u64,
    /// Partial orthogonal `d × (k−1)` matrix; identity embedding if unset.
    pub rotation: Option<Array2<f64>>,
}

impl InitSpec {
    pub fn spectral(delta: f64) -> Self {
        InitSpec {
            kind: InitKind::Spectral,
            delta,
            seed: 0,
            rotation: None,
        }
    }

    pub fn random(delta: f64, seed: u64) -> Self {
        InitSpec {
            kind: InitKind::Random,
            delta,
            seed,
            rotation: None,
        }
    }
}

/// Trainable parameters and the position along the run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// Classifier, `k × d`.
    pub w: Array2<f64>,
    /// Unconstrained features, `d × n`.
    pub h: Array2<f64>,
    pub step: u64,
    /// Gradient-flow time, `step · η`.
    pub time: f64,
}

impl ModelState {
    pub fn logits(&self) -> Array2<f64> {
        self.w.dot(&self.h)
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.h.iter()).all(|v| v.is_finite())
    }
}

pub fn init_state(cfg: &StepConfig, f: &SpectralFactors, spec: &InitSpec) -> Result<ModelState> {
    cfg.validate()?;
    if !(spec.delta.is_finite() && spec.delta > 0.0) {
        return Err(Error::config(
            "InitSpec.delta",
            format!("delta must be positive (got {})", spec.delta),
        ));
    }
    let r = f.rank();
    if f.u.nrows() != cfg.k || f.v.nrows() != cfg.n() {
        return Err(Error::ShapeMismatch(format!(
            "factors U {:?} / V {:?} do not match k = {}, n = {}",
            f.u.dim(),
            f.v.dim(),
            cfg.k,
            cfg.n()
        )));
    }
    let rotation = match &spec.rotation {
        Some(rot) => {
            check_partial_orthogonal(rot.view(), cfg.d, r)?;
            rot.clone()
        }
        None => Array2::eye(cfg.d).slice_move(ndarray::s![.., ..r]),
    };
    let scale = (-spec.delta).exp();
    let w_spec = f.u.dot(&rotation.t()) * scale;
    let h_spec = rotation.dot(&f.v.t()) * scale;

    let (w, h) = match spec.kind {
        InitKind::Spectral => (w_spec, h_spec),
        InitKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut w = Array2::from_shape_simple_fn((cfg.k, cfg.d), || {
                rng.sample::<f64, _>(StandardNormal)
            });
            let mut h = Array2::from_shape_simple_fn((cfg.d, cfg.n()), || {
                rng.sample::<f64, _>(StandardNormal)
            });
            w *= frobenius(w_spec.view()) / frobenius(w.view());
            h *= frobenius(h_spec.view()) / frobenius(h.view());
            (w, h)
        }
    };
    Ok(ModelState {
        w,
        h,
        step: 0,
        time: 0.0,
    })
}

fn check_partial_orthogonal(rot: ArrayView2<f64>, d: usize, r: usize) -> Result<()> {
    if rot.dim() != (d, r) {
        return Err(Error::config(
            "InitSpec.rotation",
            format!("rotation must be {d}×{r} (got {:?})", rot.dim()),
        ));
    }
    let gram = rot.t().dot(&rot);
    let err = frobenius((&gram - &Array2::<f64>::eye(r)).view());
    if err > ROTATION_TOL {
        return Err(Error::config(
            "InitSpec.rotation",
            format!("rotationᵀ·rotation deviates from I by {err:e}"),
        ));
    }
    Ok(())
}

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use super::init::{init_state, InitSpec, ModelState};
use super::step::{integrate_step, weighted_loss, Integrator};
use crate::error::{Error, Result};
use crate::reweight::WeightSpec;
use crate::sel::{SelMatrix, StepConfig};
use crate::spectral::{frobenius, numeric_svd, SpectralFactors};

/// Loss growth factor (relative to the initial loss) treated as divergence.
const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSettings {
    pub eta: f64,
    pub steps: u64,
    pub record_every: u64,
    pub integrator: Integrator,
}

/// Alignment of the logits with the singular subspaces of `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubspaceResiduals {
    /// `‖UᵀLV − diag(UᵀLV)‖_F / ‖L‖_F`.
    pub diagonal: f64,
    /// `max(‖(I − UUᵀ)L‖_F, ‖L(I − VVᵀ)‖_F)`.
    pub off_subspace: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub sample_steps: Vec<u64>,
    pub times: Vec<f64>,
    /// Per record, `uᵢᵀ L vᵢ / σᵢ` for each mode.
    pub mode_factors: Vec<Vec<f64>>,
    /// Per record, the leading `k − 1` singular values of `L` (zero padded).
    pub logit_singulars: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
    pub residuals: Vec<SubspaceResiduals>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.sample_steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_steps.is_empty()
    }

    /// Time series of one mode's factor.
    pub fn mode_series(&self, mode: usize) -> Vec<f64> {
        self.mode_factors.iter().map(|m| m[mode]).collect()
    }
}

/// `uᵢᵀ L vᵢ / σᵢ` for every mode; equals the closed-form factor under
/// spectral initialization.
pub fn mode_factors(l: ArrayView2<f64>, f: &SpectralFactors) -> Result<Vec<f64>> {
    if l.nrows() != f.u.nrows() || l.ncols() != f.v.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs factors U {:?}, V {:?}",
            l.dim(),
            f.u.dim(),
            f.v.dim()
        )));
    }
    let lv = l.dot(&f.v);
    Ok((0..f.rank())
        .map(|i| f.u.column(i).dot(&lv.column(i)) / f.sigma[i])
        .collect())
}

pub fn subspace_residuals(l: ArrayView2<f64>, f: &SpectralFactors) -> SubspaceResiduals {
    let lv = l.dot(&f.v);
    let mut core = f.u.t().dot(&lv);
    core.diag_mut().fill(0.0);
    let norm = frobenius(l);
    let diagonal = if norm > 0.0 {
        frobenius(core.view()) / norm
    } else {
        0.0
    };
    let left = &l - &f.u.dot(&f.u.t().dot(&l));
    let right = &l - &lv.dot(&f.v.t());
    SubspaceResiduals {
        diagonal,
        off_subspace: frobenius(left.view()).max(frobenius(right.view())),
    }
}

fn leading_singulars(l: &Array2<f64>, count: usize) -> Result<Vec<f64>> {
    let svd = numeric_svd(l.view())?;
    let mut out: Vec<f64> = svd.sigma.iter().copied().take(count).collect();
    out.resize(count, 0.0);
    Ok(out)
}

pub fn simulate(
    cfg: &StepConfig,
    z: &SelMatrix,
    f: &SpectralFactors,
    weights: &WeightSpec,
    init: &InitSpec,
    run: &RunSettings,
) -> Result<Trajectory> {
    simulate_with(cfg, z, f, weights, init, run, |_, _| {})
}

/// Runs the dynamics and calls `observe` with the state and its logits at
/// every recorded step.
pub fn simulate_with(
    cfg: &StepConfig,
    z: &SelMatrix,
    f: &SpectralFactors,
    weights: &WeightSpec,
    init: &InitSpec,
    run: &RunSettings,
    mut observe: impl FnMut(&ModelState, &Array2<f64>),
) -> Result<Trajectory> {
    if run.record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be ≥ 1".into()));
    }
    let modes = f.rank();
    let mut state = init_state(cfg, f, init)?;
    let initial_loss = weighted_loss(&state, z, weights);
    let mut traj = Trajectory {
        sample_steps: Vec::new(),
        times: Vec::new(),
        mode_factors: Vec::new(),
        logit_singulars: Vec::new(),
        losses: Vec::new(),
        residuals: Vec::new(),
    };
    let mut record = |state: &ModelState, loss: f64, traj: &mut Trajectory| -> Result<()> {
        let l = state.logits();
        traj.sample_steps.push(state.step);
        traj.times.push(state.time);
        traj.mode_factors.push(mode_factors(l.view(), f)?);
        traj.logit_singulars.push(leading_singulars(&l, modes)?);
        traj.losses.push(loss);
        traj.residuals.push(subspace_residuals(l.view(), f));
        observe(state, &l);
        Ok(())
    };
    record(&state, initial_loss, &mut traj)?;
    for _ in 0..run.steps {
        state = integrate_step(&state, z, weights, run.eta, run.integrator)?;
        let loss = weighted_loss(&state, z, weights);
        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial_loss {
            return Err(Error::Divergence {
                step: state.step,
                reason: format!("loss {loss:e} exceeds {DIVERGENCE_FACTOR}× the initial {initial_loss:e}"),
            });
        }
        if state.step % run.record_every == 0 {
            record(&state, loss, &mut traj)?;
        }
    }
    Ok(traj)
}

/// Per-mode crossing level `1/(1 + σᵢ)`, the value the closed-form factor
/// takes at its learning time in the vanishing-initialization limit.
pub fn crossing_thresholds(sigma: &[f64]) -> Vec<f64> {
    sigma.iter().map(|s| 1.0 / (1.0 + s)).collect()
}

/// First time each mode factor reaches its threshold, linearly interpolated
/// between records. `None` if it never does.
pub fn crossing_times(traj: &Trajectory, thresholds: &[f64]) -> Vec<Option<f64>> {
    thresholds
        .iter()
        .enumerate()
        .map(|(mode, &level)| {
            let series = traj.mode_series(mode);
            let hit = series.iter().position(|&v| v >= level)?;
            if hit == 0 {
                return Some(traj.times[0]);
            }
            let (a, b) = (series[hit - 1], series[hit]);
            let (ta, tb) = (traj.times[hit - 1], traj.times[hit]);
            Some(ta + (level - a) / (b - a) * (tb - ta))
        })
        .collect()
}

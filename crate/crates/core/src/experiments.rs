//! Experiment orchestration: single runs with theory comparison, learning
//! window sweeps over the imbalance ratio, and random-vs-spectral
//! initialization comparisons.

use std::collections::BTreeMap;
use std::ops::Range;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    crossing_thresholds, crossing_times, default_eta, learning_schedule, simulate_with,
    theory_factor, InitKind, InitSpec, LearningSchedule, RunSettings, Trajectory,
};
use crate::error::{Error, Result};
use crate::reweight::{
    effective_weights, eigen_alignment_residual, step_weights, EffectiveWeights, WeightSpec,
};
use crate::sel::{build_step_onehot, center_labels, LabelMatrix, SelMatrix, StepConfig};
use crate::spectral::{factors_for, mode_levels, FeatureLevel, SpectralFactors};

/// Minimum simulated span, in units of `δ · max Tᵢ`.
pub const SATURATION_SPAN: f64 = 3.0;

/// Default grid of imbalance ratios for window sweeps.
pub const DEFAULT_SWEEP_RATIOS: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Weighting {
    Vanilla,
    Reweighted { gamma: f64 },
}

impl Weighting {
    pub fn weights(&self, cfg: &StepConfig) -> Result<WeightSpec> {
        match *self {
            Weighting::Vanilla => Ok(WeightSpec::uniform(cfg.n())),
            Weighting::Reweighted { gamma } => step_weights(cfg, gamma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Trajectory,
    Summary,
    Confusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub step: StepConfig,
    pub weighting: Weighting,
    pub init: InitSpec,
    pub run: RunSettings,
    pub outputs: Vec<OutputKind>,
}

/// Everything derived from a STEP instance and a weighting before training.
#[derive(Debug, Clone)]
pub struct Problem {
    pub cfg: StepConfig,
    pub labels: LabelMatrix,
    pub z: SelMatrix,
    pub factors: SpectralFactors,
    pub weights: WeightSpec,
    pub effective: EffectiveWeights,
    pub schedule: LearningSchedule,
}

impl Problem {
    pub fn build(cfg: &StepConfig, weighting: &Weighting) -> Result<Self> {
        cfg.validate()?;
        let labels = build_step_onehot(cfg)?;
        let z = center_labels(&labels)?;
        let factors = factors_for(cfg, &z)?;
        let weights = weighting.weights(cfg)?;
        let effective = effective_weights(factors.v.view(), &weights)?;
        let schedule = learning_schedule(
            factors.sigma.as_slice().unwrap(),
            effective.lambdas.as_slice().unwrap(),
        )?;
        Ok(Problem {
            cfg: *cfg,
            labels,
            z,
            factors,
            weights,
            effective,
            schedule,
        })
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.factors.sigma.to_vec()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.effective.lambdas.to_vec()
    }

    /// `0.01 / (σ_max · λ_max)`.
    pub fn default_eta(&self) -> f64 {
        let s = self.factors.sigma.iter().copied().fold(0.0, f64::max);
        let l = self.effective.lambdas.iter().copied().fold(0.0, f64::max);
        default_eta(s, l)
    }

    /// Smallest step count that covers `3 · δ · max Tᵢ`.
    pub fn saturating_steps(&self, delta: f64, eta: f64) -> u64 {
        (SATURATION_SPAN * self.schedule.t_max() * delta / eta).ceil() as u64
    }
}

impl ExperimentConfig {
    pub fn validate(&self, problem: &Problem) -> Result<()> {
        self.step.validate()?;
        if let Weighting::Reweighted { gamma } = self.weighting {
            if !(0.0..=1.0).contains(&gamma) {
                return Err(Error::config(
                    "weighting.gamma",
                    format!("gamma must lie in [0, 1] (got {gamma})"),
                ));
            }
        }
        if !(self.init.delta.is_finite() && self.init.delta > 0.0) {
            return Err(Error::config("init.delta", "delta must be positive"));
        }
        if !(self.run.eta.is_finite() && self.run.eta > 0.0) {
            return Err(Error::config("eta", "eta must be positive"));
        }
        if self.run.record_every == 0 {
            return Err(Error::config("record_every", "record_every must be ≥ 1"));
        }
        let span = self.run.steps as f64 * self.run.eta;
        let needed = SATURATION_SPAN * problem.schedule.t_max() * self.init.delta;
        if span < needed * (1.0 - 1e-12) {
            return Err(Error::config(
                "ExperimentConfig.saturation",
                format!(
                    "steps·eta = {span} must span at least 3·max(T)·delta = {needed} (need steps ≥ {})",
                    problem.saturating_steps(self.init.delta, self.run.eta)
                ),
            ));
        }
        Ok(())
    }
}

/// Counts of (true class, predicted class) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// Every example of the given classes is predicted as its own class.
    pub fn block_resolved(&self, classes: Range<usize>) -> bool {
        classes
            .into_iter()
            .all(|c| self.counts[c].iter().enumerate().all(|(p, &n)| p == c || n == 0))
    }

    pub fn is_diagonal(&self) -> bool {
        self.block_resolved(0..self.k())
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|c| self.counts[c][c]).sum()
    }
}

/// Argmax prediction per column, ties toward the smaller class index.
pub fn confusion_from_logits(l: ArrayView2<f64>, y: &LabelMatrix) -> Result<ConfusionMatrix> {
    let k = y.k();
    if l.dim() != y.entries.dim() {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs labels {:?}",
            l.dim(),
            y.entries.dim()
        )));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (col, column) in l.columns().into_iter().enumerate() {
        let mut best = 0;
        for c in 1..k {
            if column[c] > column[best] {
                best = c;
            }
        }
        counts[y.labels[col]][best] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Rescaled times (`t/δ`) from which each class block stays resolved until
/// the end of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockResolution {
    pub majority: Option<f64>,
    pub minority: Option<f64>,
}

impl BlockResolution {
    fn from_snapshots(snaps: &[(u64, f64, ConfusionMatrix)], half: usize, delta: f64) -> Self {
        let settle = |block: Range<usize>| -> Option<f64> {
            let mut since = None;
            for (_, t, cm) in snaps {
                if cm.block_resolved(block.clone()) {
                    since.get_or_insert(*t / delta);
                } else {
                    since = None;
                }
            }
            since
        };
        let k = snaps.first().map(|s| s.2.k()).unwrap_or(2 * half);
        BlockResolution {
            majority: settle(0..half),
            minority: settle(half..k),
        }
    }

    /// Minority resolution delay over majority resolution time, when both
    /// blocks resolve.
    pub fn relative_delay(&self) -> Option<f64> {
        Some((self.minority? - self.majority?) / self.majority?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    #[serde(skip)]
    pub config: ExperimentConfig,
    pub sigma: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub levels: Vec<FeatureLevel>,
    pub schedule: LearningSchedule,
    /// Crossing thresholds `1/(1+σᵢ)`.
    pub thresholds: Vec<f64>,
    #[serde(skip)]
    pub trajectory: Trajectory,
    /// Closed-form factors at each recorded time.
    #[serde(skip)]
    pub theory: Vec<Vec<f64>>,
    /// Empirical learning times, rescaled by `1/δ`.
    pub empirical_times: Vec<Option<f64>>,
    pub empirical_window: Option<f64>,
    /// Max over records of `|simulated − theory|`, per mode.
    pub theory_error: Vec<f64>,
    #[serde(skip)]
    pub confusion_snapshots: Vec<(u64, ConfusionMatrix)>,
    pub resolution: BlockResolution,
    /// `‖ΩV − VΛ‖_F`; nonzero means the weighted flow leaves `span(V)`.
    pub alignment_residual: f64,
}

impl ExperimentReport {
    pub fn final_confusion(&self) -> Option<&ConfusionMatrix> {
        self.confusion_snapshots.last().map(|(_, c)| c)
    }
}

fn window_of(times: &[Option<f64>]) -> Option<f64> {
    let times: Option<Vec<f64>> = times.iter().copied().collect();
    let times = times?;
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(0.0, f64::max);
    (lo > 0.0).then(|| (hi - lo) / lo)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let problem = Problem::build(&cfg.step, &cfg.weighting)?;
    cfg.validate(&problem)?;
    run_on(&problem, cfg)
}

fn run_on(problem: &Problem, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let delta = cfg.init.delta;
    let mut snaps = Vec::new();
    let trajectory = simulate_with(
        &problem.cfg,
        &problem.z,
        &problem.factors,
        &problem.weights,
        &cfg.init,
        &cfg.run,
        |state, logits| {
            // shapes are fixed by construction
            let cm = confusion_from_logits(logits.view(), &problem.labels).unwrap();
            snaps.push((state.step, state.time, cm));
        },
    )?;
    let sigma = problem.sigma();
    let lambdas = problem.lambdas();
    let theory: Vec<Vec<f64>> = trajectory
        .times
        .iter()
        .map(|&t| {
            sigma
                .iter()
                .zip(&lambdas)
                .map(|(&s, &l)| theory_factor(s, l, delta, t))
                .collect()
        })
        .collect();
    let theory_error = (0..sigma.len())
        .map(|i| {
            trajectory
                .mode_factors
                .iter()
                .zip(&theory)
                .map(|(sim, th)| (sim[i] - th[i]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let thresholds = crossing_thresholds(&sigma);
    let empirical_times: Vec<Option<f64>> = crossing_times(&trajectory, &thresholds)
        .into_iter()
        .map(|t| t.map(|t| t / delta))
        .collect();
    let resolution = BlockResolution::from_snapshots(&snaps, problem.cfg.half(), delta);
    Ok(ExperimentReport {
        config: cfg.clone(),
        levels: mode_levels(problem.cfg.k),
        schedule: problem.schedule.clone(),
        thresholds,
        empirical_window: window_of(&empirical_times),
        empirical_times,
        theory,
        theory_error,
        alignment_residual: eigen_alignment_residual(
            problem.factors.v.view(),
            &problem.weights,
            &problem.effective,
        ),
        confusion_snapshots: snaps.into_iter().map(|(s, _, c)| (s, c)).collect(),
        resolution,
        trajectory,
        sigma,
        lambdas,
    })
}

/// Closed-form (and optionally simulated) learning windows for one ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRow {
    pub ratio: f64,
    pub vanilla: f64,
    pub reweighted: f64,
    pub empirical_vanilla: Option<f64>,
    pub empirical_reweighted: Option<f64>,
}

pub fn sweep_window(k: usize, ratios: &[f64], gamma: f64) -> Result<Vec<WindowRow>> {
    ratios
        .iter()
        .map(|&ratio| {
            let cfg = StepConfig::with_defaults(k, ratio)?;
            let vanilla = Problem::build(&cfg, &Weighting::Vanilla)?.schedule.window;
            let reweighted = Problem::build(&cfg, &Weighting::Reweighted { gamma })?
                .schedule
                .window;
            Ok(WindowRow {
                ratio,
                vanilla,
                reweighted,
                empirical_vanilla: None,
                empirical_reweighted: None,
            })
        })
        .collect()
}

/// `sweep_window` plus windows measured from spectral-init gradient descent
/// runs at the default step size.
pub fn sweep_window_empirical(
    k: usize,
    ratios: &[f64],
    gamma: f64,
    delta: f64,
) -> Result<Vec<WindowRow>> {
    let mut rows = sweep_window(k, ratios, gamma)?;
    for row in &mut rows {
        let cfg = StepConfig::with_defaults(k, row.ratio)?;
        let measure = |weighting: Weighting| -> Result<Option<f64>> {
            let problem = Problem::build(&cfg, &weighting)?;
            let eta = problem.default_eta();
            let steps = problem.saturating_steps(delta, eta);
            let exp = ExperimentConfig {
                step: cfg,
                weighting,
                init: InitSpec::spectral(delta),
                run: RunSettings {
                    eta,
                    steps,
                    record_every: 1,
                    integrator: Default::default(),
                },
                outputs: vec![],
            };
            Ok(run_on(&problem, &exp)?.empirical_window)
        };
        row.empirical_vanilla = measure(Weighting::Vanilla)?;
        row.empirical_reweighted = measure(Weighting::Reweighted { gamma })?;
    }
    Ok(rows)
}

/// Crossing times of one run, grouped by feature level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelTimes {
    /// Rescaled crossing time per mode.
    pub times: Vec<Option<f64>>,
    /// Sorted multiset of crossing times per level.
    pub by_level: BTreeMap<FeatureLevel, Vec<f64>>,
    /// Levels in learning order, if every level is strictly separated from
    /// the next.
    pub order: Option<Vec<FeatureLevel>>,
    /// `max / min` over all modes' crossing times.
    pub spread_ratio: Option<f64>,
}

impl LevelTimes {
    pub fn new(times: Vec<Option<f64>>, levels: &[FeatureLevel]) -> Self {
        let mut by_level: BTreeMap<FeatureLevel, Vec<f64>> = BTreeMap::new();
        let complete = times.iter().all(Option::is_some);
        for (t, &level) in times.iter().zip(levels) {
            if let Some(t) = t {
                by_level.entry(level).or_default().push(*t);
            }
        }
        for v in by_level.values_mut() {
            v.sort_by(f64::total_cmp);
        }
        let order = complete.then(|| strict_order(&by_level)).flatten();
        let spread_ratio = window_of(&times).map(|w| w + 1.0);
        LevelTimes {
            times,
            by_level,
            order,
            spread_ratio,
        }
    }
}

fn strict_order(by_level: &BTreeMap<FeatureLevel, Vec<f64>>) -> Option<Vec<FeatureLevel>> {
    let mut levels: Vec<(FeatureLevel, f64, f64)> = by_level
        .iter()
        .map(|(&l, v)| (l, v[0], v[v.len() - 1]))
        .collect();
    levels.sort_by(|a, b| a.1.total_cmp(&b.1));
    levels
        .windows(2)
        .all(|w| w[0].2 < w[1].1)
        .then(|| levels.into_iter().map(|l| l.0).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub level_times: Option<LevelTimes>,
    /// Whether the strict level order equals the spectral-init order; `None`
    /// when either side has no strict order.
    pub ordering_matches: Option<bool>,
    pub resolution: Option<BlockResolution>,
    pub terminal_diagonal: Option<bool>,
    /// Set when the run failed (e.g. diverged); other fields are then empty.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitComparison {
    pub reference: LevelTimes,
    pub seeds: Vec<SeedOutcome>,
}

/// Runs the spectral-init reference and one norm-matched random init per
/// seed with otherwise identical settings.
pub fn compare_inits(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<InitComparison> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("compare_inits needs at least one seed".into()));
    }
    let problem = Problem::build(&cfg.step, &cfg.weighting)?;
    cfg.validate(&problem)?;
    let levels = mode_levels(cfg.step.k);
    let spectral = ExperimentConfig {
        init: InitSpec {
            kind: InitKind::Spectral,
            ..cfg.init.clone()
        },
        ..cfg.clone()
    };
    let reference = LevelTimes::new(run_on(&problem, &spectral)?.empirical_times, &levels);
    let seeds = seeds
        .iter()
        .map(|&seed| {
            let run = ExperimentConfig {
                init: InitSpec {
                    kind: InitKind::Random,
                    seed,
                    ..cfg.init.clone()
                },
                ..cfg.clone()
            };
            match run_on(&problem, &run) {
                Ok(report) => {
                    let lt = LevelTimes::new(report.empirical_times.clone(), &levels);
                    let ordering_matches = match (&lt.order, &reference.order) {
                        (Some(a), Some(b)) => Some(a == b),
                        _ => None,
                    };
                    SeedOutcome {
                        seed,
                        level_times: Some(lt),
                        ordering_matches,
                        resolution: Some(report.resolution),
                        terminal_diagonal: report.final_confusion().map(ConfusionMatrix::is_diagonal),
                        error: None,
                    }
                }
                Err(e) => SeedOutcome {
                    seed,
                    level_times: None,
                    ordering_matches: None,
                    resolution: None,
                    terminal_diagonal: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(InitComparison { reference, seeds })
}

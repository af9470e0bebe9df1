//! Configuration files, flag overrides and the fully resolved run config.

use std::path::Path;

use serde::de::{value::StrDeserializer, DeserializeOwned, IntoDeserializer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{InitKind, InitSpec, Integrator, RunSettings, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::experiments::{ExperimentConfig, OutputKind, Problem, Weighting};
use crate::sel::StepConfig;

pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_RECORD_EVERY: u64 = 10;
pub const SEED_ENV: &str = "UFM_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingMode {
    Vanilla,
    Reweighted,
}

/// A partially specified configuration, as read from a file or from flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub k: Option<usize>,
    #[serde(rename = "R")]
    pub ratio: Option<f64>,
    pub n_min: Option<usize>,
    pub d: Option<usize>,
    pub eta: Option<f64>,
    pub steps: Option<u64>,
    pub record_every: Option<u64>,
    pub integrator: Option<Integrator>,
    pub outputs: Option<Vec<OutputKind>>,
    #[serde(default)]
    pub weighting: WeightingFile,
    #[serde(default)]
    pub init: InitFile,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightingFile {
    pub mode: Option<WeightingMode>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitFile {
    pub kind: Option<InitKind>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    /// Values set in `other` replace ours.
    pub fn overridden_by(self, other: ConfigFile) -> ConfigFile {
        ConfigFile {
            k: other.k.or(self.k),
            ratio: other.ratio.or(self.ratio),
            n_min: other.n_min.or(self.n_min),
            d: other.d.or(self.d),
            eta: other.eta.or(self.eta),
            steps: other.steps.or(self.steps),
            record_every: other.record_every.or(self.record_every),
            integrator: other.integrator.or(self.integrator),
            outputs: other.outputs.or(self.outputs),
            weighting: WeightingFile {
                mode: other.weighting.mode.or(self.weighting.mode),
                gamma: other.weighting.gamma.or(self.weighting.gamma),
            },
            init: InitFile {
                kind: other.init.kind.or(self.init.kind),
                delta: other.init.delta.or(self.init.delta),
                seed: other.init.seed.or(self.init.seed),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedWeighting {
    pub mode: WeightingMode,
    /// Kept for vanilla runs too, where it has no effect.
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedInit {
    pub kind: InitKind,
    pub delta: f64,
    pub seed: u64,
}

/// Every key set, defaults applied and invariants checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub k: usize,
    #[serde(rename = "R")]
    pub ratio: f64,
    pub n_min: usize,
    pub d: usize,
    pub eta: f64,
    pub steps: u64,
    pub record_every: u64,
    pub integrator: Integrator,
    pub outputs: Vec<OutputKind>,
    pub weighting: ResolvedWeighting,
    pub init: ResolvedInit,
}

fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::Trajectory, OutputKind::Summary]
}

/// Reads `UFM_SEED`, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            Error::config("init.seed", format!("{SEED_ENV} must be a non-negative integer (got {v:?})"))
        }),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::config("init.seed", format!("{SEED_ENV}: {e}"))),
    }
}

/// Merges file values, the seed from the environment and flags (in that
/// order of increasing precedence), then fills in defaults.
pub fn resolve(file: ConfigFile, flags: ConfigFile, env_seed: Option<u64>) -> Result<ResolvedConfig> {
    let env = ConfigFile {
        init: InitFile {
            seed: env_seed,
            ..Default::default()
        },
        ..Default::default()
    };
    let c = file.overridden_by(env).overridden_by(flags);

    let k = c.k.ok_or_else(|| Error::config("StepConfig.k", "k is required"))?;
    let ratio = c.ratio.ok_or_else(|| Error::config("StepConfig.R", "R is required"))?;
    let step = StepConfig::new(k, ratio, c.n_min.unwrap_or(1), c.d.unwrap_or(2 * k))?;

    let weighting = ResolvedWeighting {
        mode: c.weighting.mode.unwrap_or(WeightingMode::Vanilla),
        gamma: c.weighting.gamma.unwrap_or(DEFAULT_GAMMA),
    };
    if !(0.0..=1.0).contains(&weighting.gamma) {
        return Err(Error::config(
            "weighting.gamma",
            format!("gamma must lie in [0, 1] (got {})", weighting.gamma),
        ));
    }
    let init = ResolvedInit {
        kind: c.init.kind.unwrap_or(InitKind::Spectral),
        delta: c.init.delta.unwrap_or(DEFAULT_DELTA),
        seed: c.init.seed.unwrap_or(0),
    };
    if !(init.delta.is_finite() && init.delta > 0.0) {
        return Err(Error::config("init.delta", "delta must be positive"));
    }

    let problem = Problem::build(&step, &experiment_weighting(&weighting))?;
    let eta = c.eta.unwrap_or_else(|| problem.default_eta());
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::config("eta", "eta must be positive"));
    }
    let resolved = ResolvedConfig {
        k,
        ratio,
        n_min: step.n_min,
        d: step.d,
        eta,
        steps: c.steps.unwrap_or_else(|| problem.saturating_steps(init.delta, eta)),
        record_every: c.record_every.unwrap_or(DEFAULT_RECORD_EVERY),
        integrator: c.integrator.unwrap_or_default(),
        outputs: c.outputs.unwrap_or_else(default_outputs),
        weighting,
        init,
    };
    resolved.experiment().validate(&problem)?;
    Ok(resolved)
}

fn experiment_weighting(w: &ResolvedWeighting) -> Weighting {
    match w.mode {
        WeightingMode::Vanilla => Weighting::Vanilla,
        WeightingMode::Reweighted => Weighting::Reweighted { gamma: w.gamma },
    }
}

impl ResolvedConfig {
    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            k: self.k,
            ratio: self.ratio,
            n_min: self.n_min,
            d: self.d,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            step: self.step_config(),
            weighting: experiment_weighting(&self.weighting),
            init: InitSpec {
                kind: self.init.kind,
                delta: self.init.delta,
                seed: self.init.seed,
                rotation: None,
            },
            run: RunSettings {
                eta: self.eta,
                steps: self.steps,
                record_every: self.record_every,
                integrator: self.integrator,
            },
            outputs: self.outputs.clone(),
        }
    }

    /// Canonical TOML text. Floats use the shortest representation that
    /// parses back to the same double.
    pub fn to_toml(&self) -> String {
        // every field is a plain scalar, list or table
        toml::to_string(self).expect("resolved config serializes")
    }

    /// Hex SHA-256 of [`ResolvedConfig::to_toml`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// Parses a lowercase enum name through its serde representation, for use as
/// a clap value parser.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    let de: StrDeserializer<serde::de::value::Error> = s.into_deserializer();
    T::deserialize(de).map_err(|e| e.to_string())
}

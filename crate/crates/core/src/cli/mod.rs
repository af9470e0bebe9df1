//! Command-line front end. `main.rs` only forwards to [`run`].

pub mod config;
pub mod emit;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dynamics::{InitKind, Integrator, DEFAULT_DELTA};
use crate::error::Result;
use crate::experiments::{
    compare_inits, run_experiment, sweep_window, sweep_window_empirical, OutputKind, Problem,
    DEFAULT_SWEEP_RATIOS,
};
use crate::spectral::{mode_levels, FeatureLevel};
use config::{env_seed, parse_enum, resolve, ConfigFile, InitFile, ResolvedConfig, WeightingFile, WeightingMode};
use emit::{
    compare_table, digest_text, emit_reports, sweep_table, theory_table, write_outputs, RunManifest,
    CONFIG_FILE,
};

#[derive(Debug, Parser)]
#[command(name = "ufm", version, about = "Unconstrained features model dynamics under STEP class imbalance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form singular values, factors and effective weights.
    Spectrum(ConfigArgs),
    /// One gradient descent run compared against the closed-form trajectories.
    Simulate(ConfigArgs),
    /// Closed-form mode trajectories on the run's record grid.
    Theory(ConfigArgs),
    /// Learning windows over a grid of imbalance ratios.
    Sweep(SweepArgs),
    /// Random versus spectral initialization.
    CompareInits(CompareArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "r", visible_alias = "R")]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, value_parser = parse_enum::<WeightingMode>)]
    pub weighting_mode: Option<WeightingMode>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_parser = parse_enum::<InitKind>)]
    pub init_kind: Option<InitKind>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub record_every: Option<u64>,
    #[arg(long, value_parser = parse_enum::<Integrator>)]
    pub integrator: Option<Integrator>,
    #[arg(long, value_delimiter = ',', value_parser = parse_enum::<OutputKind>)]
    pub outputs: Option<Vec<OutputKind>>,
    #[arg(long, default_value = "ufm-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, default_value_t = config::DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Also measure windows from spectral-init gradient descent.
    #[arg(long)]
    pub empirical: bool,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, default_value = "ufm-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
}

impl ConfigArgs {
    fn flags(&self) -> ConfigFile {
        ConfigFile {
            k: self.k,
            ratio: self.ratio,
            n_min: self.n_min,
            d: self.d,
            eta: self.eta,
            steps: self.steps,
            record_every: self.record_every,
            integrator: self.integrator,
            outputs: self.outputs.clone(),
            weighting: WeightingFile {
                mode: self.weighting_mode,
                gamma: self.gamma,
            },
            init: InitFile {
                kind: self.init_kind,
                delta: self.delta,
                seed: self.seed,
            },
        }
    }

    /// File, then `UFM_SEED`, then flags.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        resolve(file, self.flags(), env_seed()?)
    }
}

#[derive(Serialize)]
struct Spectrum {
    k: usize,
    #[serde(rename = "R")]
    ratio: f64,
    levels: Vec<FeatureLevel>,
    sigma: Vec<f64>,
    lambdas: Vec<f64>,
    learning_times: Vec<f64>,
    window: f64,
    weights: [f64; 2],
    /// Row-major `k × (k−1)`.
    u: Vec<Vec<f64>>,
    /// Row-major `n × (k−1)`.
    v: Vec<Vec<f64>>,
}

fn rows(m: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn spectrum(args: &ConfigArgs) -> Result<RunManifest> {
    let cfg = args.resolve()?;
    let exp = cfg.experiment();
    let p = Problem::build(&exp.step, &exp.weighting)?;
    let out = Spectrum {
        k: cfg.k,
        ratio: cfg.ratio,
        levels: mode_levels(cfg.k),
        sigma: p.sigma(),
        lambdas: p.lambdas(),
        learning_times: p.schedule.times.clone(),
        window: p.schedule.window,
        weights: [p.weights.majority_weight, p.weights.minority_weight],
        u: rows(&p.factors.u),
        v: rows(&p.factors.v),
    };
    let mut text = serde_json::to_string_pretty(&out).expect("spectrum serializes");
    text.push('\n');
    write_outputs(
        &args.out_dir,
        &[("spectrum.json", text), (CONFIG_FILE, cfg.to_toml())],
        cfg.digest(),
    )
}

fn simulate(args: &ConfigArgs) -> Result<RunManifest> {
    let cfg = args.resolve()?;
    let report = run_experiment(&cfg.experiment())?;
    emit_reports(&report, &cfg, &args.out_dir)
}

fn theory(args: &ConfigArgs) -> Result<RunManifest> {
    let cfg = args.resolve()?;
    write_outputs(
        &args.out_dir,
        &[("theory.csv", theory_table(&cfg)?), (CONFIG_FILE, cfg.to_toml())],
        cfg.digest(),
    )
}

fn sweep(args: &SweepArgs) -> Result<RunManifest> {
    let ratios = args.ratios.clone().unwrap_or_else(|| DEFAULT_SWEEP_RATIOS.to_vec());
    let rows = if args.empirical {
        sweep_window_empirical(args.k, &ratios, args.gamma, args.delta)?
    } else {
        sweep_window(args.k, &ratios, args.gamma)?
    };
    let key = format!(
        "sweep k={} ratios={:?} gamma={:?} empirical={} delta={:?}",
        args.k, ratios, args.gamma, args.empirical, args.delta
    );
    write_outputs(&args.out_dir, &[("sweep.csv", sweep_table(&rows))], digest_text(&key))
}

fn compare(args: &CompareArgs) -> Result<RunManifest> {
    let cfg = args.config.resolve()?;
    let cmp = compare_inits(&cfg.experiment(), &args.seeds)?;
    let mut json = serde_json::to_string_pretty(&cmp).expect("comparison serializes");
    json.push('\n');
    let key = format!("{}seeds = {:?}\n", cfg.to_toml(), args.seeds);
    write_outputs(
        &args.config.out_dir,
        &[("compare.csv", compare_table(&cmp)), ("compare.json", json), (CONFIG_FILE, cfg.to_toml())],
        digest_text(&key),
    )
}

/// Runs one parsed command and returns its manifest.
pub fn execute(cli: &Cli) -> Result<RunManifest> {
    match &cli.command {
        Command::Spectrum(a) => spectrum(a),
        Command::Simulate(a) => simulate(a),
        Command::Theory(a) => theory(a),
        Command::Sweep(a) => sweep(a),
        Command::CompareInits(a) => compare(a),
    }
}

/// Parses arguments, runs the command, prints the manifest and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(manifest) => {
            use std::io::Write;
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            // a closed stdout (e.g. piped into `head`) is not a failure
            let _ = writeln!(std::io::stdout(), "{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

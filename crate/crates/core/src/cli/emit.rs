//! Report files: CSV tables, JSON summaries and the run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ResolvedConfig;
use crate::dynamics::{step_limit_factor, theory_factor};
use crate::error::{Error, Result};
use crate::experiments::{ExperimentReport, InitComparison, OutputKind, Problem, WindowRow};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const CONFIG_FILE: &str = "resolved_config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub tool_version: String,
    pub outputs: Vec<PathBuf>,
}

/// Hex SHA-256 of arbitrary text.
pub fn digest_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}_{i}"))
}

fn csv_text<F>(header: Vec<String>, fill: F) -> String
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    // writes go to memory
    w.write_record(&header).expect("in-memory csv");
    fill(&mut w).expect("in-memory csv");
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv output is utf-8")
}

/// One row per recorded step:
/// `step,time,rescaled_time,mode_factor_*,logit_sigma_*,loss,theory_factor_*`.
pub fn trajectory_table(report: &ExperimentReport) -> String {
    let modes = report.sigma.len();
    let delta = report.config.init.delta;
    let header = ["step", "time", "rescaled_time"]
        .into_iter()
        .map(String::from)
        .chain(numbered("mode_factor", modes))
        .chain(numbered("logit_sigma", modes))
        .chain(std::iter::once("loss".to_string()))
        .chain(numbered("theory_factor", modes))
        .collect();
    let traj = &report.trajectory;
    csv_text(header, |w| {
        for i in 0..traj.len() {
            let mut row = vec![traj.sample_steps[i].to_string(), num(traj.times[i]), num(traj.times[i] / delta)];
            row.extend(traj.mode_factors[i].iter().map(|&x| num(x)));
            row.extend(traj.logit_singulars[i].iter().map(|&x| num(x)));
            row.push(num(traj.losses[i]));
            row.extend(report.theory[i].iter().map(|&x| num(x)));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

/// Confusion snapshots as `step,true_class,pred_1..pred_k`, classes 1-based.
pub fn confusion_table(report: &ExperimentReport) -> String {
    let k = report.config.step.k;
    let header = ["step", "true_class"]
        .into_iter()
        .map(String::from)
        .chain(numbered("pred", k))
        .collect();
    csv_text(header, |w| {
        for (step, cm) in &report.confusion_snapshots {
            for (c, row) in cm.counts.iter().enumerate() {
                let mut rec = vec![step.to_string(), (c + 1).to_string()];
                rec.extend(row.iter().map(u64::to_string));
                w.write_record(&rec)?;
            }
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct Summary<'a> {
    config_digest: String,
    /// Theory learning window `(T_max − T_min)/T_min`.
    window: f64,
    learning_times: &'a [f64],
    final_logit_singulars: Option<&'a Vec<f64>>,
    terminal_diagonal: Option<bool>,
    max_diagonal_residual: f64,
    max_off_subspace_residual: f64,
    #[serde(flatten)]
    report: &'a ExperimentReport,
}

pub fn summary_json(report: &ExperimentReport, cfg: &ResolvedConfig) -> String {
    let res = &report.trajectory.residuals;
    let summary = Summary {
        config_digest: cfg.digest(),
        window: report.schedule.window,
        learning_times: &report.schedule.times,
        final_logit_singulars: report.trajectory.logit_singulars.last(),
        terminal_diagonal: report.final_confusion().map(|c| c.is_diagonal()),
        max_diagonal_residual: res.iter().map(|r| r.diagonal).fold(0.0, f64::max),
        max_off_subspace_residual: res.iter().map(|r| r.off_subspace).fold(0.0, f64::max),
        report,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    text
}

/// Closed-form mode factors and their step-function limits on the run's
/// record grid.
pub fn theory_table(cfg: &ResolvedConfig) -> Result<String> {
    let exp = cfg.experiment();
    let problem = Problem::build(&exp.step, &exp.weighting)?;
    let sigma = problem.sigma();
    let lambdas = problem.lambdas();
    let delta = cfg.init.delta;
    let header = ["step", "time", "rescaled_time"]
        .into_iter()
        .map(String::from)
        .chain(numbered("theory_factor", sigma.len()))
        .chain(numbered("limit_factor", sigma.len()))
        .collect();
    Ok(csv_text(header, |w| {
        let mut step = 0;
        while step <= cfg.steps {
            let t = step as f64 * cfg.eta;
            let mut row = vec![step.to_string(), num(t), num(t / delta)];
            let modes = sigma.iter().zip(&lambdas);
            row.extend(modes.clone().map(|(&s, &l)| num(theory_factor(s, l, delta, t))));
            row.extend(modes.map(|(&s, &l)| num(step_limit_factor(s, l, t / delta))));
            w.write_record(&row)?;
            step += cfg.record_every;
        }
        Ok(())
    }))
}

pub fn sweep_table(rows: &[WindowRow]) -> String {
    let header = ["ratio", "window_vanilla", "window_reweighted", "empirical_vanilla", "empirical_reweighted"]
        .into_iter()
        .map(String::from)
        .collect();
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    csv_text(header, |w| {
        for r in rows {
            w.write_record([
                num(r.ratio),
                num(r.vanilla),
                num(r.reweighted),
                opt(r.empirical_vanilla),
                opt(r.empirical_reweighted),
            ])?;
        }
        Ok(())
    })
}

/// Per-seed crossing times, one row per seed with the spectral reference
/// first (seed column empty).
pub fn compare_table(cmp: &InitComparison) -> String {
    let modes = cmp.reference.times.len();
    let header = ["seed"]
        .into_iter()
        .map(String::from)
        .chain(numbered("crossing_time", modes))
        .chain(
            ["ordering_matches", "spread_ratio", "majority_resolved", "minority_resolved", "terminal_diagonal"]
                .into_iter()
                .map(String::from),
        )
        .collect();
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    let flag = |x: Option<bool>| x.map(|b| b.to_string()).unwrap_or_default();
    csv_text(header, |w| {
        let mut row = vec![String::new()];
        row.extend(cmp.reference.times.iter().map(|&t| opt(t)));
        row.extend([String::new(), opt(cmp.reference.spread_ratio), String::new(), String::new(), String::new()]);
        w.write_record(&row)?;
        for s in &cmp.seeds {
            let mut row = vec![s.seed.to_string()];
            match &s.level_times {
                Some(lt) => row.extend(lt.times.iter().map(|&t| opt(t))),
                None => row.extend(std::iter::repeat_n(String::new(), modes)),
            }
            row.push(flag(s.ordering_matches));
            row.push(opt(s.level_times.as_ref().and_then(|lt| lt.spread_ratio)));
            row.push(opt(s.resolution.and_then(|r| r.majority)));
            row.push(opt(s.resolution.and_then(|r| r.minority)));
            row.push(flag(s.terminal_diagonal));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

/// Writes `files` under `out_dir`, then the manifest listing them.
pub fn write_outputs(out_dir: &Path, files: &[(&str, String)], config_digest: String) -> Result<RunManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut outputs = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        outputs.push(path);
    }
    let manifest = RunManifest {
        config_digest,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Writes the report files selected by the config's `outputs`, plus the
/// resolved config and the manifest.
pub fn emit_reports(report: &ExperimentReport, cfg: &ResolvedConfig, out_dir: &Path) -> Result<RunManifest> {
    let mut files = Vec::new();
    for kind in &cfg.outputs {
        match kind {
            OutputKind::Trajectory => files.push((TRAJECTORY_FILE, trajectory_table(report))),
            OutputKind::Summary => files.push((SUMMARY_FILE, summary_json(report, cfg))),
            OutputKind::Confusion => files.push((CONFUSION_FILE, confusion_table(report))),
        }
    }
    files.push((CONFIG_FILE, cfg.to_toml()));
    write_outputs(out_dir, &files, cfg.digest())
}

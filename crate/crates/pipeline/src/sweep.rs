//! Offset sweep over methods and seeds, with per-run and aggregated CSVs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Method, SweepConfig};
use crate::error::{PipelineError, Result};
use crate::experiment::{evaluate, median, reconstruct, stitch_prediction, synthetic_prediction, warm_start, Scenario};

/// Scores of one (offset, method, seed) run. Wall time is kept apart so the
/// deterministic columns can be compared byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub offset: usize,
    pub method: Method,
    pub seed: u64,
    pub amp_mae: f64,
    pub amp_nrmse: f64,
    pub phase_mae: f64,
    pub phase_nrmse: f64,
    /// Sweeps run; zero for stitched-only.
    pub iterations: usize,
    pub converged: bool,
    pub wall_seconds: f64,
    pub median_iteration_seconds: f64,
}

/// Seed of the synthetic prediction, kept distinct from the phantom seed.
fn prediction_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_0f_9e37_79b9
}

/// All requested methods on one simulated scene.
pub fn run_scene(cfg: &SweepConfig, offset: usize, seed: u64) -> Result<Vec<RunRecord>> {
    let scene = Scenario::simulate(&cfg.simulation(offset, seed))?;
    let stitch_cfg = cfg.stitch.resolve(&cfg.probe)?;
    let needs_prediction = cfg.methods.iter().any(|m| *m != Method::Epie);
    let prediction = if needs_prediction {
        let start = Instant::now();
        let patches = synthetic_prediction(&scene, &cfg.prediction, prediction_seed(seed))?;
        Some((stitch_prediction(&scene, &patches, &stitch_cfg)?, start.elapsed().as_secs_f64()))
    } else {
        None
    };
    let mut records = Vec::new();
    for &method in &cfg.methods {
        let record = |m: ptycho_core::metrics::MetricsReport, iterations, converged, wall, per_iter| RunRecord {
            offset,
            method,
            seed,
            amp_mae: m.amp_mae,
            amp_nrmse: m.amp_nrmse,
            phase_mae: m.phase_mae,
            phase_nrmse: m.phase_nrmse,
            iterations,
            converged,
            wall_seconds: wall,
            median_iteration_seconds: per_iter,
        };
        match method {
            Method::StitchedOnly => {
                let (stitched, wall) = prediction.as_ref().expect("prediction built");
                let m = evaluate(&scene, &stitched.amplitude, &stitched.phase)?;
                records.push(record(m, 0, false, *wall, 0.0));
            }
            Method::Epie | Method::Epf => {
                let init = match method {
                    Method::Epf => Some(warm_start(&prediction.as_ref().expect("prediction built").0)),
                    _ => None,
                };
                let start = Instant::now();
                let rec = reconstruct(&scene.stack, &scene.probe, &scene.label.mask, &cfg.epie, init.as_ref())?;
                let wall = start.elapsed().as_secs_f64();
                let m = evaluate(&scene, &rec.amplitude, &rec.unwrapped_phase)?;
                let per_iter = median(&rec.iteration_seconds).unwrap_or(0.0);
                records.push(record(m, rec.iterations(), rec.converged, wall, per_iter));
            }
        }
    }
    Ok(records)
}

/// Runs every (offset, seed) scene, in parallel on the current rayon pool.
/// Records come back sorted by offset, method and seed.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let jobs: Vec<(usize, u64)> = cfg
        .offsets
        .iter()
        .flat_map(|&o| cfg.seeds.iter().map(move |&s| (o, s)))
        .collect();
    let mut records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(o, s)| run_scene(cfg, o, s))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    records.sort_by_key(|r| (r.offset, r.method, r.seed));
    Ok(records)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut s = String::from("offset,method,seed,amp_mae,amp_nrmse,phase_mae,phase_nrmse,iterations,converged\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.offset,
            r.method.name(),
            r.seed,
            r.amp_mae,
            r.amp_nrmse,
            r.phase_mae,
            r.phase_nrmse,
            r.iterations,
            r.converged
        ));
    }
    s
}

pub fn timing_csv(records: &[RunRecord]) -> String {
    let mut s = String::from("offset,method,seed,wall_seconds,median_iteration_seconds\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.offset,
            r.method.name(),
            r.seed,
            r.wall_seconds,
            r.median_iteration_seconds
        ));
    }
    s
}

/// Mean and sample standard deviation per (offset, method).
pub fn summary_csv(records: &[RunRecord]) -> String {
    let mut groups: BTreeMap<(usize, Method), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.offset, r.method)).or_default().push(r);
    }
    let mut s = String::from(
        "offset,method,runs,amp_mae_mean,amp_mae_std,amp_nrmse_mean,amp_nrmse_std,\
         phase_mae_mean,phase_mae_std,phase_nrmse_mean,phase_nrmse_std,iterations_mean,iterations_std\n",
    );
    for ((offset, method), rs) in groups {
        let stat = |f: fn(&RunRecord) -> f64| mean_std(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
        let cols = [
            stat(|r| r.amp_mae),
            stat(|r| r.amp_nrmse),
            stat(|r| r.phase_mae),
            stat(|r| r.phase_nrmse),
            stat(|r| r.iterations as f64),
        ];
        s.push_str(&format!("{offset},{},{}", method.name(), rs.len()));
        for (m, sd) in cols {
            s.push_str(&format!(",{m},{sd}"));
        }
        s.push('\n');
    }
    s
}

/// Runs the sweep and writes `runs.csv`, `summary.csv` and `timing.csv`.
pub fn cmd_sweep(cfg: &SweepConfig, out: &Path) -> Result<Vec<RunRecord>> {
    let records = run_sweep(cfg)?;
    crate::commands::create_dir(out)?;
    for (name, text) in [
        ("runs.csv", runs_csv(&records)),
        ("summary.csv", summary_csv(&records)),
        ("timing.csv", timing_csv(&records)),
    ] {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| PipelineError::io(path, e))?;
    }
    Ok(records)
}

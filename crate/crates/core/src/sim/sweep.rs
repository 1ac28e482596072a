use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::run_simulation;
use super::metrics::Summary;
use crate::config::RunConfig;
use crate::error::{Error, Result};

/// Mean and standard error across replications for one axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub replications: usize,
    pub aar_mean: f64,
    pub aar_stderr: f64,
    pub system_load_mean: f64,
    pub system_load_stderr: f64,
    pub gb_outage_rate_mean: f64,
    pub gb_outage_rate_stderr: f64,
    pub collision_rate_mean: f64,
    pub collision_rate_stderr: f64,
    pub energy_per_success_mean: f64,
    pub energy_per_success_stderr: f64,
    pub dropped_mean: f64,
    pub dropped_stderr: f64,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn display(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Sweeps `axis` (a dotted config key) over `values`, running `replications`
/// seeds `base_seed ^ i` at each value. The same seeds are reused at every
/// value.
pub fn sweep(
    cfg: &RunConfig,
    axis: &str,
    values: &[toml::Value],
    replications: usize,
    base_seed: u64,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if replications < 1 {
        return Err(Error::InvalidParameter("replications must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..replications as u64).map(|i| base_seed ^ i).collect();
    sweep_with_seeds(cfg, axis, values, &seeds, workers)
}

/// Sweep with explicit replication seeds.
pub fn sweep_with_seeds(
    cfg: &RunConfig,
    axis: &str,
    values: &[toml::Value],
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    let configs = values
        .iter()
        .map(|v| {
            let mut c = cfg.with_override(axis, v.clone())?;
            c.record_slots = false;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let run = |&(i, seed): &(usize, u64)| run_simulation(&configs[i], seed, 1).map(|m| m.summary);
    let summaries: Vec<Summary> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>>>())?
    } else {
        jobs.iter().map(run).collect::<Result<Vec<_>>>()?
    };

    Ok(values
        .iter()
        .zip(summaries.chunks(seeds.len()))
        .map(|(v, runs)| {
            let stat = |f: fn(&Summary) -> f64| mean_stderr(&runs.iter().map(f).collect::<Vec<_>>());
            let (aar_mean, aar_stderr) = stat(|s| s.aar);
            let (system_load_mean, system_load_stderr) = stat(|s| s.system_load);
            let (gb_outage_rate_mean, gb_outage_rate_stderr) = stat(|s| s.gb_outage_rate);
            let (collision_rate_mean, collision_rate_stderr) = stat(|s| s.collision_rate);
            let (energy_per_success_mean, energy_per_success_stderr) = stat(|s| s.energy_per_success);
            let (dropped_mean, dropped_stderr) = stat(|s| s.dropped as f64);
            SweepRow {
                axis: axis.to_string(),
                value: display(v),
                replications: runs.len(),
                aar_mean,
                aar_stderr,
                system_load_mean,
                system_load_stderr,
                gb_outage_rate_mean,
                gb_outage_rate_stderr,
                collision_rate_mean,
                collision_rate_stderr,
                energy_per_success_mean,
                energy_per_success_stderr,
                dropped_mean,
                dropped_stderr,
            }
        })
        .collect())
}

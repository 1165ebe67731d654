//! Cross-seed aggregation of metrics files, aligned on `env_steps`.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use hotgp::trainer::{mean_std, read_metrics, MetricsRow};
use serde::{Deserialize, Serialize};

pub const AGGREGATE_HEADER: &str = "env_steps,n_seeds,mean_eval_return,std_eval_return,mean_model_nll,mean_r_min";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub env_steps: u64,
    pub n_seeds: usize,
    pub mean_eval_return: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub std_eval_return: f64,
    /// Mean over the seeds that have a held-out score at this step.
    pub mean_model_nll: Option<f64>,
    pub mean_r_min: f64,
}

/// One row per distinct `env_steps`, averaging the runs that reported it.
pub fn aggregate(runs: &[Vec<MetricsRow>]) -> Vec<AggregateRow> {
    let mut by_step: BTreeMap<u64, Vec<&MetricsRow>> = BTreeMap::new();
    for run in runs {
        for row in run {
            by_step.entry(row.env_steps).or_default().push(row);
        }
    }
    by_step
        .into_iter()
        .map(|(env_steps, rows)| {
            let returns: Vec<f64> = rows.iter().map(|r| r.mean_eval_return).collect();
            let (mean, std) = mean_std(&returns);
            let nll: Vec<f64> = rows.iter().filter_map(|r| r.model_nll).collect();
            let r_min: Vec<f64> = rows.iter().map(|r| r.r_min).collect();
            AggregateRow {
                env_steps,
                n_seeds: rows.len(),
                mean_eval_return: mean,
                std_eval_return: std,
                mean_model_nll: (!nll.is_empty()).then(|| mean_std(&nll).0),
                mean_r_min: mean_std(&r_min).0,
            }
        })
        .collect()
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(AGGREGATE_HEADER.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate(path: &Path) -> anyhow::Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    anyhow::ensure!(header == AGGREGATE_HEADER, "{}: unexpected header `{header}`", path.display());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Metrics of each run directory, erroring with the missing file's path.
pub fn load_runs(dirs: &[&Path]) -> anyhow::Result<Vec<Vec<MetricsRow>>> {
    dirs.iter()
        .map(|d| {
            let path = d.join("metrics.csv");
            anyhow::ensure!(path.is_file(), "missing metrics file: {}", path.display());
            Ok(read_metrics(&path)?)
        })
        .collect()
}

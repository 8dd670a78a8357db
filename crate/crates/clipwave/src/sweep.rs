//! T-sweeps and σ-sweeps over seeds.

use std::path::Path;
use std::str::FromStr;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{run_experiment, RunRecord};
use crate::queue;
use crate::records::{RecordWriter, RECORDS_FILE};

/// Values of the swept variable, parsed from `T=256,1024` or `sigma=0.25,0.5`.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepGrid {
    Horizon(Vec<u64>),
    Sigma(Vec<f64>),
}

impl FromStr for SweepGrid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, values) = s.split_once('=').ok_or_else(|| format!("expected NAME=v1,v2,..., got {s:?}"))?;
        let parts = values.split(',').map(str::trim).filter(|v| !v.is_empty());
        match name.trim() {
            "T" => parts
                .map(|v| v.parse::<u64>().map_err(|e| format!("bad T value {v:?}: {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(SweepGrid::Horizon),
            "sigma" => parts
                .map(|v| v.parse::<f64>().map_err(|e| format!("bad sigma value {v:?}: {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(SweepGrid::Sigma),
            other => Err(format!("unknown sweep variable {other:?}, expected T or sigma")),
        }
    }
}

impl SweepGrid {
    /// One configuration per grid value.
    pub fn configs(&self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        match self {
            SweepGrid::Horizon(ts) => ts.iter().map(|&t| base.with_horizon(t)).collect(),
            SweepGrid::Sigma(ss) => ss.iter().map(|&s| base.with_sigma(s)).collect(),
        }
    }
}

/// Runs every grid value with seeds `0..seeds` on `threads` workers. Records
/// are appended to `out/records.csv` in grid-then-seed order when `out` is given.
pub fn run_sweep(
    base: &ExperimentConfig,
    grid: &SweepGrid,
    seeds: u64,
    threads: usize,
    out: Option<&Path>,
) -> Result<Vec<RunRecord>> {
    let configs = grid.configs(base);
    for c in &configs {
        c.validate()?;
    }
    let jobs: Vec<(usize, u64)> = (0..configs.len()).flat_map(|i| (0..seeds).map(move |s| (i, s))).collect();
    let mut writer = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
            Some(RecordWriter::append(&dir.join(RECORDS_FILE))?)
        }
        None => None,
    };
    let mut records = Vec::with_capacity(jobs.len());
    queue::run_ordered(
        &jobs,
        threads,
        |&(i, seed)| run_experiment(&configs[i], seed),
        |_, result| {
            let record = result?;
            if let Some(w) = writer.as_mut() {
                w.write(&record)?;
            }
            records.push(record);
            Ok::<(), HarnessError>(())
        },
    )?;
    Ok(records)
}

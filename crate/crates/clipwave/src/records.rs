//! `records.csv` and `rates.json`.

use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Exponent;
use crate::error::{HarnessError, Result};
use crate::experiment::RunRecord;
use crate::rates::RateFit;

pub const RECORDS_FILE: &str = "records.csv";
pub const RATES_FILE: &str = "rates.json";

#[derive(Serialize, Deserialize)]
struct Row {
    config_digest: String,
    seed: u64,
    #[serde(rename = "T")]
    horizon: u64,
    sigma: f64,
    s: f64,
    p: Exponent,
    q: Exponent,
    #[serde(rename = "B")]
    b: f64,
    risk: f64,
    regret: f64,
    experts: usize,
    ms: u64,
}

impl From<&RunRecord> for Row {
    fn from(r: &RunRecord) -> Self {
        Row {
            config_digest: r.config_digest.clone(),
            seed: r.seed,
            horizon: r.horizon,
            sigma: r.sigma,
            s: r.s,
            p: r.p,
            q: r.q,
            b: r.b,
            risk: r.risk,
            regret: r.regret,
            experts: r.experts,
            ms: r.ms,
        }
    }
}

/// Appends records, writing the header when the file is new or empty.
pub struct RecordWriter {
    inner: csv::Writer<std::fs::File>,
}

impl RecordWriter {
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| HarnessError::io(path, e))?;
        let empty = file.metadata().map_err(|e| HarnessError::io(path, e))?.len() == 0;
        let inner = csv::WriterBuilder::new().has_headers(empty).from_writer(file);
        Ok(Self { inner })
    }

    pub fn write(&mut self, record: &RunRecord) -> Result<()> {
        self.inner.serialize(Row::from(record))?;
        self.inner.flush().map_err(|e| HarnessError::io("records.csv", e))?;
        Ok(())
    }
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize::<Row>() {
        let r = row?;
        out.push(RunRecord {
            config_digest: r.config_digest,
            seed: r.seed,
            horizon: r.horizon,
            sigma: r.sigma,
            s: r.s,
            p: r.p,
            q: r.q,
            b: r.b,
            risk: r.risk,
            regret: r.regret,
            experts: r.experts,
            ms: r.ms,
            version: String::new(),
        });
    }
    Ok(out)
}

pub fn write_rates(path: &Path, fit: &RateFit) -> Result<()> {
    let text = serde_json::to_string_pretty(fit)?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

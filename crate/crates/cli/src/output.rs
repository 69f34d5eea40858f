//! CSV result schema.
//!
//! Columns, in order: `experiment, metric, member, n, rate, param, estimate,
//! ci_low, ci_high, trials`. Empty cells mean "not applicable". Wall time is
//! kept out of the results file so reruns stay byte-identical.

use std::path::Path;

use distcomm_core::stats::{MeanEstimate, Proportion};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub metric: String,
    pub member: String,
    pub n: Option<usize>,
    pub rate: Option<f64>,
    pub param: Option<f64>,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: Option<u64>,
}

impl ResultRow {
    /// Deterministic value: the interval collapses onto it.
    pub fn exact(experiment: &str, metric: &str, value: f64) -> Self {
        Self {
            experiment: experiment.into(),
            metric: metric.into(),
            member: String::new(),
            n: None,
            rate: None,
            param: None,
            estimate: value,
            ci_low: value,
            ci_high: value,
            trials: None,
        }
    }

    pub fn proportion(experiment: &str, metric: &str, p: &Proportion) -> Self {
        Self {
            estimate: p.estimate,
            ci_low: p.ci_low,
            ci_high: p.ci_high,
            trials: Some(p.trials),
            ..Self::exact(experiment, metric, 0.0)
        }
    }

    pub fn mean(experiment: &str, metric: &str, m: &MeanEstimate) -> Self {
        Self {
            estimate: m.mean,
            ci_low: m.ci_low.min(m.mean),
            ci_high: m.ci_high.max(m.mean),
            trials: Some(m.samples),
            ..Self::exact(experiment, metric, 0.0)
        }
    }

    pub fn member(mut self, member: impl Into<String>) -> Self {
        self.member = member.into();
        self
    }

    pub fn n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn rate(mut self, rate: f64) -> Self {
        self.rate = Some(rate);
        self
    }

    pub fn param(mut self, param: f64) -> Self {
        self.param = Some(param);
        self
    }
}

pub const COLUMNS: [&str; 10] = [
    "experiment",
    "metric",
    "member",
    "n",
    "rate",
    "param",
    "estimate",
    "ci_low",
    "ci_high",
    "trials",
];

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .collect::<Result<Vec<ResultRow>, _>>()
        .map_err(Into::into)
}

pub fn write_timing(path: &Path, experiment: &str, seconds: f64) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["experiment", "wall_seconds"])?;
    w.write_record([experiment, &format!("{seconds:.3}")])?;
    w.flush()?;
    Ok(())
}

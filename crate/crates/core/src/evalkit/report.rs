use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{CurvePoint, MetricsReport};
use crate::provenance::{Provenance, TOOL_VERSION};
use crate::scalar::Scalar;

/// Column order of the CSV report.
pub const CSV_COLUMNS: [&str; 15] = [
    "experiment",
    "backend",
    "sampler",
    "train_size",
    "n",
    "auroc",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "seed",
    "config_digest",
    "skipped",
    "recall_mean",
    "tool_version",
];

/// One experiment result. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ExperimentRow<F> {
    pub experiment: String,
    pub backend: String,
    pub sampler: Option<String>,
    pub train_size: Option<usize>,
    pub n: u64,
    pub auroc: Option<F>,
    pub accuracy: Option<F>,
    pub precision: Option<F>,
    pub recall: Option<F>,
    pub f1: Option<F>,
    pub seed: u64,
    pub config_digest: String,
    pub skipped: u64,
    pub recall_mean: Option<F>,
    pub tool_version: String,
}

impl<F: Scalar> ExperimentRow<F> {
    pub fn empty(experiment: &str, backend: &str, seed: u64, config_digest: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            backend: backend.to_string(),
            sampler: None,
            train_size: None,
            n: 0,
            auroc: None,
            accuracy: None,
            precision: None,
            recall: None,
            f1: None,
            seed,
            config_digest: config_digest.to_string(),
            skipped: 0,
            recall_mean: None,
            tool_version: TOOL_VERSION.to_string(),
        }
    }

    pub fn from_metrics(experiment: &str, backend: &str, seed: u64, config_digest: &str, m: &MetricsReport<F>) -> Self {
        Self {
            n: m.n,
            auroc: m.auroc,
            accuracy: Some(m.accuracy),
            precision: Some(m.precision),
            recall: Some(m.recall),
            f1: Some(m.f1),
            ..Self::empty(experiment, backend, seed, config_digest)
        }
    }

    pub fn from_curve_point(experiment: &str, seed: u64, config_digest: &str, p: &CurvePoint<F>) -> Self {
        Self {
            sampler: Some(p.sampler.clone()),
            train_size: Some(p.train_size),
            ..Self::from_metrics(experiment, &p.backend, seed, config_digest, &p.metrics)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ReportFile<F> {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub rows: Vec<ExperimentRow<F>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

pub fn write_report_json<F: Scalar, W: Write>(report: &ReportFile<F>, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Header row then one row per experiment. Absent values are empty cells.
pub fn write_report_csv<F: Scalar, W: Write>(rows: &[ExperimentRow<F>], out: W) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

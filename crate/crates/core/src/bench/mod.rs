//! Manifest-driven evaluation: label harmonisation, per-region metrics,
//! per-method summaries with significance tests, volume repeatability across
//! sequences, and CSV/SVG reports.

mod evaluate;
mod manifest;
mod repeat;
mod report;
mod summary;
mod svg;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricError;
use crate::stats::StatsError;
use crate::volume::{NiftiError, VolumeError};

pub use evaluate::{evaluate_case, harmonize_labels, run_evaluation};
pub use manifest::{load_manifest, Case, EvaluationPlan, RegionMapping};
pub use repeat::{repeatability_report, FriedmanRow, RepeatabilityReport, Trajectory};
pub use report::{emit_reports, write_friedman, write_summary};
pub use summary::{summarize, MetricSummary, SummaryRow, SummaryTable};
pub use svg::{boxplot_svg, quartiles, repeatability_svg, BoxStats};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}, line {line}: {message}")]
    Manifest { path: PathBuf, line: u64, message: String },
    #[error("region mapping {path}: {message}")]
    Mapping { path: PathBuf, message: String },
    #[error("case {case}: {source}")]
    Case { case: String, source: Box<BenchError> },
    #[error(transparent)]
    Nifti(#[from] NiftiError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Metrics of one region of one case. Missing values serialise as empty
/// CSV cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub dataset: String,
    pub subject: String,
    pub sequence: String,
    pub method: String,
    pub region: String,
    pub dice: Option<f64>,
    pub hd95_mm: Option<f64>,
    pub gt_volume_ml: f64,
    pub pred_volume_ml: f64,
}

impl EvaluationRecord {
    pub fn sort_key(&self) -> (&str, &str, &str, &str, &str) {
        (&self.dataset, &self.subject, &self.sequence, &self.method, &self.region)
    }
}

/// Sorts by (dataset, subject, sequence, method, region).
pub fn sort_records(records: &mut [EvaluationRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

pub fn write_records(path: impl AsRef<Path>, records: &[EvaluationRecord]) -> Result<(), BenchError> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| BenchError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if records.is_empty() {
        w.write_record([
            "dataset",
            "subject",
            "sequence",
            "method",
            "region",
            "dice",
            "hd95_mm",
            "gt_volume_ml",
            "pred_volume_ml",
        ])
        .map_err(csv_err)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<EvaluationRecord>, BenchError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| BenchError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| BenchError::Csv {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

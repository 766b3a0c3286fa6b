use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{prf_from_counts, EvalOptions};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported report version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentScore {
    pub name: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub edit_score: f64,
}

/// Micro-averaged detection counts and the mean document Edit Score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub documents: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_edit_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub version: u32,
    pub config: EvalOptions,
    pub documents: Vec<DocumentScore>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    pub fn new(config: EvalOptions, documents: Vec<DocumentScore>) -> Self {
        let aggregate = Aggregate::from_documents(&documents);
        Self {
            version: REPORT_VERSION,
            config,
            documents,
            aggregate,
        }
    }
}

impl Aggregate {
    pub fn from_documents(docs: &[DocumentScore]) -> Self {
        let tp = docs.iter().map(|d| d.tp).sum();
        let fp = docs.iter().map(|d| d.fp).sum();
        let fn_ = docs.iter().map(|d| d.fn_).sum();
        let prf = prf_from_counts(tp, fp, fn_);
        // an empty document set behaves like a single empty-GT document
        let mean_edit_score = if docs.is_empty() {
            1.0
        } else {
            docs.iter().map(|d| d.edit_score).sum::<f64>() / docs.len() as f64
        };
        Self {
            documents: docs.len(),
            tp,
            fp,
            fn_,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            mean_edit_score,
        }
    }
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<(), ReportError> {
    let json = serde_json::to_string_pretty(report)?;
    fs::write(path, json).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_report(path: &Path) -> Result<EvalReport, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let report: EvalReport = serde_json::from_str(&text)?;
    if report.version != REPORT_VERSION {
        return Err(ReportError::Version(report.version));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(name: &str, tp: usize, fp: usize, fn_: usize, es: f64) -> DocumentScore {
        let prf = prf_from_counts(tp, fp, fn_);
        DocumentScore {
            name: name.into(),
            tp,
            fp,
            fn_,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            edit_score: es,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let report = EvalReport::new(
            EvalOptions::default(),
            vec![doc("a", 3, 1, 2, 0.1 + 0.2), doc("b", 0, 4, 0, 1.0 / 3.0)],
        );
        write_report(&report, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), report);
    }

    #[test]
    fn aggregate_is_micro_averaged() {
        let report = EvalReport::new(EvalOptions::default(), vec![doc("a", 3, 1, 2, 0.5), doc("b", 1, 0, 0, 1.0)]);
        let agg = &report.aggregate;
        let expect = prf_from_counts(4, 1, 2);
        assert_eq!((agg.tp, agg.fp, agg.fn_), (4, 1, 2));
        assert_eq!(agg.f1, expect.f1);
        assert_eq!(agg.mean_edit_score, 0.75);
    }

    #[test]
    fn empty_report() {
        let report = EvalReport::new(EvalOptions::default(), vec![]);
        assert_eq!((report.aggregate.tp, report.aggregate.fp, report.aggregate.fn_), (0, 0, 0));
        assert_eq!(report.aggregate.mean_edit_score, 1.0);
    }

    #[test]
    fn rejects_other_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let mut report = EvalReport::new(EvalOptions::default(), vec![]);
        report.version = 99;
        write_report(&report, &path).unwrap();
        assert!(matches!(read_report(&path), Err(ReportError::Version(99))));
    }
}

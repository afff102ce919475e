//! Minority-class metrics, threshold selection, and metrics file emission.

use super::HarnessError;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

/// Precision, recall, F1 for the minority class (class 1). Denominator-zero
/// cases are defined as 0.
pub fn precision_recall_f1(predictions: &[u8], labels: &[u8]) -> Result<(f64, f64, f64), HarnessError> {
    if predictions.len() != labels.len() {
        return Err(HarnessError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}

/// Minority-class F1.
pub fn f1_minority(predictions: &[u8], labels: &[u8]) -> Result<f64, HarnessError> {
    precision_recall_f1(predictions, labels).map(|(_, _, f1)| f1)
}

/// The decision-threshold grid 0.3..=0.9 in steps of 0.1.
pub fn threshold_grid() -> Vec<f64> {
    (3..=9).map(|i| i as f64 / 10.0).collect()
}

/// Grid threshold maximizing validation minority F1; ties break toward the
/// lowest threshold. The validation set must contain both classes.
pub fn select_threshold(scores: &[f64], labels: &[u8]) -> Result<f64, HarnessError> {
    if scores.len() != labels.len() {
        return Err(HarnessError::LengthMismatch { predictions: scores.len(), labels: labels.len() });
    }
    if !labels.contains(&1) || !labels.contains(&0) {
        return Err(HarnessError::SingleClassValidation);
    }
    let mut best = (0.3, -1.0);
    for t in threshold_grid() {
        let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s >= t)).collect();
        let f1 = f1_minority(&preds, labels)?;
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    Ok(best.0)
}

/// One emitted metrics row (one fold of one configuration).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub config: String,
    pub fold: usize,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub seconds: f64,
}

pub const METRICS_CSV_HEADER: &str = "dataset,config,fold,threshold,precision,recall,f1,seconds";

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.3}\n",
            r.dataset, r.config, r.fold, r.threshold, r.precision, r.recall, r.f1, r.seconds
        ));
    }
    out
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    let mut f = fs::File::create(path)
        .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
    f.write_all(metrics_to_csv(rows).as_bytes())
        .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

pub fn write_metrics_json(path: &Path, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    let body = serde_json::to_string_pretty(rows).expect("metrics serialize");
    fs::write(path, body)
        .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

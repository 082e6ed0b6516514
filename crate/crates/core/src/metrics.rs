//! Classification metrics: confusion matrices, per-class precision, recall
//! and F1, unweighted macro averages, and report rendering.
//!
//! Stored values are full precision; two-decimal rounding happens only when
//! a report is rendered.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EmotionLabel;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("truth has {truth} entries but predictions have {preds}")]
    LengthMismatch { truth: usize, preds: usize },
    #[error("label {label:?} is not in the declared label list")]
    UnknownLabel { label: String },
    #[error("cannot average an empty metrics list")]
    EmptyInput,
}

/// K x K count table; rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<EmotionLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Tallies `counts[i][j] = |{t : truth_t = label_i and pred_t = label_j}|`.
    pub fn compute(
        truth: &[EmotionLabel],
        preds: &[EmotionLabel],
        labels: &[EmotionLabel],
    ) -> Result<Self, MetricsError> {
        if truth.len() != preds.len() {
            return Err(MetricsError::LengthMismatch {
                truth: truth.len(),
                preds: preds.len(),
            });
        }
        let index_of = |label: &EmotionLabel| {
            labels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| MetricsError::UnknownLabel {
                    label: label.to_string(),
                })
        };
        let k = labels.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (t, p) in truth.iter().zip(preds) {
            counts[index_of(t)?][index_of(p)?] += 1;
        }
        Ok(Self {
            labels: labels.to_vec(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn label_index(&self, label: &EmotionLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// CSV with a header row and a leading column of true-label names.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("true\\pred");
        for label in &self.labels {
            let _ = write!(out, ",{label}");
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(out, "{label}");
            for count in row {
                let _ = write!(out, ",{count}");
            }
            out.push('\n');
        }
        out
    }
}

/// Precision, recall, and F1 for one class (or a macro average).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Per-class metrics from a confusion matrix. Ratios with a zero denominator
/// are defined as 0.
pub fn precision_recall_f1(
    matrix: &ConfusionMatrix,
    label: &EmotionLabel,
) -> Result<ClassMetrics, MetricsError> {
    let idx = matrix
        .label_index(label)
        .ok_or_else(|| MetricsError::UnknownLabel {
            label: label.to_string(),
        })?;
    let tp = matrix.counts[idx][idx];
    let predicted: u64 = matrix.counts.iter().map(|row| row[idx]).sum();
    let actual: u64 = matrix.counts[idx].iter().sum();

    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(ClassMetrics::new(ratio(tp, predicted), ratio(tp, actual)))
}

/// Unweighted arithmetic mean of each field. Macro-F1 is the mean of the
/// per-class F1 values, not the F1 of the mean precision and recall.
pub fn macro_average(per_class: &[ClassMetrics]) -> Result<ClassMetrics, MetricsError> {
    if per_class.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = per_class.len() as f64;
    let sum = per_class.iter().fold((0.0, 0.0, 0.0), |acc, m| {
        (acc.0 + m.precision, acc.1 + m.recall, acc.2 + m.f1)
    });
    Ok(ClassMetrics {
        precision: sum.0 / n,
        recall: sum.1 / n,
        f1: sum.2 / n,
    })
}

/// A labelled metrics row in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: EmotionLabel,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

/// Full evaluation output: confusion matrix, per-class rows, macro row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub model: String,
    pub per_class: Vec<ReportRow>,
    pub macro_avg: ClassMetrics,
    pub matrix: ConfusionMatrix,
}

/// Assembles the confusion matrix, per-class metrics, and the macro row.
pub fn classification_report(
    truth: &[EmotionLabel],
    preds: &[EmotionLabel],
    labels: &[EmotionLabel],
    dataset: impl Into<String>,
    model: impl Into<String>,
) -> Result<EvaluationReport, MetricsError> {
    let matrix = ConfusionMatrix::compute(truth, preds, labels)?;
    let per_class = labels
        .iter()
        .map(|label| {
            Ok(ReportRow {
                label: label.clone(),
                metrics: precision_recall_f1(&matrix, label)?,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let metrics_only: Vec<ClassMetrics> = per_class.iter().map(|row| row.metrics).collect();
    let macro_avg = macro_average(&metrics_only)?;
    Ok(EvaluationReport {
        dataset: dataset.into(),
        model: model.into(),
        per_class,
        macro_avg,
        matrix,
    })
}

impl EvaluationReport {
    /// Full-precision JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// CSV rows `label,precision,recall,f1` at two decimals, ending with the
    /// macro row.
    pub fn to_table_csv(&self) -> String {
        let mut out = String::from("label,precision,recall,f1\n");
        for row in &self.per_class {
            let _ = writeln!(
                out,
                "{},{:.2},{:.2},{:.2}",
                row.label, row.metrics.precision, row.metrics.recall, row.metrics.f1
            );
        }
        let _ = writeln!(
            out,
            "macro (avg),{:.2},{:.2},{:.2}",
            self.macro_avg.precision, self.macro_avg.recall, self.macro_avg.f1
        );
        out
    }

    /// Human-readable table for terminal output.
    pub fn render_text(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|row| row.label.as_str().len())
            .chain(std::iter::once("macro (avg)".len()))
            .max()
            .unwrap_or(8);
        let mut out = format!("{} on {}\n", self.model, self.dataset);
        let _ = writeln!(out, "{:width$}  {:>5}  {:>5}  {:>5}", "label", "P", "R", "F1");
        for row in &self.per_class {
            let _ = writeln!(
                out,
                "{:width$}  {:>5.2}  {:>5.2}  {:>5.2}",
                row.label.as_str(),
                row.metrics.precision,
                row.metrics.recall,
                row.metrics.f1
            );
        }
        let _ = writeln!(
            out,
            "{:width$}  {:>5.2}  {:>5.2}  {:>5.2}",
            "macro (avg)",
            self.macro_avg.precision,
            self.macro_avg.recall,
            self.macro_avg.f1
        );
        out
    }
}

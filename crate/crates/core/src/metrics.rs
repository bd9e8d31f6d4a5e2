//! Multi-class confusion matrix and classification report.
//!
//! Per class `c` (one-vs-rest): precision `TP/(TP+FP)`, recall `TP/(TP+FN)`,
//! F1 `2·P·R/(P+R)`. A rate whose denominator is zero is reported as 0.0 and the
//! class is flagged. Accuracy is `trace/total`. Weighted averages weight each
//! class by its support and are accumulated in exact rational arithmetic, so the
//! weighted recall is bit-identical to the accuracy.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {label} at position {index} is outside [0, {classes})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("confusion matrix is empty")]
    Empty,
    #[error("{names} class names for {classes} classes")]
    ClassNames { names: usize, classes: usize },
}

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let k = class_names.len();
        Self {
            counts: vec![vec![0; k]; k],
            class_names,
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|c| self.counts[c][c]).sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..self.k()).filter(|&t| t != c).map(|t| self.counts[t][c]).sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..self.k()).filter(|&p| p != c).map(|p| self.counts[c][p]).sum()
    }

    pub fn true_negatives(&self, c: usize) -> u64 {
        self.total() - self.true_positives(c) - self.false_positives(c) - self.false_negatives(c)
    }

    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }
}

fn default_names(k: usize) -> Vec<String> {
    (0..k).map(|c| c.to_string()).collect()
}

/// Tallies `(truth, prediction)` pairs. Classes are named by index.
pub fn confusion(truth: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix, MetricsError> {
    confusion_named(truth, predicted, default_names(k))
}

pub fn confusion_named(
    truth: &[usize],
    predicted: &[usize],
    class_names: Vec<String>,
) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    let k = class_names.len();
    let mut cm = ConfusionMatrix::new(class_names);
    for (index, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
        for label in [t, p] {
            if label >= k {
                return Err(MetricsError::LabelOutOfRange {
                    index,
                    label,
                    classes: k,
                });
            }
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Zero-denominator flags, e.g. "no predicted samples".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> BigRational {
    if den == 0 {
        BigRational::zero()
    } else {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("rates lie in [0, 1]")
}

pub fn report(cm: &ConfusionMatrix) -> Result<ClassificationReport, MetricsError> {
    let total = cm.total();
    if cm.k() == 0 || total == 0 {
        return Err(MetricsError::Empty);
    }
    if cm.class_names.len() != cm.k() {
        return Err(MetricsError::ClassNames {
            names: cm.class_names.len(),
            classes: cm.k(),
        });
    }
    let mut classes = Vec::with_capacity(cm.k());
    let mut w_p = BigRational::zero();
    let mut w_r = BigRational::zero();
    let mut w_f = BigRational::zero();
    for c in 0..cm.k() {
        let (tp, fp, fn_) = (cm.true_positives(c), cm.false_positives(c), cm.false_negatives(c));
        let support = tp + fn_;
        let mut notes = Vec::new();
        if tp + fp == 0 {
            notes.push("no predicted samples".to_string());
        }
        if support == 0 {
            notes.push("no actual samples".to_string());
        }
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, support);
        // 2PR/(P+R) reduces to 2TP/(2TP+FP+FN); zero when TP is zero
        let f = ratio(2 * tp, 2 * tp + fp + fn_);
        let weight = BigRational::from_integer(BigInt::from(support));
        w_p += &weight * &p;
        w_r += &weight * &r;
        w_f += &weight * &f;
        classes.push(ClassMetrics {
            name: cm.class_names[c].clone(),
            precision: to_f64(&p),
            recall: to_f64(&r),
            f1: to_f64(&f),
            support,
            tp,
            fp,
            tn: total - tp - fp - fn_,
            fn_,
            notes,
        });
    }
    let n = BigRational::from_integer(BigInt::from(total));
    Ok(ClassificationReport {
        classes,
        accuracy: to_f64(&ratio(cm.trace(), total)),
        weighted_precision: to_f64(&(w_p / &n)),
        weighted_recall: to_f64(&(w_r / &n)),
        weighted_f1: to_f64(&(w_f / &n)),
        total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    /// Pretty-printed JSON.
    Structured,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            "structured" | "json" => Ok(Self::Structured),
            other => Err(format!("unknown report format {other:?} (table, csv, structured)")),
        }
    }
}

pub fn render_report(report: &ClassificationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => render_table(report),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Structured => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
    }
}

fn render_table(report: &ClassificationReport) -> String {
    let width = report
        .classes
        .iter()
        .map(|c| c.name.len() + usize::from(!c.notes.is_empty()))
        .chain([12])
        .max()
        .unwrap_or(12);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>9}  {:>6}  {:>4}  {:>7}", "Class", "Precision", "Recall", "F1", "Support");
    for c in &report.classes {
        let name = if c.notes.is_empty() { c.name.clone() } else { format!("{}*", c.name) };
        let _ = writeln!(
            out,
            "{name:<width$}  {:>9.2}  {:>6.2}  {:>4.2}  {:>7}",
            c.precision, c.recall, c.f1, c.support
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<width$}  {:>9}  {:>6}  {:>4.2}  {:>7}", "Accuracy", "", "", report.accuracy, report.total);
    let _ = writeln!(
        out,
        "{:<width$}  {:>9.2}  {:>6.2}  {:>4.2}  {:>7}",
        "Weighted avg", report.weighted_precision, report.weighted_recall, report.weighted_f1, report.total
    );
    out
}

/// Flag legend for classes marked `*` in the table; empty when nothing is flagged.
pub fn table_notes(report: &ClassificationReport) -> String {
    let mut out = String::new();
    for c in report.classes.iter().filter(|c| !c.notes.is_empty()) {
        let _ = writeln!(out, "* {}: {} (rate reported as 0.00)", c.name, c.notes.join(", "));
    }
    out
}

fn render_csv(report: &ClassificationReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class", "precision", "recall", "f1", "support"]).expect("memory");
    for c in &report.classes {
        w.write_record([
            c.name.clone(),
            c.precision.to_string(),
            c.recall.to_string(),
            c.f1.to_string(),
            c.support.to_string(),
        ])
        .expect("memory");
    }
    w.write_record([
        "accuracy".to_string(),
        String::new(),
        String::new(),
        report.accuracy.to_string(),
        report.total.to_string(),
    ])
    .expect("memory");
    w.write_record([
        "weighted_avg".to_string(),
        report.weighted_precision.to_string(),
        report.weighted_recall.to_string(),
        report.weighted_f1.to_string(),
        report.total.to_string(),
    ])
    .expect("memory");
    String::from_utf8(w.into_inner().expect("memory")).expect("utf-8")
}

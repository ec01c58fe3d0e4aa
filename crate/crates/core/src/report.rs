//! Confusion matrices, per-class and support-weighted metrics, and report
//! emission (JSON, aligned text, CSV).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fingerprint::GrayImage;
use crate::nn::EpochStats;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("class index {index} out of range for {classes} classes")]
    Index { index: usize, classes: usize },
    #[error("confusion matrix is empty")]
    Empty,
    #[error("invalid confusion matrix: {0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let n = class_names.len();
        Self { class_names, counts: vec![vec![0; n]; n] }
    }

    pub fn from_counts(class_names: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, ReportError> {
        let n = class_names.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(ReportError::Invalid(format!("counts are not {n}x{n}")));
        }
        Ok(Self { class_names, counts })
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn size(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn column_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// Comma-separated matrix with a header row of predicted class names.
    pub fn to_csv(&self) -> String {
        let quote = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
        let mut out = String::from("actual\\predicted");
        for n in &self.class_names {
            out.push(',');
            out.push_str(&quote(n));
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            out.push_str(&quote(name));
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// One-vs-rest counts and the derived scores for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    /// Scores from raw counts; an undefined ratio is reported as 0.
    pub fn from_counts(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { tp, tn, fp, fn_, accuracy: ratio(tp + tn, tp + tn + fp + fn_), precision, recall, f1 }
    }
}

pub fn per_class_metrics(cm: &ConfusionMatrix, class: usize) -> Result<Metrics, ReportError> {
    if class >= cm.size() {
        return Err(ReportError::Index { index: class, classes: cm.size() });
    }
    let tp = cm.counts[class][class];
    let fn_ = cm.row_sum(class) - tp;
    let fp = cm.column_sum(class) - tp;
    let tn = cm.total() - tp - fp - fn_;
    Ok(Metrics::from_counts(tp, tn, fp, fn_))
}

pub fn all_class_metrics(cm: &ConfusionMatrix) -> Vec<Metrics> {
    (0..cm.size()).map(|i| per_class_metrics(cm, i).expect("index in range")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedAverage {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 averaged with actual-class support as weights.
pub fn weighted_average(cm: &ConfusionMatrix, metrics: &[Metrics]) -> Result<WeightedAverage, ReportError> {
    if cm.size() == 0 || cm.total() == 0 {
        return Err(ReportError::Empty);
    }
    if metrics.len() != cm.size() {
        return Err(ReportError::Invalid(format!(
            "{} metric entries for {} classes",
            metrics.len(),
            cm.size()
        )));
    }
    let total = cm.total() as f64;
    let mut avg = WeightedAverage { precision: 0.0, recall: 0.0, f1: 0.0 };
    for (i, m) in metrics.iter().enumerate() {
        let w = cm.row_sum(i) as f64 / total;
        avg.precision += w * m.precision;
        avg.recall += w * m.recall;
        avg.f1 += w * m.f1;
    }
    Ok(avg)
}

pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64, ReportError> {
    match cm.total() {
        0 => Err(ReportError::Empty),
        total => Ok(cm.trace() as f64 / total as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub support: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub init: u64,
    pub shuffle: u64,
}

/// Everything one experiment run produced, in report form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub epochs: usize,
    pub seeds: Seeds,
    pub accuracy: f64,
    pub weighted_average: WeightedAverage,
    pub per_class: Vec<ClassReport>,
    pub confusion_matrix: ConfusionMatrix,
    /// Per-epoch validation curve of the epoch-selection pass, if any.
    #[serde(default)]
    pub history: Vec<EpochStats>,
}

impl ExperimentReport {
    pub fn build(
        experiment: &str,
        cm: ConfusionMatrix,
        epochs: usize,
        seeds: Seeds,
        history: Vec<EpochStats>,
    ) -> Result<Self, ReportError> {
        if cm.size() == 0 {
            return Err(ReportError::Empty);
        }
        let metrics = all_class_metrics(&cm);
        let weighted = weighted_average(&cm, &metrics)?;
        let per_class = metrics
            .into_iter()
            .enumerate()
            .map(|(i, m)| ClassReport { name: cm.class_names[i].clone(), support: cm.row_sum(i), metrics: m })
            .collect();
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: experiment.to_string(),
            excluded_label: None,
            threshold: None,
            epochs,
            seeds,
            accuracy: overall_accuracy(&cm)?,
            weighted_average: weighted,
            per_class,
            confusion_matrix: cm,
            history,
        })
    }

    /// Aligned table: counts, then precision / recall / F1 per row, then a
    /// weighted-average line.
    pub fn to_text(&self) -> String {
        let cm = &self.confusion_matrix;
        let labels: Vec<String> =
            cm.class_names.iter().enumerate().map(|(i, n)| format!("{}- {}", i + 1, n)).collect();
        let name_w = labels.iter().map(String::len).max().unwrap_or(0).max("Actual / classified as".len());
        let max_count = cm.counts.iter().flatten().copied().max().unwrap_or(0);
        let cell_w = max_count.to_string().len().max(cm.size().to_string().len()).max(3) + 1;

        let mut out = String::new();
        let _ = write!(out, "{:<name_w$}", "Actual / classified as");
        for j in 0..cm.size() {
            let _ = write!(out, "{:>cell_w$}", j + 1);
        }
        let _ = writeln!(out, "{:>11}{:>9}{:>10}", "Precision", "Recall", "F1-Score");
        for (i, label) in labels.iter().enumerate() {
            let _ = write!(out, "{label:<name_w$}");
            for c in &cm.counts[i] {
                let _ = write!(out, "{c:>cell_w$}");
            }
            let m = &self.per_class[i].metrics;
            let _ = writeln!(out, "{:>11.3}{:>9.3}{:>10.3}", m.precision, m.recall, m.f1);
        }
        let pad = name_w + cell_w * cm.size();
        let w = &self.weighted_average;
        let _ = writeln!(out, "{:>pad$}{:>11.3}{:>9.3}{:>10.3}", "Weighted Avg", w.precision, w.recall, w.f1);
        let _ = writeln!(out, "Accuracy: {:.4}", self.accuracy);
        if let Some(t) = self.threshold {
            let _ = writeln!(out, "Threshold: {t:.2}");
        }
        let _ = writeln!(out, "Epochs: {}", self.epochs);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("epoch,train_loss,val_loss,val_accuracy\n");
    for h in history {
        let _ = writeln!(out, "{},{},{},{}", h.epoch, h.train_loss, opt(h.val_loss), opt(h.val_accuracy));
    }
    out
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const HISTORY_CSV: &str = "history.csv";

/// Write `report.json`, `report.txt`, `confusion.csv`, `history.csv` and,
/// when given, sample images as PGM under `samples/<class index>/`.
pub fn emit_report(
    report: &ExperimentReport,
    out_dir: &Path,
    samples: Option<&[(String, Vec<GrayImage>)]>,
) -> Result<Vec<PathBuf>, ReportError> {
    if report.confusion_matrix.size() == 0 {
        return Err(ReportError::Empty);
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    let mut put = |name: &Path, data: &[u8]| -> Result<(), ReportError> {
        let path = out_dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, data).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };
    put(Path::new(REPORT_JSON), report.to_json().as_bytes())?;
    put(Path::new(REPORT_TEXT), report.to_text().as_bytes())?;
    put(Path::new(CONFUSION_CSV), report.confusion_matrix.to_csv().as_bytes())?;
    put(Path::new(HISTORY_CSV), history_csv(&report.history).as_bytes())?;
    if let Some(samples) = samples {
        for (ci, (_name, images)) in samples.iter().enumerate() {
            for (k, img) in images.iter().enumerate() {
                let rel = PathBuf::from("samples").join(ci.to_string()).join(format!("{k:04}.pgm"));
                put(&rel, &img.encode_pgm())?;
            }
        }
    }
    Ok(written)
}

//! Known-device identification and held-out unknown-device rejection.

use std::collections::HashSet;

use log::{info, warn};
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::dataset::LabeledDataset;
use crate::fingerprint::PayloadFingerprint;
use crate::nn::{argmax, init_model, predict, InitSpec, MlpModel, ModelError, Trainer, TrainingConfig, EpochStats};
use crate::report::ConfusionMatrix;

/// Class count of the identification experiment in strict mode.
pub const IDENTIFICATION_CLASSES: usize = 10;
/// IoT classes (including the held-out one) in strict unknown-detection mode.
pub const OPEN_SET_CLASSES: usize = 9;
pub const UNKNOWN_SUFFIX: &str = " (unknown)";

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("experiment configuration: {0}")]
    Config(String),
    #[error("experiment data: {0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Train, validation and test sets sharing one label space.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

impl DatasetBundle {
    pub fn new(train: LabeledDataset, validation: LabeledDataset, test: LabeledDataset) -> Result<Self, ClassifyError> {
        if train.label_names() != validation.label_names() || train.label_names() != test.label_names() {
            return Err(ClassifyError::Data("train/validation/test label spaces differ".into()));
        }
        Ok(Self { train, validation, test })
    }

    pub fn label_names(&self) -> &[String] {
        self.train.label_names()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub hidden_width: usize,
    pub init: InitSpec,
    /// Epoch count used when no selection pass runs.
    pub training: TrainingConfig,
    /// Length of the epoch-selection pass; the model is kept at the best
    /// validation epoch of that pass.
    pub selection_epochs: Option<usize>,
    /// Require the reference class counts: ten for identification, nine for held-out runs.
    pub strict: bool,
    pub threshold_grid_step: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            hidden_width: crate::nn::DEFAULT_HIDDEN_WIDTH,
            init: InitSpec::default(),
            training: TrainingConfig::default(),
            selection_epochs: None,
            strict: false,
            threshold_grid_step: 0.01,
        }
    }
}

/// 1-based epoch with the best validation accuracy; ties go to the lower
/// validation loss, then to the earlier epoch.
pub fn select_epochs(history: &[EpochStats]) -> Result<usize, ClassifyError> {
    let mut best: Option<(usize, f64, f64)> = None;
    for h in history {
        let (Some(acc), Some(loss)) = (h.val_accuracy, h.val_loss) else {
            return Err(ClassifyError::Data(format!("epoch {} has no validation metrics", h.epoch)));
        };
        let better = match best {
            None => true,
            Some((_, ba, bl)) => acc > ba || (acc == ba && loss < bl),
        };
        if better {
            best = Some((h.epoch, acc, loss));
        }
    }
    best.map(|b| b.0).ok_or_else(|| ClassifyError::Data("empty training history".into()))
}

/// Outcome of fitting a fresh model, possibly with epoch selection.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: MlpModel,
    pub epochs: usize,
    pub history: Vec<EpochStats>,
}

/// Train a freshly initialized model. With a selection pass, the returned
/// parameters are those after the selected epoch, which is what retraining
/// from the same seeds for that many epochs reproduces.
pub fn fit(
    train_set: &LabeledDataset,
    validation: &LabeledDataset,
    config: &ExperimentConfig,
) -> Result<FitOutcome, ClassifyError> {
    let model = init_model(train_set.class_count(), config.hidden_width, config.init)?;
    let passes = config.selection_epochs.unwrap_or(config.training.epochs);
    let tcfg = TrainingConfig { epochs: passes, ..config.training };
    let mut trainer = Trainer::new(model, train_set, Some(validation), tcfg)?;
    let mut checkpoint: Option<(usize, MlpModel)> = None;
    for _ in 0..passes {
        let stats = trainer.run_epoch()?;
        info!(
            "epoch {}: train loss {:.5}, val loss {:?}, val acc {:?}",
            stats.epoch, stats.train_loss, stats.val_loss, stats.val_accuracy
        );
        if config.selection_epochs.is_some() && select_epochs(trainer.history())? == stats.epoch {
            checkpoint = Some((stats.epoch, trainer.model().clone()));
        }
    }
    let (last, history) = trainer.finish();
    let (epochs, model) = match checkpoint {
        Some(c) => c,
        None => (passes, last),
    };
    Ok(FitOutcome { model, epochs, history })
}

#[derive(Debug, Clone)]
pub struct IdentificationOutcome {
    pub model: MlpModel,
    pub epochs: usize,
    pub history: Vec<EpochStats>,
    pub confusion: ConfusionMatrix,
}

/// Argmax confusion matrix of `model` over `ds`.
pub fn confusion_of(model: &MlpModel, ds: &LabeledDataset) -> Result<ConfusionMatrix, ClassifyError> {
    if model.class_count() != ds.class_count() {
        return Err(ClassifyError::Data(format!(
            "model has {} outputs but dataset has {} classes",
            model.class_count(),
            ds.class_count()
        )));
    }
    let mut cm = ConfusionMatrix::new(ds.label_names().to_vec());
    if ds.is_empty() {
        return Ok(cm);
    }
    let p = predict(model, ds)?;
    for (row, &l) in p.rows().into_iter().zip(ds.labels()) {
        cm.record(l, argmax(row));
    }
    Ok(cm)
}

/// Known-device identification: fit on train (selecting epochs on
/// validation when configured) and score the test split.
pub fn run_experiment1(bundle: &DatasetBundle, config: &ExperimentConfig) -> Result<IdentificationOutcome, ClassifyError> {
    let classes = bundle.label_names().len();
    if config.strict && classes != IDENTIFICATION_CLASSES {
        return Err(ClassifyError::Config(format!(
            "strict mode expects {IDENTIFICATION_CLASSES} classes, dataset has {classes}"
        )));
    }
    let fit = fit(&bundle.train, &bundle.validation, config)?;
    let confusion = confusion_of(&fit.model, &bundle.test)?;
    Ok(IdentificationOutcome { model: fit.model, epochs: fit.epochs, history: fit.history, confusion })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Known(usize),
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub posterior: Vec<f64>,
    pub max_prob: f64,
}

/// Known(argmax) when the top probability is strictly above `threshold`.
pub fn verdict_from_posterior(posterior: ArrayView1<f64>, threshold: f64) -> Verdict {
    let best = argmax(posterior);
    let max_prob = posterior[best];
    let decision = if max_prob > threshold { Decision::Known(best) } else { Decision::Unknown };
    Verdict { decision, posterior: posterior.to_vec(), max_prob }
}

pub fn classify_with_threshold(
    model: &MlpModel,
    fp: &PayloadFingerprint,
    threshold: f64,
) -> Result<Verdict, ClassifyError> {
    check_threshold(threshold)?;
    let x = Array2::from_shape_vec((1, crate::fingerprint::FINGERPRINT_LEN), fp.scaled().collect())
        .expect("784 values");
    let p = model.forward(x.view())?;
    Ok(verdict_from_posterior(p.row(0), threshold))
}

fn check_threshold(t: f64) -> Result<(), ClassifyError> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(ClassifyError::Config(format!("threshold {t} is not inside (0, 1)")))
    }
}

/// Candidate thresholds `k / steps` for `k = 1 .. steps - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdGrid {
    steps: u32,
}

impl ThresholdGrid {
    pub fn from_step(step: f64) -> Result<Self, ClassifyError> {
        let steps = (1.0 / step).round();
        if !(step > 0.0 && step < 0.5) || (steps * step - 1.0).abs() > 1e-9 {
            return Err(ClassifyError::Config(format!(
                "threshold grid step {step} must divide 1 evenly and be below 0.5"
            )));
        }
        Ok(Self { steps: steps as u32 })
    }

    pub fn values(&self) -> impl DoubleEndedIterator<Item = f64> + '_ {
        (1..self.steps).map(move |k| f64::from(k) / f64::from(self.steps))
    }
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self { steps: 100 }
    }
}

/// Maps between the full label space and a model trained without one class.
///
/// Verdicts land in the full space: `Known(k)` becomes the k-th retained
/// class, `Unknown` becomes the held-out class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenSetTask {
    pub excluded: usize,
    pub known_to_full: Vec<usize>,
}

impl OpenSetTask {
    pub fn new(full_classes: usize, excluded: usize) -> Self {
        Self { excluded, known_to_full: (0..full_classes).filter(|&c| c != excluded).collect() }
    }

    pub fn full_prediction(&self, decision: Decision) -> usize {
        match decision {
            Decision::Known(k) => self.known_to_full[k],
            Decision::Unknown => self.excluded,
        }
    }

    pub fn known_index(&self, full: usize) -> Option<usize> {
        self.known_to_full.iter().position(|&c| c == full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub threshold: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub threshold: f64,
    pub accuracy: f64,
    pub sweep: Vec<GridPoint>,
}

/// Decision accuracy in the full label space at one threshold.
pub fn open_set_accuracy(posteriors: &Array2<f64>, truth: &[usize], task: &OpenSetTask, threshold: f64) -> f64 {
    let correct = posteriors
        .rows()
        .into_iter()
        .zip(truth)
        .filter(|(p, &t)| task.full_prediction(verdict_from_posterior(p.view(), threshold).decision) == t)
        .count();
    correct as f64 / truth.len() as f64
}

/// Grid search for the accuracy-maximizing threshold; ties prefer the
/// larger threshold.
pub fn search_threshold(
    posteriors: &Array2<f64>,
    truth: &[usize],
    task: &OpenSetTask,
    grid: &ThresholdGrid,
) -> Result<ThresholdSearch, ClassifyError> {
    if !truth.contains(&task.excluded) {
        return Err(ClassifyError::Data("validation data has no instance of the unknown class".into()));
    }
    let sweep: Vec<GridPoint> = grid
        .values()
        .map(|t| GridPoint { threshold: t, accuracy: open_set_accuracy(posteriors, truth, task, t) })
        .collect();
    let best = sweep
        .iter()
        .rev()
        .fold(None::<GridPoint>, |b, &g| match b {
            Some(b) if b.accuracy >= g.accuracy => Some(b),
            _ => Some(g),
        })
        .expect("grid is non-empty");
    Ok(ThresholdSearch { threshold: best.threshold, accuracy: best.accuracy, sweep })
}

/// Threshold for `model` (trained on the known classes of `task`) chosen on
/// `validation`, which is labeled in the full space.
pub fn derive_threshold(
    model: &MlpModel,
    validation: &LabeledDataset,
    task: &OpenSetTask,
    grid: &ThresholdGrid,
) -> Result<ThresholdSearch, ClassifyError> {
    if model.class_count() != task.known_to_full.len() {
        return Err(ClassifyError::Data("model outputs do not match the known classes".into()));
    }
    let p = predict(model, validation)?;
    search_threshold(&p, validation.labels(), task, grid)
}

/// Rejection threshold and training length for one held-out class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProfile {
    pub excluded_label: String,
    pub threshold: f64,
    pub epochs: usize,
    /// SHA-256 of the serialized model this threshold belongs to.
    pub model_ref: String,
    /// Class names of the model outputs, in order.
    pub known_labels: Vec<String>,
}

pub fn model_digest(model: &MlpModel) -> String {
    let json = serde_json::to_vec(model).expect("model serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone)]
pub struct OpenSetOutcome {
    pub profile: ThresholdProfile,
    pub model: MlpModel,
    pub history: Vec<EpochStats>,
    pub search: ThresholdSearch,
    /// Rows are actual full-space classes; the held-out class is relabeled
    /// with an "(unknown)" suffix and also collects Unknown verdicts.
    pub confusion: ConfusionMatrix,
    /// Held-out fingerprints whose bytes also occur in the training set.
    pub shared_with_training: usize,
}

/// Drop `excluded` and renumber the remaining classes.
pub fn known_subset(ds: &LabeledDataset, task: &OpenSetTask) -> Result<LabeledDataset, ClassifyError> {
    let names = task.known_to_full.iter().map(|&c| ds.label_names()[c].clone()).collect();
    ds.relabel(names, |l| task.known_index(l)).map_err(|e| ClassifyError::Data(e.to_string()))
}

/// Unknown-device detection with one class held out of training.
pub fn run_experiment2(
    bundle: &DatasetBundle,
    excluded_label: &str,
    config: &ExperimentConfig,
) -> Result<OpenSetOutcome, ClassifyError> {
    let names = bundle.label_names();
    let excluded = bundle
        .train
        .label_index(excluded_label)
        .ok_or_else(|| ClassifyError::Data(format!("{excluded_label:?} is not a class of the dataset")))?;
    if config.strict && names.len() != OPEN_SET_CLASSES {
        return Err(ClassifyError::Config(format!(
            "strict mode expects {OPEN_SET_CLASSES} IoT classes, dataset has {}",
            names.len()
        )));
    }
    if names.len() < 3 {
        return Err(ClassifyError::Data("need at least two known classes besides the held-out one".into()));
    }
    let grid = ThresholdGrid::from_step(config.threshold_grid_step)?;
    let task = OpenSetTask::new(names.len(), excluded);

    let train_known = known_subset(&bundle.train, &task)?;
    let val_known = known_subset(&bundle.validation, &task)?;

    let training_digests: HashSet<_> = train_known.fingerprints().iter().map(|f| f.content_digest()).collect();
    let shared_with_training = [&bundle.train, &bundle.validation, &bundle.test]
        .iter()
        .flat_map(|d| d.iter())
        .filter(|(fp, l)| *l == excluded && training_digests.contains(&fp.content_digest()))
        .count();
    if shared_with_training > 0 {
        warn!("{shared_with_training} held-out fingerprints have byte-identical copies in the training set");
    }

    let fit = fit(&train_known, &val_known, config)?;
    let search = derive_threshold(&fit.model, &bundle.validation, &task, &grid)?;
    info!(
        "held out {excluded_label:?}: {} epochs, threshold {:.2} (validation accuracy {:.4})",
        fit.epochs, search.threshold, search.accuracy
    );

    let mut cm_names = names.to_vec();
    cm_names[excluded] = format!("{}{UNKNOWN_SUFFIX}", names[excluded]);
    let mut confusion = ConfusionMatrix::new(cm_names);
    if !bundle.test.is_empty() {
        let p = predict(&fit.model, &bundle.test)?;
        for (row, &l) in p.rows().into_iter().zip(bundle.test.labels()) {
            let v = verdict_from_posterior(row, search.threshold);
            confusion.record(l, task.full_prediction(v.decision));
        }
    }

    let profile = ThresholdProfile {
        excluded_label: excluded_label.to_string(),
        threshold: search.threshold,
        epochs: fit.epochs,
        model_ref: model_digest(&fit.model),
        known_labels: train_known.label_names().to_vec(),
    };
    Ok(OpenSetOutcome { profile, model: fit.model, history: fit.history, search, confusion, shared_with_training })
}

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::model::{cross_entropy, one_hot, MlpModel};
use super::ModelError;
use crate::dataset::LabeledDataset;
use crate::fingerprint::FINGERPRINT_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { epochs: 7, batch_size: 100, shuffle_seed: 0, adam: AdamConfig::default() }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Metrics recorded after one pass over the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Scaled inputs as an `N x 784` matrix.
pub fn input_matrix(ds: &LabeledDataset) -> Array2<f64> {
    let mut x = Array2::zeros((ds.len(), FINGERPRINT_LEN));
    for (mut row, fp) in x.rows_mut().into_iter().zip(ds.fingerprints()) {
        for (dst, v) in row.iter_mut().zip(fp.scaled()) {
            *dst = v;
        }
    }
    x
}

const EVAL_CHUNK: usize = 2048;

/// Probabilities for every row of `ds`.
pub fn predict(model: &MlpModel, ds: &LabeledDataset) -> Result<Array2<f64>, ModelError> {
    let x = input_matrix(ds);
    let mut out = Array2::zeros((ds.len(), model.class_count()));
    for (i, chunk) in x.axis_chunks_iter(Axis(0), EVAL_CHUNK).enumerate() {
        let p = model.forward(chunk)?;
        let start = i * EVAL_CHUNK;
        out.slice_mut(ndarray::s![start..start + p.nrows(), ..]).assign(&p);
    }
    Ok(out)
}

pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean loss and accuracy of `model` on `ds`.
pub fn evaluate(model: &MlpModel, ds: &LabeledDataset) -> Result<(f64, f64), ModelError> {
    if ds.is_empty() {
        return Err(ModelError::Data("cannot evaluate on an empty dataset".into()));
    }
    let p = predict(model, ds)?;
    let y = one_hot(ds.labels(), model.class_count());
    let loss = cross_entropy(&p, &y.view());
    let correct = p
        .rows()
        .into_iter()
        .zip(ds.labels())
        .filter(|(row, &l)| argmax(row.view()) == l)
        .count();
    Ok((loss, correct as f64 / ds.len() as f64))
}

/// Mini-batch Adam training that can be advanced one epoch at a time.
pub struct Trainer<'a> {
    model: MlpModel,
    x: Array2<f64>,
    y: Array2<f64>,
    validation: Option<&'a LabeledDataset>,
    config: TrainingConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    history: Vec<EpochStats>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: MlpModel,
        train: &LabeledDataset,
        validation: Option<&'a LabeledDataset>,
        config: TrainingConfig,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if train.is_empty() {
            return Err(ModelError::Data("training set is empty".into()));
        }
        if train.class_count() != model.class_count() {
            return Err(ModelError::Shape(format!(
                "training set has {} classes, model outputs {}",
                train.class_count(),
                model.class_count()
            )));
        }
        if let Some(v) = validation {
            if v.label_names() != train.label_names() {
                return Err(ModelError::Data("validation and training label spaces differ".into()));
            }
        }
        let adam = AdamState::new(config.adam, &model.parameter_shapes());
        Ok(Self {
            x: input_matrix(train),
            y: one_hot(train.labels(), model.class_count()),
            order: (0..train.len()).collect(),
            model,
            validation: validation.filter(|v| !v.is_empty()),
            config,
            adam,
            rng: ChaCha8Rng::seed_from_u64(config.shuffle_seed),
            history: Vec::new(),
        })
    }

    pub fn run_epoch(&mut self) -> Result<EpochStats, ModelError> {
        self.order.shuffle(&mut self.rng);
        let mut loss_sum = 0.0;
        for batch in self.order.chunks(self.config.batch_size) {
            let xb = self.x.select(Axis(0), batch);
            let yb = self.y.select(Axis(0), batch);
            let (loss, grads) = self.model.loss_and_gradients(xb.view(), yb.view())?;
            loss_sum += loss * batch.len() as f64;
            self.adam.update(self.model.parameters_mut(), &grads.as_slices());
        }
        let (val_loss, val_accuracy) = match self.validation {
            Some(v) => {
                let (l, a) = evaluate(&self.model, v)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        let stats = EpochStats {
            epoch: self.history.len() + 1,
            train_loss: loss_sum / self.order.len() as f64,
            val_loss,
            val_accuracy,
        };
        self.history.push(stats);
        Ok(stats)
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn history(&self) -> &[EpochStats] {
        &self.history
    }

    pub fn finish(self) -> (MlpModel, Vec<EpochStats>) {
        (self.model, self.history)
    }
}

/// Train for `config.epochs` epochs, reshuffling each epoch from the seeded
/// generator, and report validation loss/accuracy per epoch.
pub fn train(
    model: MlpModel,
    train_set: &LabeledDataset,
    validation: &LabeledDataset,
    config: &TrainingConfig,
) -> Result<(MlpModel, Vec<EpochStats>), ModelError> {
    let mut t = Trainer::new(model, train_set, Some(validation), *config)?;
    for _ in 0..config.epochs {
        t.run_epoch()?;
    }
    Ok(t.finish())
}

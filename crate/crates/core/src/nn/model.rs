use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::fingerprint::FINGERPRINT_LEN;

/// Lower clamp on predicted probabilities inside the log of the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
}

/// Normal weight initializer; biases start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub mean: f64,
    pub stddev: f64,
    pub seed: u64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self { mean: 0.0, stddev: 0.05, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `in_dim x out_dim`
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Stack of dense layers: ReLU on every layer but the last, softmax on top.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
    init: InitSpec,
}

/// Per-layer (weights, biases) gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn as_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| {
                [w.as_slice().expect("standard layout"), b.as_slice().expect("standard layout")]
            })
            .collect()
    }
}

/// The two-layer classifier: 784 inputs, a ReLU layer of `hidden_width`,
/// and a softmax layer of `class_count`.
pub fn init_model(class_count: usize, hidden_width: usize, init: InitSpec) -> Result<MlpModel, ModelError> {
    MlpModel::new(&[FINGERPRINT_LEN, hidden_width, class_count], init)
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

impl MlpModel {
    /// `dims` lists layer widths from input to output, at least two entries.
    pub fn new(dims: &[usize], init: InitSpec) -> Result<Self, ModelError> {
        if !(init.stddev > 0.0 && init.stddev.is_finite()) || !init.mean.is_finite() {
            return Err(ModelError::Config(format!("init stddev must be positive, got {}", init.stddev)));
        }
        if dims.len() < 2 || dims.contains(&0) {
            return Err(ModelError::Config(format!("invalid layer dims {dims:?}")));
        }
        let normal = Normal::new(init.mean, init.stddev).map_err(|e| ModelError::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer {
                weights: Array2::from_shape_simple_fn((w[0], w[1]), || normal.sample(&mut rng)),
                biases: Array1::zeros(w[1]),
                activation: if i == last { Activation::Softmax } else { Activation::Relu },
            })
            .collect();
        Ok(Self { layers, init })
    }

    /// Assemble from explicit layers, checking the shape chain and that only
    /// the last layer is softmax.
    pub fn from_layers(layers: Vec<DenseLayer>, init: InitSpec) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::Config("model needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.biases.len() != l.out_dim() {
                return Err(ModelError::Config(format!("layer {i}: bias length mismatch")));
            }
            let want = if i + 1 == layers.len() { Activation::Softmax } else { Activation::Relu };
            if l.activation != want {
                return Err(ModelError::Config(format!("layer {i}: expected {want:?} activation")));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(ModelError::Config(format!("layer {i}: input width does not chain")));
            }
        }
        Ok(Self { layers, init })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn init_spec(&self) -> InitSpec {
        self.init
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(DenseLayer::out_dim));
        d
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Weight then bias slices for every layer, in order.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.biases.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn parameter_shapes(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.weights.len(), l.biases.len()]).collect()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), ModelError> {
        if x.ncols() != self.input_dim() {
            return Err(ModelError::Shape(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Class probabilities, one row per input row.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for l in &self.layers {
            let mut z = a.dot(&l.weights) + &l.biases;
            match l.activation {
                Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
                Activation::Softmax => softmax_rows(&mut z),
            }
            a = z;
        }
        Ok(a)
    }

    /// Pre-softmax scores of the last layer.
    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.weights) + &l.biases;
            if i + 1 < self.layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    fn check_targets(&self, x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<(), ModelError> {
        self.check_input(x)?;
        if y.nrows() != x.nrows() || y.ncols() != self.class_count() {
            return Err(ModelError::Shape(format!(
                "targets are {}x{}, expected {}x{}",
                y.nrows(),
                y.ncols(),
                x.nrows(),
                self.class_count()
            )));
        }
        if x.nrows() == 0 {
            return Err(ModelError::Shape("empty batch".into()));
        }
        Ok(())
    }

    /// Mean categorical cross-entropy against one-hot targets.
    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64, ModelError> {
        self.check_targets(&x, &y)?;
        let p = self.forward(x)?;
        Ok(cross_entropy(&p, &y))
    }

    /// Loss and exact gradients of the mean cross-entropy by backprop.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
    ) -> Result<(f64, Gradients), ModelError> {
        self.check_targets(&x, &y)?;
        let batch = x.nrows() as f64;

        // activations[i] is the input to layer i; the last entry is the output.
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for l in &self.layers {
            let mut z = activations.last().expect("non-empty").dot(&l.weights) + &l.biases;
            match l.activation {
                Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
                Activation::Softmax => softmax_rows(&mut z),
            }
            activations.push(z);
        }
        let probs = activations.pop().expect("output present");
        let loss = cross_entropy(&probs, &y);

        // softmax + cross-entropy: dL/dz = (p - y) / B
        let mut delta = (&probs - &y) / batch;
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate().rev() {
            let input = &activations[i];
            let gw = input.t().dot(&delta).as_standard_layout().into_owned();
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&l.weights.t());
                // input > 0 exactly where the previous ReLU was active
                ndarray::Zip::from(&mut back).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }
}

pub fn cross_entropy(probs: &Array2<f64>, targets: &ArrayView2<f64>) -> f64 {
    let total: f64 = ndarray::Zip::from(probs)
        .and(targets)
        .fold(0.0, |acc, &p, &t| if t != 0.0 { acc - t * p.max(PROB_FLOOR).ln() } else { acc });
    total / probs.nrows() as f64
}

pub fn one_hot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut y = Array2::zeros((labels.len(), classes));
    for (r, &l) in labels.iter().enumerate() {
        y[[r, l]] = 1.0;
    }
    y
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    /// Row-major `in_dim x out_dim`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    dims: Vec<usize>,
    init: InitSpec,
    layers: Vec<LayerRepr>,
}

impl Serialize for MlpModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ModelRepr {
            dims: self.dims(),
            init: self.init,
            layers: self
                .layers
                .iter()
                .map(|l| LayerRepr {
                    in_dim: l.in_dim(),
                    out_dim: l.out_dim(),
                    activation: l.activation,
                    weights: l.weights.iter().copied().collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MlpModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = ModelRepr::deserialize(d)?;
        let layers = repr
            .layers
            .into_iter()
            .map(|l| {
                let weights = Array2::from_shape_vec((l.in_dim, l.out_dim), l.weights)
                    .map_err(|e| D::Error::custom(format!("weights: {e}")))?;
                Ok(DenseLayer { weights, biases: Array1::from(l.biases), activation: l.activation })
            })
            .collect::<Result<Vec<_>, D::Error>>()?;
        let model = MlpModel::from_layers(layers, repr.init).map_err(D::Error::custom)?;
        if model.dims() != repr.dims {
            return Err(D::Error::custom("declared dims do not match layers"));
        }
        Ok(model)
    }
}

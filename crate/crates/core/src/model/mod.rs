//! Small differentiable classifiers with exact reverse-mode gradients.

mod layers;
mod train;

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use layers::Layer;
pub use train::{train, Optimizer, TrainConfig};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

pub const MODEL_FORMAT: &str = "aimeval-model";
pub const MODEL_VERSION: u32 = 1;

/// Which scalar gradient-based saliency differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientTarget {
    /// Logit of the label class.
    #[default]
    Logit,
    /// Cross-entropy loss of the label class.
    Loss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format: String,
    pub version: u32,
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub train_accuracy: Option<f64>,
}

impl Model {
    pub fn new(input_shape: Vec<usize>, num_classes: usize, layers: Vec<Layer>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config("a classifier needs at least two classes".into()));
        }
        let mut shape = input_shape.clone();
        for l in &layers {
            shape = l.output_shape(&shape)?;
        }
        if shape != [num_classes] {
            return Err(Error::Shape(format!("network output {shape:?} does not match {num_classes} classes")));
        }
        Ok(Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            input_shape,
            num_classes,
            layers,
            train_accuracy: None,
        })
    }

    /// Flatten → dense → ReLU → dense → ReLU → dense, He-initialised.
    pub fn mlp(input_shape: Vec<usize>, hidden: [usize; 2], num_classes: usize, seed: u64) -> Result<Self> {
        let n_in: usize = input_shape.iter().product();
        let mut r = rng::rng(seed, &[0x4d4c50]);
        let layers = vec![
            dense(&mut r, n_in, hidden[0]),
            Layer::Relu,
            dense(&mut r, hidden[0], hidden[1]),
            Layer::Relu,
            dense(&mut r, hidden[1], num_classes),
        ];
        Self::new(input_shape, num_classes, layers)
    }

    /// Conv1D → ReLU → mean over time → dense.
    pub fn conv1d(input_shape: Vec<usize>, filters: usize, kernel: usize, num_classes: usize, seed: u64) -> Result<Self> {
        let [channels, _] = input_shape[..] else {
            return Err(Error::Shape(format!("conv1d model needs [channels, time] input, got {input_shape:?}")));
        };
        let mut r = rng::rng(seed, &[0x434e4e]);
        let fan_in = (channels * kernel) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
        let w = (0..filters * channels * kernel).map(|_| normal.sample(&mut r)).collect();
        let layers = vec![
            Layer::Conv1d {
                weight: Tensor::new(vec![filters, channels, kernel], w)?,
                bias: Tensor::zeros(&[filters]),
            },
            Layer::Relu,
            Layer::MeanPool,
            dense(&mut r, filters, num_classes),
        ];
        Self::new(input_shape, num_classes, layers)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "model expects input {:?}, got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.num_classes {
            return Err(Error::InvalidClass { class, num_classes: self.num_classes });
        }
        Ok(())
    }

    /// All intermediate activations, input first, logits last.
    fn trace(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for l in &self.layers {
            let next = l.forward(acts.last().unwrap())?;
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.trace(x)?.pop().unwrap())
    }

    pub fn probabilities(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(softmax(self.forward(x)?.data()))
    }

    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(argmax(self.forward(x)?.data()))
    }

    pub fn loss(&self, x: &Tensor, y: usize) -> Result<f64> {
        self.check_class(y)?;
        Ok(cross_entropy(self.forward(x)?.data(), y))
    }

    /// Pulls `dlogits` back through the network.
    fn backward(&self, acts: &[Tensor], dlogits: Vec<f64>, want_params: bool) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut g = dlogits;
        let mut param_grads = Vec::new();
        for (l, a) in self.layers.iter().zip(acts).rev() {
            let (gx, gp) = l.backward(a, &g, want_params);
            g = gx;
            if want_params {
                param_grads.extend(gp.into_iter().rev());
            }
        }
        param_grads.reverse();
        (g, param_grads)
    }

    fn shaped(&self, g: Vec<f64>) -> Result<Tensor> {
        Tensor::new(self.input_shape.clone(), g).map_err(|_| Error::NonFinite("input gradient"))
    }

    /// Gradient of the cross-entropy loss with respect to the input.
    pub fn input_gradient(&self, x: &Tensor, y: usize) -> Result<Tensor> {
        self.check_class(y)?;
        let acts = self.trace(x)?;
        let mut d = softmax(acts.last().unwrap().data());
        d[y] -= 1.0;
        let (g, _) = self.backward(&acts, d, false);
        self.shaped(g)
    }

    /// Gradient of logit `class` with respect to the input.
    pub fn class_gradient(&self, x: &Tensor, class: usize) -> Result<Tensor> {
        self.check_class(class)?;
        let acts = self.trace(x)?;
        let mut d = vec![0.0; self.num_classes];
        d[class] = 1.0;
        let (g, _) = self.backward(&acts, d, false);
        self.shaped(g)
    }

    pub fn target_gradient(&self, x: &Tensor, class: usize, target: GradientTarget) -> Result<Tensor> {
        match target {
            GradientTarget::Logit => self.class_gradient(x, class),
            GradientTarget::Loss => self.input_gradient(x, class),
        }
    }

    pub fn target_value(&self, x: &Tensor, class: usize, target: GradientTarget) -> Result<f64> {
        match target {
            GradientTarget::Logit => {
                self.check_class(class)?;
                Ok(self.forward(x)?.data()[class])
            }
            GradientTarget::Loss => self.loss(x, class),
        }
    }

    /// Loss and gradients of the loss with respect to every parameter, in
    /// [`Model::params`] order.
    pub fn param_gradients(&self, x: &Tensor, y: usize) -> Result<(f64, Vec<Vec<f64>>)> {
        self.check_class(y)?;
        let acts = self.trace(x)?;
        let logits = acts.last().unwrap().data();
        let loss = cross_entropy(logits, y);
        let mut d = softmax(logits);
        d[y] -= 1.0;
        let (_, gp) = self.backward(&acts, d, true);
        Ok((loss, gp))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Model = serde_json::from_str(s)?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::Config(format!(
                "unsupported model document {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
                m.format, m.version
            )));
        }
        let checked = Model::new(m.input_shape, m.num_classes, m.layers)?;
        Ok(Model { train_accuracy: m.train_accuracy, ..checked })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn dense(r: &mut rng::Rng, n_in: usize, n_out: usize) -> Layer {
    let normal = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).unwrap();
    let w = (0..n_in * n_out).map(|_| normal.sample(r)).collect();
    // tiny jitter keeps ReLU units from starting exactly tied
    let b = (0..n_out).map(|_| r.random_range(-1e-3..1e-3)).collect();
    Layer::Dense { weight: Tensor::new(vec![n_out, n_in], w).unwrap(), bias: Tensor::new(vec![n_out], b).unwrap() }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
    lse - logits[y]
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = data
        .samples
        .par_iter()
        .map(|s| model.predict(&s.x).map(|p| usize::from(p == s.y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(correct.iter().sum::<usize>() as f64 / data.len() as f64)
}

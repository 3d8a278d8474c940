use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{accuracy, Model};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Momentum { beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// L2 penalty `λ/2 ‖θ‖²` on every parameter.
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.05, epochs: 40, batch_size: 32, seed: 0, optimizer: Optimizer::Momentum { beta: 0.9 }, weight_decay: 0.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be > 0".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("train.epochs must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("train.weight_decay must be >= 0".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if let Optimizer::Momentum { beta } = self.optimizer {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config("train.optimizer.beta must lie in [0, 1)".into()));
            }
        }
        Ok(())
    }
}

/// Mini-batch training on the mean cross-entropy.
///
/// `cfg.epochs == 0` returns the model unchanged apart from the recorded
/// train accuracy, so callers can continue training in steps.
pub fn train(model: &Model, data: &Dataset, cfg: &TrainConfig) -> Result<Model> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.epochs > 0 {
        cfg.validate()?;
    }
    let mut model = model.clone();
    let mut velocity: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::rng(cfg.seed, &[0x545241494e, epoch as u64]));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad: Vec<Vec<f64>> = velocity.iter().map(|v| vec![0.0; v.len()]).collect();
            for &i in batch {
                let s = &data.samples[i];
                let (loss, gp) = model.param_gradients(&s.x, s.y).map_err(|e| match e {
                    Error::NonFinite(_) => Error::Diverged { epoch },
                    other => other,
                })?;
                epoch_loss += loss;
                for (acc, g) in grad.iter_mut().zip(gp) {
                    for (a, v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for ((p, g), v) in model.params_mut().into_iter().zip(&grad).zip(&mut velocity) {
                let pd = p.data_mut();
                let lambda = cfg.weight_decay;
                match cfg.optimizer {
                    Optimizer::Sgd => {
                        for (w, gi) in pd.iter_mut().zip(g) {
                            *w -= cfg.learning_rate * (gi * scale + lambda * *w);
                        }
                    }
                    Optimizer::Momentum { beta } => {
                        for ((w, gi), vi) in pd.iter_mut().zip(g).zip(v.iter_mut()) {
                            *vi = beta * *vi + gi * scale + lambda * *w;
                            *w -= cfg.learning_rate * *vi;
                        }
                    }
                }
            }
        }
        if !epoch_loss.is_finite() || model.params().iter().any(|p| p.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged { epoch });
        }
    }
    model.train_accuracy = Some(accuracy(&model, data)?);
    Ok(model)
}

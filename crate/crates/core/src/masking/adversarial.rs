use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::domains::{irfft, rfft};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng;
use crate::tensor::Tensor;

pub const DEFAULT_ITERATIONS: usize = 10;
pub const DEFAULT_CHANCE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    Linf,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialConfig {
    pub epsilon: f64,
    /// Step size; `None` means `2.5 ε / iterations`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub norm: Norm,
    #[serde(default)]
    pub seed: u64,
}

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}

impl AdversarialConfig {
    pub fn new(epsilon: f64) -> Self {
        Self { epsilon, alpha: None, iterations: DEFAULT_ITERATIONS, norm: Norm::Linf, seed: 0 }
    }

    pub fn step(&self) -> f64 {
        self.alpha.unwrap_or(2.5 * self.epsilon / self.iterations as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.step() > 0.0 && self.step().is_finite()) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.step())));
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialCounterpart {
    pub x_adv: Tensor,
    pub sample: Option<usize>,
    pub config: AdversarialConfig,
    pub delta0: Tensor,
}

/// Distance between `a` and `b` in the given norm.
pub fn distance(a: &Tensor, b: &Tensor, norm: Norm) -> f64 {
    let d = a.data().iter().zip(b.data()).map(|(x, y)| x - y);
    match norm {
        Norm::Linf => d.fold(0.0, |m, v| m.max(v.abs())),
        Norm::L2 => d.map(|v| v * v).sum::<f64>().sqrt(),
    }
}

/// Projects `x + δ` onto the ball of radius `eps` around `x`.
fn project(x: &[f64], adv: &mut [f64], eps: f64, norm: Norm) {
    match norm {
        Norm::Linf => {
            for (a, &c) in adv.iter_mut().zip(x) {
                *a = a.clamp(c - eps, c + eps);
            }
        }
        Norm::L2 => {
            let n: f64 = adv.iter().zip(x).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            if n > eps {
                let s = eps / n;
                for (a, &c) in adv.iter_mut().zip(x) {
                    *a = c + (*a - c) * s;
                }
            }
        }
    }
}

/// Untargeted projected gradient ascent on the cross-entropy loss from a
/// uniform random start in the ε-cube.
pub fn pgd(model: &Model, x: &Tensor, y: usize, cfg: &AdversarialConfig) -> Result<AdversarialCounterpart> {
    cfg.validate()?;
    let eps = cfg.epsilon;
    let mut r = rng::rng(cfg.seed, &[0x504744]);
    let delta0: Vec<f64> = (0..x.len()).map(|_| r.random_range(-eps..=eps)).collect();
    let mut adv: Vec<f64> = x.data().iter().zip(&delta0).map(|(a, d)| a + d).collect();
    project(x.data(), &mut adv, eps, cfg.norm);
    let alpha = cfg.step();
    for _ in 0..cfg.iterations {
        let cur = x.with_data(adv.clone()).map_err(|_| Error::Attack("non-finite iterate".into()))?;
        let loss = model.loss(&cur, y)?;
        if !loss.is_finite() {
            return Err(Error::Attack("non-finite loss".into()));
        }
        let g = model.input_gradient(&cur, y)?;
        match cfg.norm {
            Norm::Linf => {
                for (a, gi) in adv.iter_mut().zip(g.data()) {
                    *a += alpha * sign(*gi);
                }
            }
            Norm::L2 => {
                let n = g.l2_norm();
                if n > 0.0 {
                    for (a, gi) in adv.iter_mut().zip(g.data()) {
                        *a += alpha * gi / n;
                    }
                }
            }
        }
        project(x.data(), &mut adv, eps, cfg.norm);
    }
    let x_adv = x.with_data(adv).map_err(|_| Error::Attack("non-finite result".into()))?;
    if !model.loss(&x_adv, y)?.is_finite() {
        return Err(Error::Attack("non-finite loss".into()));
    }
    Ok(AdversarialCounterpart { x_adv, sample: None, config: cfg.clone(), delta0: x.with_data(delta0)? })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `pgd` for every sample, seeding sample `i` with `derive(cfg.seed, [i])`.
pub fn pgd_dataset(model: &Model, data: &Dataset, cfg: &AdversarialConfig) -> Result<Vec<AdversarialCounterpart>> {
    data.samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let c = AdversarialConfig { seed: rng::derive(cfg.seed, &[i as u64]), ..cfg.clone() };
            let mut out = pgd(model, &s.x, s.y, &c)?;
            out.sample = Some(i);
            Ok(out)
        })
        .collect()
}

/// Geometric grid of `n` points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (r * i as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub epsilon: f64,
    pub target: f64,
    /// `(ε, accuracy under full replacement)` for each grid point tried.
    pub trace: Vec<(f64, f64)>,
}

/// Accuracy when every input is replaced by its adversarial counterpart.
pub fn full_replacement_accuracy(model: &Model, data: &Dataset, cfg: &AdversarialConfig) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let adv = pgd_dataset(model, data, cfg)?;
    let mut hits = 0usize;
    for (a, s) in adv.iter().zip(&data.samples) {
        hits += usize::from(model.predict(&a.x_adv)? == s.y);
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Smallest ε of `grid` (ascending) whose full-replacement accuracy is at most
/// chance + `tolerance`.
pub fn calibrate_epsilon(model: &Model, data: &Dataset, base: &AdversarialConfig, grid: &[f64], tolerance: f64) -> Result<Calibration> {
    let target = data.chance_level() + tolerance;
    let mut trace = Vec::with_capacity(grid.len());
    for &eps in grid {
        let cfg = AdversarialConfig { epsilon: eps, ..base.clone() };
        let acc = full_replacement_accuracy(model, data, &cfg)?;
        trace.push((eps, acc));
        if acc <= target {
            return Ok(Calibration { epsilon: eps, target, trace });
        }
    }
    Err(Error::Calibration { target, trace })
}

/// Bin nearest to half of bin `k`, floored at bin 1. The flag is set when the
/// floor applied.
pub fn half_bin(k: usize) -> (usize, bool) {
    if k < 2 {
        (1, true)
    } else {
        ((k + 1) / 2, false)
    }
}

/// For each bin `k` in `lo..hi`, replaces the coefficient at `half_bin(k)` of
/// `x` by that of `x_adv`. Returns the result and whether any target fell
/// below the first bin.
pub fn half_freq_correction(x: &Tensor, x_adv: &Tensor, lo: usize, hi: usize) -> Result<(Tensor, bool)> {
    x.check_same_shape(x_adv)?;
    let (c, t) = x.dims2()?;
    if lo >= hi {
        return Ok((x.clone(), false));
    }
    let mut flagged = false;
    let mut targets: Vec<usize> = (lo..hi.min(t / 2 + 1))
        .map(|k| {
            let (h, f) = half_bin(k);
            flagged |= f;
            h
        })
        .collect();
    targets.dedup();
    let mut data = Vec::with_capacity(c * t);
    for ch in 0..c {
        let mut a = rfft(x.row(ch));
        let b = rfft(x_adv.row(ch));
        for &h in &targets {
            a[h] = b[h];
        }
        data.extend(irfft(&a, t));
    }
    Ok((Tensor::new(vec![c, t], data).map_err(|_| Error::NonFinite("half-frequency correction"))?, flagged))
}

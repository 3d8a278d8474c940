//! Post-hoc saliency methods: plain gradient, gradient × input, SmoothGrad,
//! SmoothGrad-squared, VarGrad, Integrated Gradients, their absolute-value
//! variants and a uniform random baseline.
//!
//! Every method is written against [`FeatureView`], a point in some feature
//! coordinates together with the gradient of the attribution target there.
//! [`TimeView`] uses the raw input; the spectral domain supplies an
//! amplitude view so that the same estimators run on spectral amplitudes.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GradientTarget, Model};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GD")]
    Gradient,
    #[serde(rename = "GI")]
    GradientInput,
    #[serde(rename = "SG")]
    SmoothGrad,
    #[serde(rename = "SS")]
    SmoothGradSquared,
    #[serde(rename = "VG")]
    VarGrad,
    #[serde(rename = "IG")]
    IntegratedGradients,
    #[serde(rename = "RANDOM")]
    Random,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Gradient,
        Method::GradientInput,
        Method::SmoothGrad,
        Method::SmoothGradSquared,
        Method::VarGrad,
        Method::IntegratedGradients,
        Method::Random,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Gradient => "GD",
            Method::GradientInput => "GI",
            Method::SmoothGrad => "SG",
            Method::SmoothGradSquared => "SS",
            Method::VarGrad => "VG",
            Method::IntegratedGradients => "IG",
            Method::Random => "RANDOM",
        }
    }

    /// Methods whose output can be negative.
    pub fn is_signed(self) -> bool {
        matches!(self, Method::Gradient | Method::GradientInput | Method::SmoothGrad | Method::IntegratedGradients)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown attribution method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionConfig {
    pub method: Method,
    /// Noise std for SG/SS/VG as a fraction of the per-sample feature std.
    pub noise_fraction: f64,
    pub n_samples: usize,
    pub ig_steps: usize,
    /// IG reference point; zeros when absent.
    pub ig_baseline: Option<Tensor>,
    pub absolute: bool,
    pub seed: u64,
    pub target: GradientTarget,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            method: Method::Gradient,
            noise_fraction: 0.1,
            n_samples: 32,
            ig_steps: 64,
            ig_baseline: None,
            absolute: false,
            seed: 0,
            target: GradientTarget::Logit,
        }
    }
}

impl AttributionConfig {
    pub fn new(method: Method) -> Self {
        Self { method, ..Default::default() }
    }

    pub fn absolute(mut self, absolute: bool) -> Self {
        self.absolute = absolute;
        self
    }

    /// Short label such as `GD` or `IGA`.
    pub fn label(&self) -> String {
        if self.absolute && self.method != Method::Random {
            format!("{}A", self.method.tag())
        } else {
            self.method.tag().to_string()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_fraction >= 0.0 && self.noise_fraction.is_finite()) {
            return Err(Error::Config("noise_fraction must be >= 0".into()));
        }
        if self.n_samples < 1 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        if self.ig_steps < 1 {
            return Err(Error::Config("ig_steps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub values: Tensor,
    pub method: Method,
    pub absolute: bool,
}

impl SaliencyMap {
    /// One `index,value` row per feature.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "index,value")?;
        for (i, v) in self.values.data().iter().enumerate() {
            writeln!(w, "{i},{}", crate::data::format_float(*v))?;
        }
        Ok(())
    }
}

/// A point in feature coordinates plus the gradient of the attribution
/// target with respect to those coordinates.
pub trait FeatureView: Sync {
    fn point(&self) -> &[f64];
    fn gradient(&self, at: &[f64]) -> Result<Vec<f64>>;
    /// Target value at `at`.
    fn value(&self, at: &[f64]) -> Result<f64>;
}

/// The raw input of a model as feature coordinates.
pub struct TimeView<'a> {
    pub model: &'a Model,
    pub x: &'a Tensor,
    pub class: usize,
    pub target: GradientTarget,
}

impl TimeView<'_> {
    fn at(&self, at: &[f64]) -> Result<Tensor> {
        self.x.with_data(at.to_vec())
    }
}

impl FeatureView for TimeView<'_> {
    fn point(&self) -> &[f64] {
        self.x.data()
    }

    fn gradient(&self, at: &[f64]) -> Result<Vec<f64>> {
        Ok(self.model.target_gradient(&self.at(at)?, self.class, self.target)?.into_data())
    }

    fn value(&self, at: &[f64]) -> Result<f64> {
        self.model.target_value(&self.at(at)?, self.class, self.target)
    }
}

fn noise_ensemble(view: &dyn FeatureView, cfg: &AttributionConfig) -> Result<Vec<Vec<f64>>> {
    let p = view.point();
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let std = (p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sigma = cfg.noise_fraction * std;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut r = rng::rng(cfg.seed, &[0x534d4f4f5448]);
    (0..cfg.n_samples)
        .map(|_| {
            let noisy: Vec<f64> = p.iter().map(|&v| v + sigma * normal.sample(&mut r)).collect();
            view.gradient(&noisy)
        })
        .collect()
}

/// Running (Welford) mean, exact when every sample is identical.
fn mean_of(grads: &[Vec<f64>], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut acc = vec![0.0; grads[0].len()];
    for (k, g) in grads.iter().enumerate() {
        for (a, &v) in acc.iter_mut().zip(g) {
            *a += (f(v) - *a) / (k + 1) as f64;
        }
    }
    acc
}

/// Population variance per coordinate (Welford).
fn variance_of(grads: &[Vec<f64>]) -> Vec<f64> {
    let mut mean = vec![0.0; grads[0].len()];
    let mut m2 = vec![0.0; mean.len()];
    for (k, g) in grads.iter().enumerate() {
        for ((m, s), &v) in mean.iter_mut().zip(m2.iter_mut()).zip(g) {
            let d = v - *m;
            *m += d / (k + 1) as f64;
            *s += d * (v - *m);
        }
    }
    m2.iter().map(|s| s / grads.len() as f64).collect()
}

/// Runs `cfg.method` on `view`. `Random` ignores the view apart from its size.
pub fn attribute_view(view: &dyn FeatureView, cfg: &AttributionConfig, baseline: Option<&[f64]>) -> Result<Vec<f64>> {
    cfg.validate()?;
    let p = view.point();
    let mut out = match cfg.method {
        Method::Gradient => view.gradient(p)?,
        Method::GradientInput => view.gradient(p)?.iter().zip(p).map(|(g, x)| g * x).collect(),
        Method::SmoothGrad => mean_of(&noise_ensemble(view, cfg)?, |v| v),
        Method::SmoothGradSquared => mean_of(&noise_ensemble(view, cfg)?, |v| v * v),
        Method::VarGrad => variance_of(&noise_ensemble(view, cfg)?),
        Method::IntegratedGradients => {
            let zeros;
            let base = match baseline {
                Some(b) if b.len() == p.len() => b,
                Some(b) => {
                    return Err(Error::Shape(format!("IG baseline has {} values, input has {}", b.len(), p.len())))
                }
                None => {
                    zeros = vec![0.0; p.len()];
                    &zeros
                }
            };
            let m = cfg.ig_steps;
            let mut acc = vec![0.0; p.len()];
            for j in 0..m {
                let a = (j as f64 + 0.5) / m as f64;
                let on_path: Vec<f64> = base.iter().zip(p).map(|(b, x)| b + a * (x - b)).collect();
                for (s, g) in acc.iter_mut().zip(view.gradient(&on_path)?) {
                    *s += g;
                }
            }
            acc.iter().zip(p).zip(base).map(|((s, x), b)| (x - b) * s / m as f64).collect()
        }
        Method::Random => random_values(p.len(), cfg.seed),
    };
    if cfg.absolute {
        out.iter_mut().for_each(|v| *v = v.abs());
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("attribution"));
    }
    Ok(out)
}

fn random_values(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::rng(seed, &[0x52414e44]);
    (0..n).map(|_| Open01.sample(&mut r)).collect()
}

/// Saliency of `x` for class `y` according to `cfg`.
pub fn attribute(model: &Model, x: &Tensor, y: usize, cfg: &AttributionConfig) -> Result<SaliencyMap> {
    let view = TimeView { model, x, class: y, target: cfg.target };
    if x.shape() != model.input_shape.as_slice() {
        return Err(Error::Shape(format!("model expects {:?}, got {:?}", model.input_shape, x.shape())));
    }
    if let Some(b) = &cfg.ig_baseline {
        x.check_same_shape(b)?;
    }
    let values = attribute_view(&view, cfg, cfg.ig_baseline.as_ref().map(|b| b.data()))?;
    Ok(SaliencyMap { values: x.with_data(values)?, method: cfg.method, absolute: cfg.absolute })
}

pub fn attribute_gd(model: &Model, x: &Tensor, y: usize) -> Result<SaliencyMap> {
    attribute(model, x, y, &AttributionConfig::new(Method::Gradient))
}

pub fn attribute_gi(model: &Model, x: &Tensor, y: usize) -> Result<SaliencyMap> {
    attribute(model, x, y, &AttributionConfig::new(Method::GradientInput))
}

pub fn attribute_sg(model: &Model, x: &Tensor, y: usize, cfg: &AttributionConfig) -> Result<SaliencyMap> {
    attribute(model, x, y, &AttributionConfig { method: Method::SmoothGrad, ..cfg.clone() })
}

pub fn attribute_ss(model: &Model, x: &Tensor, y: usize, cfg: &AttributionConfig) -> Result<SaliencyMap> {
    attribute(model, x, y, &AttributionConfig { method: Method::SmoothGradSquared, ..cfg.clone() })
}

pub fn attribute_vg(model: &Model, x: &Tensor, y: usize, cfg: &AttributionConfig) -> Result<SaliencyMap> {
    attribute(model, x, y, &AttributionConfig { method: Method::VarGrad, ..cfg.clone() })
}

pub fn attribute_ig(model: &Model, x: &Tensor, y: usize, cfg: &AttributionConfig) -> Result<SaliencyMap> {
    attribute(model, x, y, &AttributionConfig { method: Method::IntegratedGradients, ..cfg.clone() })
}

/// i.i.d. Uniform(0, 1) scores.
pub fn attribute_random(shape: &[usize], seed: u64) -> Result<SaliencyMap> {
    let n = shape.iter().product();
    Ok(SaliencyMap {
        values: Tensor::new(shape.to_vec(), random_values(n, seed))?,
        method: Method::Random,
        absolute: false,
    })
}

pub fn to_absolute(s: &SaliencyMap) -> SaliencyMap {
    SaliencyMap { values: s.values.map(f64::abs).expect("abs keeps values finite"), method: s.method, absolute: true }
}

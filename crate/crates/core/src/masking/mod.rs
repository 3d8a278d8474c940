//! Masking operators: zeroing, multi-domain imputation and adversarial
//! replacement.

mod adversarial;
mod laplacian;
mod spectral;
mod temporal;

pub use adversarial::{
    calibrate_epsilon, distance, full_replacement_accuracy, geometric_grid, half_bin, half_freq_correction, pgd, pgd_dataset,
    AdversarialConfig, AdversarialCounterpart, Calibration, Norm, DEFAULT_CHANCE_TOLERANCE, DEFAULT_ITERATIONS,
};
pub use laplacian::{laplacian_impute, NeighborGraph, DIAGONAL_WEIGHT, DIRECT_WEIGHT};
pub use spectral::{impute_half_spectrum, spectral_impute, AmplitudeMode, SpectralFit, FIT_DEGREE};
pub use temporal::{anchor_offsets, temporal_impute, DEFAULT_HURST};

use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::Layout;
use crate::domains::{irfft, rfft, Domain, FeatureSubset, Features};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// 0/1 indicator over the input (time and grid domains) or over the
/// `[channels, bins]` half spectrum (spectral domain).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMask {
    pub values: Tensor,
    pub domain: Domain,
}

impl BinaryMask {
    pub fn new(values: Tensor, domain: Domain) -> Result<Self> {
        if values.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Shape("mask values must be 0 or 1".into()));
        }
        Ok(Self { values, domain })
    }

    pub fn count(&self) -> usize {
        self.values.data().iter().filter(|&&v| v == 1.0).count()
    }
}

/// Indicator of `subset` for an input of `shape`.
pub fn subset_to_mask(subset: &FeatureSubset, shape: &[usize]) -> Result<BinaryMask> {
    if shape.len() != 2 {
        return Err(Error::Shape(format!("masks need a 2-D input shape, got {shape:?}")));
    }
    let (rows, cols) = (shape[0], shape[1]);
    let domain = subset.domain();
    let out_of_range = || Error::Selection(format!("subset {:?} outside shape {shape:?}", subset.features));
    let values = match &subset.features {
        Features::Spatial { channels } => {
            let mut m = Tensor::zeros(shape);
            for &c in channels {
                if c >= rows {
                    return Err(out_of_range());
                }
                m.row_mut(c).fill(1.0);
            }
            m
        }
        Features::Temporal { start, end } => {
            if end > &cols {
                return Err(out_of_range());
            }
            let mut m = Tensor::zeros(shape);
            for r in 0..rows {
                m.row_mut(r)[*start..(*end).max(*start)].fill(1.0);
            }
            m
        }
        Features::Spectral { lo, hi } => {
            let bins = cols / 2 + 1;
            if hi > &bins {
                return Err(out_of_range());
            }
            let mut m = Tensor::zeros(&[rows, bins]);
            for r in 0..rows {
                m.row_mut(r)[*lo..(*hi).max(*lo)].fill(1.0);
            }
            m
        }
        Features::Grid { pixels } => {
            let mut m = Tensor::zeros(shape);
            for &p in pixels {
                if p >= rows * cols {
                    return Err(out_of_range());
                }
                m.data_mut()[p] = 1.0;
            }
            m
        }
    };
    BinaryMask::new(values, domain)
}

fn spectral_blend(x: &Tensor, other: Option<&Tensor>, mask: &Tensor, amplitude_only: bool) -> Result<Tensor> {
    let (c, t) = x.dims2()?;
    if mask.shape() != [c, t / 2 + 1] {
        return Err(Error::Shape(format!("spectral mask {:?} does not fit signal {:?}", mask.shape(), x.shape())));
    }
    let mut data = Vec::with_capacity(c * t);
    for ch in 0..c {
        let mut a = rfft(x.row(ch));
        let b = other.map(|o| rfft(o.row(ch)));
        for (k, &m) in mask.row(ch).iter().enumerate() {
            if m == 1.0 {
                a[k] = match &b {
                    None => Complex64::new(0.0, 0.0),
                    Some(b) if amplitude_only => Complex64::from_polar(b[k].norm(), a[k].arg()),
                    Some(b) => b[k],
                };
            }
        }
        data.extend(irfft(&a, t));
    }
    Tensor::new(vec![c, t], data).map_err(|_| Error::NonFinite("inverse DFT"))
}

/// Sets the features of `subset` to zero. Spectral subsets zero their band
/// coefficients and transform back.
pub fn zero_mask(x: &Tensor, subset: &FeatureSubset) -> Result<Tensor> {
    if subset.is_empty() {
        return Ok(x.clone());
    }
    let mask = subset_to_mask(subset, x.shape())?;
    if mask.domain == Domain::Spectral {
        return spectral_blend(x, None, &mask.values, false);
    }
    x.zip_map(&mask.values, |v, m| if m == 1.0 { 0.0 } else { v })
}

/// `(1 − M) ⊙ x + M ⊙ x_adv`, taken over complex coefficients for spectral
/// masks.
pub fn aim_mask(x: &Tensor, x_adv: &Tensor, mask: &BinaryMask) -> Result<Tensor> {
    x.check_same_shape(x_adv)?;
    if mask.domain == Domain::Spectral {
        return spectral_blend(x, Some(x_adv), &mask.values, false);
    }
    x.check_same_shape(&mask.values)?;
    let data = x.data().iter().zip(x_adv.data()).zip(mask.values.data()).map(|((&a, &b), &m)| if m == 1.0 { b } else { a }).collect();
    x.with_data(data)
}

/// What spectral adversarial replacement swaps inside the band.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralReplace {
    #[default]
    Complex,
    Amplitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdRoadConfig {
    /// Laplacian noise std as a fraction of the masked channel's std.
    pub noise_fraction: f64,
    pub hurst: f64,
    pub amplitude_mode: AmplitudeMode,
}

impl Default for MdRoadConfig {
    fn default() -> Self {
        Self { noise_fraction: 0.01, hurst: DEFAULT_HURST, amplitude_mode: AmplitudeMode::SqrtPower }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AimConfig {
    pub adversarial: AdversarialConfig,
    #[serde(default)]
    pub spectral_replace: SpectralReplace,
    #[serde(default)]
    pub half_freq: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskingOperator {
    /// Leaves every input untouched.
    Identity,
    Zeroing,
    #[serde(rename = "mdroad")]
    MdRoad(MdRoadConfig),
    Aim(AimConfig),
}

/// Per-sample inputs an operator may need beyond the signal itself.
#[derive(Debug, Clone, Copy)]
pub struct MaskContext<'a> {
    pub layout: &'a Layout,
    pub x_adv: Option<&'a Tensor>,
    pub seed: u64,
}

fn population_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

impl MaskingOperator {
    pub fn name(&self) -> &'static str {
        match self {
            MaskingOperator::Identity => "IDENTITY",
            MaskingOperator::Zeroing => "ZEROING",
            MaskingOperator::MdRoad(_) => "MDROAD",
            MaskingOperator::Aim(_) => "AIM",
        }
    }

    pub fn needs_counterpart(&self) -> bool {
        matches!(self, MaskingOperator::Aim(_))
    }

    /// Fails when the operator cannot act on `domain` for data of `layout`.
    pub fn check(&self, domain: Domain, layout: &Layout) -> Result<()> {
        domain.check_layout(layout).map_err(|_| Error::Incompatible { operator: self.name().into(), domain: domain.name().into() })
    }

    pub fn apply(&self, x: &Tensor, subset: &FeatureSubset, ctx: &MaskContext) -> Result<Tensor> {
        self.check(subset.domain(), ctx.layout)?;
        if subset.is_empty() {
            return Ok(x.clone());
        }
        match self {
            MaskingOperator::Identity => Ok(x.clone()),
            MaskingOperator::Zeroing => zero_mask(x, subset),
            MaskingOperator::MdRoad(cfg) => mdroad(x, subset, cfg, ctx),
            MaskingOperator::Aim(cfg) => {
                let adv = ctx.x_adv.ok_or_else(|| Error::Attack("no adversarial counterpart supplied".into()))?;
                let mask = subset_to_mask(subset, x.shape())?;
                match subset.features {
                    Features::Spectral { lo, hi } => {
                        let out = spectral_blend(x, Some(adv), &mask.values, cfg.spectral_replace == SpectralReplace::Amplitude)?;
                        if cfg.half_freq {
                            Ok(half_freq_correction(&out, adv, lo, hi)?.0)
                        } else {
                            Ok(out)
                        }
                    }
                    _ => aim_mask(x, adv, &mask),
                }
            }
        }
    }
}

fn add_row_noise(out: &mut Tensor, x: &Tensor, rows: &[usize], fraction: f64, seed: u64) -> Result<()> {
    if fraction <= 0.0 {
        return Ok(());
    }
    let mut r = rng::rng(seed, &[0x4e4f495345]);
    for &row in rows {
        let sd = fraction * population_std(x.row(row));
        if sd > 0.0 {
            let d = Normal::new(0.0, sd).map_err(|e| Error::Imputation(e.to_string()))?;
            for v in out.row_mut(row) {
                *v += d.sample(&mut r);
            }
        }
    }
    Ok(())
}

fn mdroad(x: &Tensor, subset: &FeatureSubset, cfg: &MdRoadConfig, ctx: &MaskContext) -> Result<Tensor> {
    match (&subset.features, ctx.layout) {
        (Features::Spatial { channels }, Layout::Signal { montage, channels: n, .. }) => {
            let graph = NeighborGraph::montage(montage, *n)?;
            let mut out = if channels.len() == *n {
                Tensor::zeros(x.shape())
            } else {
                laplacian_impute(x, channels, &graph, 0.0, ctx.seed)?
            };
            add_row_noise(&mut out, x, channels, cfg.noise_fraction, ctx.seed)?;
            Ok(out)
        }
        (Features::Grid { pixels }, Layout::Grid { height, width }) => {
            let graph = NeighborGraph::grid(*height, *width, height * width)?;
            let flat = x.clone().reshape(vec![height * width, 1])?;
            let mut out = if pixels.len() == height * width {
                Tensor::zeros(flat.shape())
            } else {
                laplacian_impute(&flat, pixels, &graph, 0.0, ctx.seed)?
            };
            let sd = cfg.noise_fraction * population_std(x.data());
            if sd > 0.0 {
                let d = Normal::new(0.0, sd).map_err(|e| Error::Imputation(e.to_string()))?;
                let mut r = rng::rng(ctx.seed, &[0x4e4f495345]);
                for &p in pixels {
                    out.data_mut()[p] += d.sample(&mut r);
                }
            }
            out.reshape(x.shape().to_vec())
        }
        (Features::Temporal { start, end }, _) => temporal_impute(x, *start, *end, cfg.hurst, ctx.seed),
        (Features::Spectral { lo, hi }, _) => spectral::spectral_impute_with(x, *lo, *hi, cfg.amplitude_mode, true),
        _ => Err(Error::Incompatible { operator: "MDROAD".into(), domain: subset.domain().name().into() }),
    }
}

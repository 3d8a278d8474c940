use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domains::{irfft, rfft};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FIT_DEGREE: usize = 3;

/// How the fitted curve becomes an amplitude.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    /// The fit models power; amplitude is `√max(P, 0)`.
    #[default]
    SqrtPower,
    /// The fitted value is used as the amplitude, `max(P, 0)`.
    Literal,
}

/// `P(f) = Σ a_i f^{-i}` for `i = 0..=3`, with `f` in bin units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFit {
    pub coefficients: [f64; FIT_DEGREE + 1],
    pub bins: Vec<usize>,
}

impl SpectralFit {
    /// Least-squares fit to `power[k]` over the given bins (all `k > 0`).
    pub fn fit(power: &[f64], bins: &[usize]) -> Result<Self> {
        if bins.len() < FIT_DEGREE + 1 {
            return Err(Error::Fit(format!("{} bins cannot fit {} coefficients", bins.len(), FIT_DEGREE + 1)));
        }
        if bins.contains(&0) {
            return Err(Error::Fit("the fit is defined on f > 0 only".into()));
        }
        let design = DMatrix::from_fn(bins.len(), FIT_DEGREE + 1, |r, c| (bins[r] as f64).powi(-(c as i32)));
        let target = DVector::from_iterator(bins.len(), bins.iter().map(|&k| power[k]));
        let sol = design.svd(true, true).solve(&target, 1e-14).map_err(|e| Error::Fit(e.to_string()))?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectral fit"));
        }
        let mut coefficients = [0.0; FIT_DEGREE + 1];
        coefficients.copy_from_slice(sol.as_slice());
        Ok(Self { coefficients, bins: bins.to_vec() })
    }

    pub fn eval(&self, bin: usize) -> f64 {
        let f = bin as f64;
        self.coefficients.iter().enumerate().map(|(i, a)| a * f.powi(-(i as i32))).sum()
    }
}

fn amplitude(p: f64, mode: AmplitudeMode) -> f64 {
    match mode {
        AmplitudeMode::SqrtPower => p.max(0.0).sqrt(),
        AmplitudeMode::Literal => p.max(0.0),
    }
}

/// Replaces the amplitudes of bins `lo..hi` of one channel's half spectrum by
/// the fitted curve, keeping phases. Fits on every other nonzero bin, or on all
/// nonzero bins when fewer than four remain outside the band.
pub fn impute_half_spectrum(half: &mut [Complex64], lo: usize, hi: usize, mode: AmplitudeMode, allow_full: bool) -> Result<SpectralFit> {
    if lo == 0 {
        return Err(Error::Imputation("the band must exclude the DC bin".into()));
    }
    let hi = hi.min(half.len());
    let power: Vec<f64> = half.iter().map(|c| c.norm_sqr()).collect();
    let outside: Vec<usize> = (1..half.len()).filter(|&k| k < lo || k >= hi).collect();
    let fit = if outside.len() < FIT_DEGREE + 1 && allow_full {
        SpectralFit::fit(&power, &(1..half.len()).collect::<Vec<_>>())?
    } else {
        SpectralFit::fit(&power, &outside)?
    };
    for (k, c) in half.iter_mut().enumerate().take(hi).skip(lo) {
        *c = Complex64::from_polar(amplitude(fit.eval(k), mode), c.arg());
    }
    Ok(fit)
}

/// Per channel of `x` (`[channels, time]`), imputes the band `lo..hi`.
pub fn spectral_impute(x: &Tensor, lo: usize, hi: usize, mode: AmplitudeMode) -> Result<Tensor> {
    spectral_impute_with(x, lo, hi, mode, false)
}

pub(crate) fn spectral_impute_with(x: &Tensor, lo: usize, hi: usize, mode: AmplitudeMode, allow_full: bool) -> Result<Tensor> {
    let (c, t) = x.dims2()?;
    if lo >= hi {
        return Ok(x.clone());
    }
    let mut data = Vec::with_capacity(c * t);
    for ch in 0..c {
        let mut half = rfft(x.row(ch));
        impute_half_spectrum(&mut half, lo, hi, mode, allow_full)?;
        data.extend(irfft(&half, t));
    }
    Tensor::new(vec![c, t], data).map_err(|_| Error::NonFinite("spectral imputation"))
}

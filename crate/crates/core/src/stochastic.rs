//! Fractional Gaussian noise, fractional Brownian motion and the multipoint
//! fractional Brownian bridge used for temporal imputation.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domains::fft_in_place;
use crate::error::{Error, Result};
use crate::rng;

/// Circulant eigenvalues below `-EIGEN_TOLERANCE` trigger the Cholesky path.
pub const EIGEN_TOLERANCE: f64 = 1e-8;
/// Ridge added to a singular anchor covariance.
pub const ANCHOR_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FbmParams {
    pub hurst: f64,
    pub n: usize,
    pub seed: u64,
}

impl FbmParams {
    pub fn validate(&self) -> Result<()> {
        check_hurst(self.hurst)?;
        if self.n < 1 {
            return Err(Error::Process("path length must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::Process(format!("Hurst index {h} outside (0, 1)")))
    }
}

/// `½(|t1|^{2H} + |t2|^{2H} − |t1 − t2|^{2H})`
pub fn fbm_covariance(t1: f64, t2: f64, hurst: f64) -> f64 {
    let e = 2.0 * hurst;
    0.5 * (t1.abs().powf(e) + t2.abs().powf(e) - (t1 - t2).abs().powf(e))
}

/// Autocovariance of unit-spacing fGn at integer `lag`.
pub fn fgn_autocovariance(lag: usize, hurst: f64) -> f64 {
    let k = lag as f64;
    let e = 2.0 * hurst;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FgnMethod {
    DaviesHarte,
    Cholesky,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FgnSample {
    pub values: Vec<f64>,
    pub method: FgnMethod,
}

/// Eigenvalues of the `2n` circulant embedding of the fGn autocovariance.
fn circulant_eigenvalues(n: usize, hurst: f64) -> Vec<f64> {
    let mut row: Vec<Complex64> = (0..=n).map(|k| Complex64::new(fgn_autocovariance(k, hurst), 0.0)).collect();
    row.extend((1..n).rev().map(|k| Complex64::new(fgn_autocovariance(k, hurst), 0.0)));
    fft_in_place(&mut row, false);
    row.iter().map(|c| c.re).collect()
}

/// `n` fGn increments via circulant embedding, or via a dense Cholesky
/// factor when the embedding has an eigenvalue below `-EIGEN_TOLERANCE`.
pub fn fgn_davies_harte(n: usize, hurst: f64, seed: u64) -> Result<FgnSample> {
    FbmParams { hurst, n, seed }.validate()?;
    let lambda = circulant_eigenvalues(n, hurst);
    if lambda.iter().any(|&l| l < -EIGEN_TOLERANCE) {
        return Ok(FgnSample { values: fgn_cholesky(n, hurst, seed)?, method: FgnMethod::Cholesky });
    }
    let m = 2 * n;
    let mut r = rng::rng(seed, &[0x4448]);
    let mut z = || -> f64 { StandardNormal.sample(&mut r) };
    let mut v = vec![Complex64::new(0.0, 0.0); m];
    let scale = |l: f64, d: f64| (l.max(0.0) / d).sqrt();
    v[0] = Complex64::new(scale(lambda[0], m as f64) * z(), 0.0);
    v[n] = Complex64::new(scale(lambda[n], m as f64) * z(), 0.0);
    for k in 1..n {
        let s = scale(lambda[k], 2.0 * m as f64);
        v[k] = Complex64::new(s * z(), s * z());
        v[m - k] = v[k].conj();
    }
    fft_in_place(&mut v, false);
    Ok(FgnSample { values: v[..n].iter().map(|c| c.re).collect(), method: FgnMethod::DaviesHarte })
}

/// Exact O(n³) sampler from the dense Toeplitz covariance.
pub fn fgn_cholesky(n: usize, hurst: f64, seed: u64) -> Result<Vec<f64>> {
    FbmParams { hurst, n, seed }.validate()?;
    let gamma: Vec<f64> = (0..n).map(|k| fgn_autocovariance(k, hurst)).collect();
    let cov = DMatrix::from_fn(n, n, |i, j| gamma[i.abs_diff(j)]);
    let chol = cov
        .clone()
        .cholesky()
        .or_else(|| (cov + DMatrix::identity(n, n) * ANCHOR_RIDGE).cholesky())
        .ok_or_else(|| Error::Process("fGn covariance is not positive definite".into()))?;
    let mut r = rng::rng(seed, &[0x43484f4c]);
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
    Ok((chol.l() * z).iter().copied().collect())
}

/// `B(0), …, B(n)` at unit spacing; `B(0) = 0`.
pub fn fbm_path(n: usize, hurst: f64, seed: u64) -> Result<Vec<f64>> {
    let inc = fgn_davies_harte(n, hurst, seed)?.values;
    let mut path = Vec::with_capacity(n + 1);
    path.push(0.0);
    let mut acc = 0.0;
    for v in inc {
        acc += v;
        path.push(acc);
    }
    Ok(path)
}

/// Observed points a bridge must pass through. Anchor `i` sits at grid index
/// `indices[i]` of an `n`-point grid mapped onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeAnchors {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl BridgeAnchors {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Process("anchor indices and values differ in length".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Process("anchor times must be strictly increasing".into()));
        }
        Ok(Self { indices, values })
    }

    pub fn times(&self, n: usize) -> Vec<f64> {
        self.indices.iter().map(|&i| grid_time(i, n)).collect()
    }

    /// Anchor covariance `σ_ij` under fBm with the given Hurst index.
    pub fn covariance(&self, n: usize, hurst: f64) -> DMatrix<f64> {
        let t = self.times(n);
        DMatrix::from_fn(t.len(), t.len(), |i, j| fbm_covariance(t[i], t[j], hurst))
    }
}

fn grid_time(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// Bridge on `n` equally spaced times in `[0, 1]` passing through every
/// anchor: `x(t) = B(t) − (B(t_i) − G_i) σ⁻¹_ij ⟨B(t), B(t_j)⟩`.
pub fn mfbb(n: usize, anchors: &BridgeAnchors, hurst: f64, seed: u64) -> Result<Vec<f64>> {
    mfbb_scaled(n, anchors, hurst, 1.0, seed)
}

/// [`mfbb`] with the free fBm multiplied by `scale` before conditioning.
pub fn mfbb_scaled(n: usize, anchors: &BridgeAnchors, hurst: f64, scale: f64, seed: u64) -> Result<Vec<f64>> {
    check_hurst(hurst)?;
    if n == 0 {
        return Err(Error::Process("bridge length must be >= 1".into()));
    }
    if let Some(&last) = anchors.indices.last() {
        if last >= n {
            return Err(Error::Process(format!("anchor index {last} outside a grid of {n} points")));
        }
    }
    let times: Vec<f64> = (0..n).map(|j| grid_time(j, n)).collect();
    let b: Vec<f64> = if n == 1 {
        vec![0.0]
    } else {
        let step = (1.0 / (n - 1) as f64).powf(hurst);
        fbm_path(n - 1, hurst, seed)?.into_iter().map(|v| scale * step * v).collect()
    };
    if anchors.indices.is_empty() {
        return Ok(b);
    }
    for (&i, &g) in anchors.indices.iter().zip(&anchors.values) {
        if times[i] == 0.0 && g != 0.0 {
            return Err(Error::Process(format!("anchor at t = 0 must equal B(0) = 0, got {g}")));
        }
    }
    let sigma = anchors.covariance(n, hurst);
    let k = sigma.nrows();
    let chol = sigma
        .clone()
        .cholesky()
        .or_else(|| (sigma + DMatrix::identity(k, k) * ANCHOR_RIDGE).cholesky())
        .ok_or_else(|| Error::Process("anchor covariance is singular".into()))?;
    let resid = DVector::from_iterator(
        k,
        anchors.indices.iter().zip(&anchors.values).map(|(&i, &g)| b[i] - g),
    );
    let w = chol.solve(&resid);
    let at = anchors.times(n);
    let mut out: Vec<f64> = times
        .iter()
        .zip(&b)
        .map(|(&t, &bt)| bt - at.iter().zip(w.iter()).map(|(&ta, &wa)| wa * fbm_covariance(t, ta, hurst)).sum::<f64>())
        .collect();
    // the conditioning is exact up to the ridge; pin anchors to their values
    for (&i, &g) in anchors.indices.iter().zip(&anchors.values) {
        debug_assert!((out[i] - g).abs() < 1e-6);
        out[i] = g;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bridge"));
    }
    Ok(out)
}

/// Mean of the bridge at each grid time given the anchors:
/// `⟨B(t), B(t_j)⟩ σ⁻¹_jk G_k`.
pub fn bridge_mean(n: usize, anchors: &BridgeAnchors, hurst: f64) -> Result<Vec<f64>> {
    let sigma = anchors.covariance(n, hurst);
    let k = sigma.nrows();
    let inv = (sigma + DMatrix::identity(k, k) * ANCHOR_RIDGE)
        .try_inverse()
        .ok_or_else(|| Error::Process("anchor covariance is singular".into()))?;
    let g = DVector::from_column_slice(&anchors.values);
    let coef = inv * g;
    let at = anchors.times(n);
    Ok((0..n)
        .map(|j| {
            let t = grid_time(j, n);
            at.iter().zip(coef.iter()).map(|(&ta, &c)| c * fbm_covariance(t, ta, hurst)).sum()
        })
        .collect())
}

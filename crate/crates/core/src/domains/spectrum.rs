use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::attribution::FeatureView;
use crate::error::{Error, Result};
use crate::model::{GradientTarget, Model};
use crate::tensor::Tensor;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let plan = if inverse { p.plan_fft_inverse(buf.len()) } else { p.plan_fft_forward(buf.len()) };
        plan.process(buf);
    })
}

/// One-sided DFT of a real sequence: bins `0..=n/2`.
pub(crate) fn rfft(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf, false);
    buf.truncate(x.len() / 2 + 1);
    buf
}

/// Inverse of [`rfft`] for a length-`n` real signal. Imaginary parts of DC
/// and (for even `n`) Nyquist are ignored, which enforces conjugate symmetry.
pub(crate) fn irfft(half: &[Complex64], n: usize) -> Vec<f64> {
    let mut full = vec![Complex64::new(0.0, 0.0); n];
    for (k, &c) in half.iter().enumerate().take(n / 2 + 1) {
        full[k] = c;
        if k > 0 && n - k != k {
            full[n - k] = c.conj();
        }
    }
    full[0].im = 0.0;
    if n % 2 == 0 {
        full[n / 2].im = 0.0;
    }
    fft_in_place(&mut full, true);
    full.iter().map(|c| c.re / n as f64).collect()
}

/// Weight of bin `k` when folding the two-sided spectrum onto one side.
pub(crate) fn fold_weight(k: usize, n: usize) -> f64 {
    if k == 0 || 2 * k == n {
        1.0
    } else {
        2.0
    }
}

/// Per-channel one-sided spectrum of a `[channels, time]` signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Vec<Complex64>>,
    pub time_len: usize,
    pub sampling_rate: f64,
}

impl Spectrum {
    pub fn of(x: &Tensor, sampling_rate: f64) -> Result<Self> {
        let (c, t) = x.dims2()?;
        if t < 2 {
            return Err(Error::Shape("spectrum needs at least two time samples".into()));
        }
        Ok(Self { bins: (0..c).map(|ch| rfft(x.row(ch))).collect(), time_len: t, sampling_rate })
    }

    pub fn num_bins(&self) -> usize {
        self.time_len / 2 + 1
    }

    pub fn channels(&self) -> usize {
        self.bins.len()
    }

    pub fn resolution(&self) -> f64 {
        self.sampling_rate / self.time_len as f64
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.resolution()
    }

    /// Nearest bin to a frequency in Hz.
    pub fn bin_of(&self, freq: f64) -> usize {
        ((freq / self.resolution()).round().max(0.0) as usize).min(self.num_bins() - 1)
    }

    pub fn to_signal(&self) -> Result<Tensor> {
        let data = self.bins.iter().flat_map(|b| irfft(b, self.time_len)).collect();
        Tensor::new(vec![self.channels(), self.time_len], data).map_err(|_| Error::NonFinite("inverse DFT"))
    }

    /// Power per bin summed over channels, folded one-sided.
    pub fn power(&self) -> Vec<f64> {
        let n = self.time_len;
        (0..self.num_bins())
            .map(|k| fold_weight(k, n) * self.bins.iter().map(|b| b[k].norm_sqr()).sum::<f64>())
            .collect()
    }

    /// `[channels, bins]` amplitudes.
    pub fn amplitudes(&self) -> Tensor {
        let data = self.bins.iter().flat_map(|b| b.iter().map(|c| c.norm())).collect();
        Tensor::new(vec![self.channels(), self.num_bins()], data).expect("finite amplitudes")
    }
}

/// Spectral amplitudes of a signal as feature coordinates, with phases held
/// at those of the original signal.
pub struct AmplitudeView<'a> {
    model: &'a Model,
    class: usize,
    target: GradientTarget,
    shape: [usize; 2],
    amplitude: Vec<f64>,
    phase: Vec<f64>,
}

impl<'a> AmplitudeView<'a> {
    pub fn new(model: &'a Model, x: &Tensor, class: usize, target: GradientTarget) -> Result<Self> {
        let spec = Spectrum::of(x, 1.0)?;
        let (amplitude, phase) = spec.bins.iter().flatten().map(|c| (c.norm(), c.arg())).unzip();
        Ok(Self { model, class, target, shape: [spec.channels(), spec.time_len], amplitude, phase })
    }

    pub fn bins(&self) -> usize {
        self.shape[1] / 2 + 1
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    /// Time signal for the given amplitudes.
    pub fn signal(&self, amplitude: &[f64]) -> Result<Tensor> {
        let f = self.bins();
        let n = self.shape[1];
        let data = amplitude
            .chunks(f)
            .zip(self.phase.chunks(f))
            .flat_map(|(a, p)| {
                let half: Vec<Complex64> = a.iter().zip(p).map(|(&a, &p)| Complex64::from_polar(a, p)).collect();
                irfft(&half, n)
            })
            .collect();
        Tensor::new(self.shape.to_vec(), data).map_err(|_| Error::NonFinite("amplitude view"))
    }
}

impl FeatureView for AmplitudeView<'_> {
    fn point(&self) -> &[f64] {
        &self.amplitude
    }

    fn gradient(&self, at: &[f64]) -> Result<Vec<f64>> {
        let x = self.signal(at)?;
        let g = self.model.target_gradient(&x, self.class, self.target)?;
        let (n, f) = (self.shape[1], self.bins());
        let mut out = Vec::with_capacity(at.len());
        for c in 0..self.shape[0] {
            let gk = rfft(g.row(c));
            for k in 0..f {
                let rot = Complex64::from_polar(1.0, self.phase[c * f + k]);
                out.push(fold_weight(k, n) / n as f64 * (rot * gk[k].conj()).re);
            }
        }
        Ok(out)
    }

    fn value(&self, at: &[f64]) -> Result<f64> {
        self.model.target_value(&self.signal(at)?, self.class, self.target)
    }
}

/// Per-bin importance of `x` for class `y`: the logit gradient pulled back
/// through the inverse DFT onto spectral amplitudes, summed over channels.
pub fn spectral_saliency(model: &Model, x: &Tensor, y: usize) -> Result<Vec<f64>> {
    let view = AmplitudeView::new(model, x, y, GradientTarget::Logit)?;
    let g = view.gradient(view.point())?;
    let f = view.bins();
    Ok((0..f).map(|k| (0..view.channels()).map(|c| g[c * f + k]).sum()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layer;
    use rand::Rng as _;
    use std::f64::consts::PI;

    fn sinusoid(n: usize, cycles: f64, phase: f64) -> Vec<f64> {
        (0..n).map(|t| (2.0 * PI * cycles * t as f64 / n as f64 + phase).sin()).collect()
    }

    #[test]
    fn round_trip_reproduces_signal() {
        let mut r = crate::rng::rng(1, &[]);
        for t in [2usize, 7, 16, 33, 64] {
            let x = Tensor::new(vec![3, t], (0..3 * t).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
            let back = Spectrum::of(&x, 100.0).unwrap().to_signal().unwrap();
            assert!(back.max_abs_diff(&x) < 1e-9);
        }
    }

    #[test]
    fn sinusoid_lands_in_its_bin() {
        let x = Tensor::new(vec![1, 64], sinusoid(64, 5.0, 0.3)).unwrap();
        let s = Spectrum::of(&x, 64.0).unwrap();
        let p = s.power();
        let peak = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(peak, 5);
        assert_eq!(s.bin_of(5.2), 5);
        assert!((s.frequency(5) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_model_has_zero_spectral_saliency() {
        let m = Model::new(
            vec![2, 16],
            2,
            vec![Layer::Dense { weight: Tensor::zeros(&[2, 32]), bias: Tensor::zeros(&[2]) }],
        )
        .unwrap();
        let x = Tensor::new(vec![2, 16], (0..32).map(|i| (i as f64).sin()).collect()).unwrap();
        assert!(spectral_saliency(&m, &x, 1).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn amplitude_gradient_matches_finite_differences() {
        let m = Model::conv1d(vec![2, 16], 3, 4, 2, 4).unwrap();
        let mut r = crate::rng::rng(2, &[]);
        let x = Tensor::new(vec![2, 16], (0..32).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let view = AmplitudeView::new(&m, &x, 1, GradientTarget::Logit).unwrap();
        let a = view.point().to_vec();
        let g = view.gradient(&a).unwrap();
        let h = 1e-5;
        for i in 0..a.len() {
            let mut p = a.clone();
            p[i] += h;
            let mut q = a.clone();
            q[i] -= h;
            let fd = (view.value(&p).unwrap() - view.value(&q).unwrap()) / (2.0 * h);
            assert!((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6) < 1e-3, "bin {i}: {} vs {fd}", g[i]);
        }
        // the reconstructed signal at the original amplitudes is x itself
        assert!(view.signal(&a).unwrap().max_abs_diff(&x) < 1e-9);
    }
}

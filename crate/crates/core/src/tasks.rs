//! Synthetic datasets with planted discriminative features and their oracle
//! attributions.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Layout, Montage, Sample};
use crate::domains::Domain;
use crate::error::{Error, Result};
use crate::model::{Model, TrainConfig};
use crate::rng;
use crate::tensor::Tensor;

/// Where the class information lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Planted {
    /// Class sign times a sinusoid of `cycles` periods on each listed channel.
    Channels { channels: Vec<usize>, cycles: f64 },
    /// Hann-windowed burst at `freqs[c]` Hz on `start..end` for class `c`,
    /// zero at the window centre.
    Window { start: usize, end: usize, freqs: Vec<f64> },
    /// Class `c` carries a sinusoid at `freqs[c]` Hz with random phase over
    /// `1/f` background; `half_width` bins either side mark the oracle band.
    Frequencies { freqs: Vec<f64>, half_width: usize, background: f64 },
    /// A `size`×`size` patch at `corners[c]` (row, col) for class `c`.
    Patch { size: usize, corners: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub domain: Domain,
    pub layout: Layout,
    pub classes: usize,
    pub planted: Planted,
    pub amplitude: f64,
    pub noise_std: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl TaskSpec {
    pub fn spatial() -> Self {
        Self {
            name: "spatial".into(),
            domain: Domain::Spatial,
            layout: Layout::Signal { channels: 16, time: 64, sampling_rate: 64.0, montage: Montage { rows: 4, cols: 4 } },
            classes: 2,
            planted: Planted::Channels { channels: vec![5, 6, 9], cycles: 4.0 },
            amplitude: 1.0,
            noise_std: 1.0,
            samples_per_class: 256,
            seed: 1,
        }
    }

    pub fn temporal() -> Self {
        Self {
            name: "temporal".into(),
            domain: Domain::Temporal,
            layout: Layout::Signal { channels: 4, time: 128, sampling_rate: 128.0, montage: Montage { rows: 2, cols: 2 } },
            classes: 2,
            planted: Planted::Window { start: 48, end: 80, freqs: vec![6.0, 14.0] },
            amplitude: 2.0,
            noise_std: 1.0,
            samples_per_class: 256,
            seed: 2,
        }
    }

    pub fn spectral() -> Self {
        Self {
            name: "spectral".into(),
            domain: Domain::Spectral,
            layout: Layout::Signal { channels: 4, time: 128, sampling_rate: 128.0, montage: Montage { rows: 2, cols: 2 } },
            classes: 4,
            planted: Planted::Frequencies { freqs: vec![12.0, 20.0, 28.0, 36.0], half_width: 1, background: 0.5 },
            amplitude: 0.5,
            noise_std: 1.0,
            samples_per_class: 128,
            seed: 3,
        }
    }

    pub fn grid() -> Self {
        Self {
            name: "grid".into(),
            domain: Domain::Grid,
            layout: Layout::Grid { height: 12, width: 12 },
            classes: 2,
            planted: Planted::Patch { size: 4, corners: vec![(1, 1), (7, 7)] },
            amplitude: 1.0,
            noise_std: 1.0,
            samples_per_class: 256,
            seed: 4,
        }
    }

    pub fn preset(domain: Domain) -> Self {
        match domain {
            Domain::Spatial => Self::spatial(),
            Domain::Temporal => Self::temporal(),
            Domain::Spectral => Self::spectral(),
            Domain::Grid => Self::grid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("task {}: {m}", self.name)));
        if self.classes < 2 {
            return bad("needs at least two classes".into());
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be >= 1".into());
        }
        if !(self.noise_std >= 0.0 && self.amplitude.is_finite()) {
            return bad("noise_std must be >= 0 and amplitude finite".into());
        }
        self.domain.check_layout(&self.layout)?;
        let shape = self.layout.shape();
        match (&self.planted, self.domain) {
            (Planted::Channels { channels, .. }, Domain::Spatial) => {
                if channels.is_empty() {
                    return bad("planted channel set is empty".into());
                }
                if channels.iter().any(|&c| c >= shape[0]) {
                    return bad(format!("planted channels {channels:?} outside {} channels", shape[0]));
                }
            }
            (Planted::Window { start, end, freqs }, Domain::Temporal) => {
                if start >= end || *end > shape[1] {
                    return bad(format!("window {start}..{end} outside 0..{}", shape[1]));
                }
                if freqs.len() != self.classes {
                    return bad("one burst frequency per class is required".into());
                }
            }
            (Planted::Frequencies { freqs, .. }, Domain::Spectral) => {
                if freqs.len() != self.classes {
                    return bad("one frequency per class is required".into());
                }
                let Layout::Signal { sampling_rate, .. } = self.layout else { unreachable!() };
                if freqs.iter().any(|&f| !(f > 0.0 && f < sampling_rate / 2.0)) {
                    return bad(format!("frequencies {freqs:?} outside (0, Nyquist)"));
                }
                let mut s = freqs.clone();
                s.sort_by(f64::total_cmp);
                if s.windows(2).any(|w| w[0] == w[1]) {
                    return bad(format!("duplicate class frequencies {freqs:?}"));
                }
            }
            (Planted::Patch { size, corners }, Domain::Grid) => {
                if corners.len() != self.classes {
                    return bad("one patch per class is required".into());
                }
                if *size == 0 || corners.iter().any(|&(r, c)| r + size > shape[0] || c + size > shape[1]) {
                    return bad("patch outside the grid".into());
                }
            }
            _ => return bad(format!("planted features do not match the {} domain", self.domain.name())),
        }
        Ok(())
    }

    /// `samples_per_class` per class for training, half as many for testing,
    /// from independent seeds.
    pub fn train_test(&self) -> Result<(Dataset, Dataset)> {
        let train = generate(&Self { seed: rng::derive(self.seed, &[0]), ..self.clone() })?;
        let test = generate(&Self { seed: rng::derive(self.seed, &[1]), samples_per_class: self.samples_per_class.div_ceil(2), ..self.clone() })?;
        Ok((train, test))
    }

    /// Training setup used for the shipped tasks.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { weight_decay: 1e-2, seed: rng::derive(self.seed, &[2]), ..TrainConfig::default() }
    }

    /// Untrained model suited to the task: a temporal convolution for the
    /// spatial and spectral tasks, an MLP for the temporal and grid tasks.
    pub fn model(&self, seed: u64) -> Result<Model> {
        let shape = self.layout.shape();
        match self.domain {
            Domain::Grid | Domain::Temporal => Model::mlp(shape, [32, 16], self.classes, seed),
            Domain::Spectral => Model::conv1d(shape, 8, 16, self.classes, seed),
            Domain::Spatial => Model::conv1d(shape, 8, 9, self.classes, seed),
        }
    }
}

fn noise(spec: &TaskSpec, r: &mut rng::Rng, n: usize) -> Vec<f64> {
    if spec.noise_std == 0.0 {
        return vec![0.0; n];
    }
    let d = Normal::new(0.0, spec.noise_std).expect("validated std");
    (0..n).map(|_| d.sample(r)).collect()
}

fn class_sign(y: usize) -> f64 {
    if y == 0 {
        -1.0
    } else {
        1.0
    }
}

fn build(spec: &TaskSpec, mut one: impl FnMut(usize, &mut rng::Rng) -> Vec<f64>) -> Result<Dataset> {
    spec.validate()?;
    let shape = spec.layout.shape();
    let n = spec.samples_per_class * spec.classes;
    let samples = (0..n)
        .map(|i| {
            let y = i % spec.classes;
            let mut r = rng::rng(spec.seed, &[i as u64]);
            Ok(Sample { x: Tensor::new(shape.clone(), one(y, &mut r))?, y })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, spec.classes, spec.layout.clone())
}

pub fn gen_spatial(spec: &TaskSpec) -> Result<Dataset> {
    let Planted::Channels { channels, cycles } = &spec.planted else {
        return Err(Error::Config("spatial task needs planted channels".into()));
    };
    let [c, t] = spec.layout.shape()[..] else { unreachable!() };
    build(spec, |y, r| {
        let mut x = noise(spec, r, c * t);
        for &ch in channels {
            for i in 0..t {
                x[ch * t + i] += class_sign(y) * spec.amplitude * (2.0 * PI * cycles * i as f64 / t as f64).sin();
            }
        }
        x
    })
}

/// Hann-windowed sinusoid over `len` samples, zero at sample `(len − 1) / 2`.
fn burst(len: usize, freq: f64, fs: f64) -> Vec<f64> {
    let mid = ((len - 1) / 2) as f64;
    (0..len)
        .map(|i| {
            let hann = 0.5 - 0.5 * (2.0 * PI * (i as f64 + 0.5) / len as f64).cos();
            hann * (2.0 * PI * freq * (i as f64 - mid) / fs).sin()
        })
        .collect()
}

pub fn gen_temporal(spec: &TaskSpec) -> Result<Dataset> {
    let Planted::Window { start, end, freqs } = &spec.planted else {
        return Err(Error::Config("temporal task needs a planted window".into()));
    };
    let Layout::Signal { channels: c, time: t, sampling_rate, .. } = spec.layout else {
        return Err(Error::Config("temporal task needs a signal layout".into()));
    };
    let bursts: Vec<Vec<f64>> = freqs.iter().map(|&f| burst(end - start, f, sampling_rate)).collect();
    build(spec, |y, r| {
        let mut x = noise(spec, r, c * t);
        for ch in 0..c {
            for (i, v) in bursts[y].iter().enumerate() {
                x[ch * t + start + i] += spec.amplitude * v;
            }
        }
        x
    })
}

pub fn gen_spectral(spec: &TaskSpec) -> Result<Dataset> {
    let Planted::Frequencies { freqs, background, .. } = &spec.planted else {
        return Err(Error::Config("spectral task needs planted frequencies".into()));
    };
    let Layout::Signal { channels: c, time: t, sampling_rate: fs, .. } = spec.layout else {
        return Err(Error::Config("spectral task needs a signal layout".into()));
    };
    let res = fs / t as f64;
    build(spec, |y, r| {
        let mut x = noise(spec, r, c * t);
        let phase: f64 = r.random_range(0.0..2.0 * PI);
        for ch in 0..c {
            for k in 1..t.div_ceil(2) {
                let f = k as f64 * res;
                let psi: f64 = r.random_range(0.0..2.0 * PI);
                for i in 0..t {
                    x[ch * t + i] += background / f * (2.0 * PI * f * i as f64 / fs + psi).cos();
                }
            }
            for i in 0..t {
                x[ch * t + i] += spec.amplitude * (2.0 * PI * freqs[y] * i as f64 / fs + phase).sin();
            }
        }
        x
    })
}

pub fn gen_grid(spec: &TaskSpec) -> Result<Dataset> {
    let Planted::Patch { size, corners } = &spec.planted else {
        return Err(Error::Config("grid task needs planted patches".into()));
    };
    let [_, w] = spec.layout.shape()[..] else { unreachable!() };
    let (h, wd) = (spec.layout.shape()[0], w);
    build(spec, |y, r| {
        let mut x = noise(spec, r, h * wd);
        let (r0, c0) = corners[y];
        for dr in 0..*size {
            for dc in 0..*size {
                x[(r0 + dr) * wd + c0 + dc] += spec.amplitude;
            }
        }
        x
    })
}

pub fn generate(spec: &TaskSpec) -> Result<Dataset> {
    match spec.domain {
        Domain::Spatial => gen_spatial(spec),
        Domain::Temporal => gen_temporal(spec),
        Domain::Spectral => gen_spectral(spec),
        Domain::Grid => gen_grid(spec),
    }
}

/// Writes `<stem>.csv` and the `<stem>.spec.json` sidecar into `dir`.
pub fn save_dataset(spec: &TaskSpec, data: &Dataset, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    data.write_csv(std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.csv")))?))?;
    std::fs::write(dir.join(format!("{stem}.spec.json")), serde_json::to_string_pretty(spec)?)?;
    Ok(())
}

pub fn load_dataset(dir: &Path, stem: &str) -> Result<(TaskSpec, Dataset)> {
    let spec_path = dir.join(format!("{stem}.spec.json"));
    let csv_path = dir.join(format!("{stem}.csv"));
    for p in [&spec_path, &csv_path] {
        if !p.exists() {
            return Err(Error::NotFound(p.clone()));
        }
    }
    let spec: TaskSpec = serde_json::from_str(&std::fs::read_to_string(spec_path)?)?;
    let data = Dataset::read_csv(std::io::BufReader::new(std::fs::File::open(csv_path)?), spec.classes, spec.layout.clone())?;
    Ok((spec, data))
}

/// Indicator of the planted features, one tensor per class. Spectral
/// indicators are `[channels, bins]`; the rest have the input's shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAttribution {
    pub domain: Domain,
    pub indicators: Vec<Tensor>,
}

impl OracleAttribution {
    pub fn for_class(&self, class: usize) -> &Tensor {
        &self.indicators[class]
    }

    /// Elementwise maximum over classes.
    pub fn union(&self) -> Tensor {
        let mut u = self.indicators[0].clone();
        for ind in &self.indicators[1..] {
            u = u.zip_map(ind, f64::max).expect("same shapes");
        }
        u
    }
}

pub fn oracle_attribution(spec: &TaskSpec) -> Result<OracleAttribution> {
    spec.validate()?;
    let shape = spec.layout.shape();
    let (rows, cols) = (shape[0], shape[1]);
    let mut indicators = Vec::with_capacity(spec.classes);
    for y in 0..spec.classes {
        let ind = match &spec.planted {
            Planted::Channels { channels, .. } => {
                let mut m = Tensor::zeros(&shape);
                for &c in channels {
                    m.row_mut(c).fill(1.0);
                }
                m
            }
            Planted::Window { start, end, .. } => {
                let mut m = Tensor::zeros(&shape);
                for r in 0..rows {
                    m.row_mut(r)[*start..*end].fill(1.0);
                }
                m
            }
            Planted::Frequencies { freqs, half_width, .. } => {
                let Layout::Signal { sampling_rate, .. } = spec.layout else { unreachable!() };
                let bins = cols / 2 + 1;
                let centre = (freqs[y] * cols as f64 / sampling_rate).round() as usize;
                let lo = centre.saturating_sub(*half_width).max(1);
                let hi = (centre + half_width + 1).min(bins);
                let mut m = Tensor::zeros(&[rows, bins]);
                for r in 0..rows {
                    m.row_mut(r)[lo..hi].fill(1.0);
                }
                m
            }
            Planted::Patch { size, corners } => {
                let mut m = Tensor::zeros(&shape);
                let (r0, c0) = corners[y];
                for dr in 0..*size {
                    m.row_mut(r0 + dr)[c0..c0 + size].fill(1.0);
                }
                m
            }
        };
        indicators.push(ind);
    }
    Ok(OracleAttribution { domain: spec.domain, indicators })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::Spectrum;
    use crate::masking::SpectralFit;

    fn quiet(spec: TaskSpec) -> TaskSpec {
        TaskSpec { noise_std: 0.0, samples_per_class: 4, ..spec }
    }

    fn class_means(d: &Dataset) -> Vec<Tensor> {
        (0..d.num_classes)
            .map(|c| {
                let xs: Vec<&Tensor> = d.samples.iter().filter(|s| s.y == c).map(|s| &s.x).collect();
                let mut m = Tensor::zeros(xs[0].shape());
                for x in &xs {
                    m = m.zip_map(x, |a, b| a + b / xs.len() as f64).unwrap();
                }
                m
            })
            .collect()
    }

    #[test]
    fn presets_validate_and_balance() {
        for d in Domain::ALL {
            let spec = TaskSpec::preset(d);
            spec.validate().unwrap();
            let data = generate(&TaskSpec { samples_per_class: 6, ..spec.clone() }).unwrap();
            assert_eq!(data.len(), 6 * spec.classes);
            for c in 0..spec.classes {
                assert_eq!(data.samples.iter().filter(|s| s.y == c).count(), 6);
            }
            let (train, test) = TaskSpec { samples_per_class: 4, ..spec }.train_test().unwrap();
            assert_eq!(train.len(), 2 * test.len());
            assert_ne!(train.samples[0].x, test.samples[0].x);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for d in Domain::ALL {
            let spec = TaskSpec { samples_per_class: 3, ..TaskSpec::preset(d) };
            assert_eq!(generate(&spec).unwrap().samples, generate(&spec).unwrap().samples);
        }
    }

    #[test]
    fn spatial_means_differ_only_on_planted_channels() {
        let d = generate(&quiet(TaskSpec::spatial())).unwrap();
        let m = class_means(&d);
        for ch in 0..16 {
            let differs = m[0].row(ch).iter().zip(m[1].row(ch)).any(|(a, b)| a != b);
            assert_eq!(differs, [5, 6, 9].contains(&ch), "channel {ch}");
        }
    }

    #[test]
    fn temporal_means_differ_only_inside_window() {
        let d = generate(&quiet(TaskSpec::temporal())).unwrap();
        let m = class_means(&d);
        for t in 0..128 {
            let differs = (0..4).any(|ch| m[0].row(ch)[t] != m[1].row(ch)[t]);
            assert!(!differs || (48..80).contains(&t), "t = {t}");
        }
        let b = burst(32, 6.0, 128.0);
        assert_eq!(b[15], 0.0);
        assert!(b.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn spectral_class_peaks_sit_at_their_frequencies() {
        // the 1/f background is shared, so peaks are read above the other classes
        let spec = quiet(TaskSpec::spectral());
        let d = generate(&spec).unwrap();
        let mut power = vec![vec![0.0; 65]; 4];
        for s in &d.samples {
            for (k, p) in Spectrum::of(&s.x, 128.0).unwrap().power().iter().enumerate() {
                power[s.y][k] += p;
            }
        }
        for c in 0..4 {
            let excess = |k: usize| 3.0 * power[c][k] - (0..4).filter(|&o| o != c).map(|o| power[o][k]).sum::<f64>();
            let peak = (1..65).max_by(|&a, &b| excess(a).total_cmp(&excess(b))).unwrap();
            assert_eq!(peak, [12, 20, 28, 36][c]);
        }
    }

    #[test]
    fn grid_means_differ_on_patches() {
        let d = generate(&quiet(TaskSpec::grid())).unwrap();
        let m = class_means(&d);
        let o = oracle_attribution(&TaskSpec::grid()).unwrap().union();
        for i in 0..144 {
            assert_eq!(m[0].data()[i] != m[1].data()[i], o.data()[i] == 1.0);
        }
    }

    #[test]
    fn oracle_marks_planted_features() {
        let o = oracle_attribution(&TaskSpec::spatial()).unwrap();
        let ind = o.for_class(0);
        for ch in 0..16 {
            assert_eq!(ind.row(ch).iter().all(|&v| v == 1.0), [5, 6, 9].contains(&ch));
            assert!(ind.row(ch).iter().all(|&v| v == 0.0 || v == 1.0));
        }
        let complement = ind.map(|v| 1.0 - v).unwrap();
        assert!(ind.data().iter().zip(complement.data()).all(|(a, b)| a * b == 0.0));
        let s = oracle_attribution(&TaskSpec::spectral()).unwrap();
        assert_eq!(s.for_class(1).shape(), &[4, 65]);
        assert_eq!(s.for_class(1).row(0)[19..22], [1.0; 3]);
        assert_eq!(s.for_class(1).sum(), 12.0);
    }

    #[test]
    fn invalid_specs() {
        let mut s = TaskSpec::spatial();
        s.planted = Planted::Channels { channels: vec![], cycles: 1.0 };
        assert!(generate(&s).is_err());
        let mut s = TaskSpec::spectral();
        s.planted = Planted::Frequencies { freqs: vec![12.0, 12.0, 20.0, 30.0], half_width: 1, background: 1.0 };
        assert!(generate(&s).is_err());
        let mut s = TaskSpec::grid();
        s.classes = 1;
        assert!(generate(&s).is_err());
        let mut s = TaskSpec::temporal();
        s.planted = Planted::Patch { size: 1, corners: vec![(0, 0), (1, 1)] };
        assert!(generate(&s).is_err());
        let mut s = TaskSpec::temporal();
        s.planted = Planted::Window { start: 10, end: 20, freqs: vec![5.0] };
        assert!(generate(&s).is_err());
    }

    #[test]
    fn dataset_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = TaskSpec { samples_per_class: 3, ..TaskSpec::spectral() };
        let d = generate(&spec).unwrap();
        save_dataset(&spec, &d, dir.path(), "train").unwrap();
        let (s2, d2) = load_dataset(dir.path(), "train").unwrap();
        assert_eq!(s2, spec);
        assert_eq!(d2.samples, d.samples);
        assert!(matches!(load_dataset(dir.path(), "missing"), Err(Error::NotFound(_))));
    }

    #[test]
    fn background_follows_inverse_frequency_model() {
        // noise-only spectra averaged over samples fit the degree-3 inverse polynomial
        let spec = TaskSpec { amplitude: 0.0, samples_per_class: 64, ..TaskSpec::spectral() };
        let d = generate(&spec).unwrap();
        let mut mean = vec![0.0; 65];
        for s in &d.samples {
            let sp = Spectrum::of(&s.x, 128.0).unwrap();
            for ch in &sp.bins {
                for (k, b) in ch.iter().enumerate() {
                    mean[k] += b.norm_sqr() / (4 * d.len()) as f64;
                }
            }
        }
        let bins: Vec<usize> = (1..64).collect();
        let fit = SpectralFit::fit(&mean, &bins).unwrap();
        let rel = (bins.iter().map(|&k| ((fit.eval(k) - mean[k]) / mean[k]).powi(2)).sum::<f64>() / bins.len() as f64).sqrt();
        assert!(rel < 0.1, "relative residual {rel}");
    }
}

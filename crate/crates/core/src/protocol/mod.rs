//! MoRF/LeRF degradation curves, area metrics and reliability diagnostics.

mod stats;

pub use stats::{average_ranks, ranking_consistency, spearman, stability, stability_metrics, ConsistencyResult, Spearman};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{attribute, attribute_view, AttributionConfig, Method};
use crate::data::{format_float, Dataset, Sample};
use crate::domains::{
    aggregate_spatial, select_grid, select_spatial, select_spectral, select_temporal, AmplitudeView, Domain, FeatureSubset, Features,
    Order, Spectrum, DEFAULT_POWER_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::masking::{pgd_dataset, MaskContext, MaskingOperator};
use crate::model::{accuracy, Model};
use crate::rng;
use crate::tensor::Tensor;

pub const DEFAULT_N_PERM: usize = 200;
/// Ratios up to this value enter the consistency average.
pub const CONSISTENCY_MAX_RATIO: f64 = 0.5;
pub const DEGENERATE_THRESHOLD: f64 = 1e-6;

/// 5%, 10%, …, 50%.
pub fn default_ratios() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.05).collect()
}

pub fn validate_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.is_empty() {
        return Err(Error::Config("at least one masking ratio is required".into()));
    }
    if ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::Config(format!("ratios must lie in (0, 1], got {ratios:?}")));
    }
    if ratios.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("ratios must be strictly ascending, got {ratios:?}")));
    }
    Ok(())
}

/// Importance scores of one sample in a feature domain. Spectral scores and
/// power cover bins `1..=T/2`.
#[derive(Debug, Clone, PartialEq)]
pub enum Scores {
    Map(Tensor),
    Spectral { scores: Vec<f64>, power: Vec<f64> },
}

fn band_power(x: &Tensor) -> Result<Vec<f64>> {
    Ok(Spectrum::of(x, 1.0)?.power()[1..].to_vec())
}

/// Scores of `cfg.method` for sample `(x, y)` in `domain`. Spectral scores
/// come from the method applied to the amplitude spectrum, summed over
/// channels.
pub fn method_scores(model: &Model, x: &Tensor, y: usize, domain: Domain, cfg: &AttributionConfig) -> Result<Scores> {
    if domain != Domain::Spectral {
        return Ok(Scores::Map(attribute(model, x, y, cfg)?.values));
    }
    let view = AmplitudeView::new(model, x, y, cfg.target)?;
    let s = attribute_view(&view, cfg, None)?;
    let f = view.bins();
    let scores = (1..f).map(|k| (0..view.channels()).map(|c| s[c * f + k]).sum()).collect();
    Ok(Scores::Spectral { scores, power: band_power(x)? })
}

/// Scores from a fixed indicator: `[C, T]` or `[H, W]` for map domains, `[C, F]`
/// for the spectral domain.
pub fn indicator_scores(x: &Tensor, domain: Domain, indicator: &Tensor) -> Result<Scores> {
    if domain != Domain::Spectral {
        x.check_same_shape(indicator)?;
        return Ok(Scores::Map(indicator.clone()));
    }
    let (c, f) = indicator.dims2()?;
    if c != x.shape()[0] || f != x.shape()[1] / 2 + 1 {
        return Err(Error::Shape(format!("spectral indicator {:?} does not fit input {:?}", indicator.shape(), x.shape())));
    }
    let scores = (1..f).map(|k| (0..c).map(|ch| indicator.row(ch)[k]).sum()).collect();
    Ok(Scores::Spectral { scores, power: band_power(x)? })
}

/// The subset a ratio `k` and order pick from `scores`.
pub fn select_subset(scores: &Scores, domain: Domain, k: f64, order: Order, tolerance: f64) -> Result<FeatureSubset> {
    let mut s = match (domain, scores) {
        (Domain::Spatial, Scores::Map(m)) => select_spatial(&aggregate_spatial(m)?, k, order),
        (Domain::Temporal, Scores::Map(m)) => select_temporal(m, k, order)?,
        (Domain::Grid, Scores::Map(m)) => select_grid(m, k, order),
        (Domain::Spectral, Scores::Spectral { scores, power }) => {
            let (lo, hi) = select_spectral(scores, power, k, order, tolerance)?;
            FeatureSubset { features: Features::Spectral { lo: lo + 1, hi: hi + 1 }, ratio: k }
        }
        _ => return Err(Error::Selection(format!("scores do not match the {} domain", domain.name()))),
    };
    s.ratio = k;
    Ok(s)
}

/// Source of per-sample scores: sample index and sample in, scores out.
pub trait Scorer: Sync {
    fn scores(&self, index: usize, sample: &Sample) -> Result<Scores>;
}

impl<F: Fn(usize, &Sample) -> Result<Scores> + Sync> Scorer for F {
    fn scores(&self, index: usize, sample: &Sample) -> Result<Scores> {
        self(index, sample)
    }
}

/// Scores from an attribution method. The method seed is refreshed per sample.
pub struct MethodScorer<'a> {
    pub model: &'a Model,
    pub config: AttributionConfig,
    pub domain: Domain,
}

impl Scorer for MethodScorer<'_> {
    fn scores(&self, index: usize, sample: &Sample) -> Result<Scores> {
        let cfg = AttributionConfig { seed: rng::derive(self.config.seed, &[index as u64]), ..self.config.clone() };
        method_scores(self.model, &sample.x, sample.y, self.domain, &cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub method: String,
    pub operator: String,
    pub domain: String,
    pub model: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationCurve {
    pub ratios: Vec<f64>,
    pub acc_morf: Vec<f64>,
    pub acc_lerf: Vec<f64>,
    pub acc0: f64,
    pub acc_full: f64,
    pub meta: CurveMeta,
}

pub const CURVE_HEADER: &str = "ratio,acc_morf,acc_lerf";

impl DegradationCurve {
    pub fn validate(&self) -> Result<()> {
        let k = self.ratios.len();
        if k == 0 || self.acc_morf.len() != k || self.acc_lerf.len() != k {
            return Err(Error::Shape(format!(
                "curve needs equal non-empty ratio ({k}), MoRF ({}) and LeRF ({}) lists",
                self.acc_morf.len(),
                self.acc_lerf.len()
            )));
        }
        let all = self.acc_morf.iter().chain(&self.acc_lerf).chain([&self.acc0, &self.acc_full]);
        if all.clone().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(Error::Shape("accuracies must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "{CURVE_HEADER}")?;
        for i in 0..self.ratios.len() {
            writeln!(w, "{},{},{}", format_float(self.ratios[i]), format_float(self.acc_morf[i]), format_float(self.acc_lerf[i]))?;
        }
        Ok(())
    }

    /// Reads the per-ratio rows written by [`write_csv`](Self::write_csv);
    /// the endpoints and metadata are supplied by the caller.
    pub fn read_csv(r: impl std::io::BufRead, acc0: f64, acc_full: f64, meta: CurveMeta) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != CURVE_HEADER {
            return Err(Error::Config(format!("unexpected curve header {header:?}")));
        }
        let (mut ratios, mut acc_morf, mut acc_lerf) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("curve row {}: {e}", n + 2)))?;
            if v.len() != 3 {
                return Err(Error::Config(format!("curve row {} has {} fields", n + 2, v.len())));
            }
            ratios.push(v[0]);
            acc_morf.push(v[1]);
            acc_lerf.push(v[2]);
        }
        let c = Self { ratios, acc_morf, acc_lerf, acc0, acc_full, meta };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaMetrics {
    pub aoc: f64,
    pub abc: f64,
    pub auc: f64,
}

impl AreaMetrics {
    /// `ABC − (AUC − (1 − AOC))`, zero up to rounding.
    pub fn identity_residual(&self) -> f64 {
        self.abc - (self.auc - (1.0 - self.aoc))
    }
}

pub fn area_metrics(curve: &DegradationCurve) -> Result<AreaMetrics> {
    curve.validate()?;
    let d = curve.acc0 - curve.acc_full;
    if d.abs() < DEGENERATE_THRESHOLD {
        return Err(Error::DegenerateDenominator { acc0: curve.acc0, acc_full: curve.acc_full });
    }
    let k = curve.ratios.len() as f64;
    let (mut aoc, mut abc, mut auc) = (0.0, 0.0, 0.0);
    for (&m, &l) in curve.acc_morf.iter().zip(&curve.acc_lerf) {
        aoc += (curve.acc0 - m) / d;
        abc += (l - m) / d;
        auc += (l - curve.acc_full) / d;
    }
    Ok(AreaMetrics { aoc: aoc / k, abc: abc / k, auc: auc / k })
}

/// Evaluates masking for one model, dataset and operator. Adversarial
/// counterparts are computed once and reused by every curve.
pub struct Evaluator<'a> {
    pub model: &'a Model,
    pub data: &'a Dataset,
    pub operator: &'a MaskingOperator,
    pub seed: u64,
    pub power_tolerance: f64,
    acc0: f64,
    counterparts: Option<Vec<Tensor>>,
}

/// Seed path of a subset: identical feature sets mask identically.
fn subset_key(i: usize, subset: &FeatureSubset) -> Vec<u64> {
    let mut key = vec![i as u64];
    match &subset.features {
        Features::Spatial { channels } => key.extend(std::iter::once(0).chain(channels.iter().map(|&c| c as u64))),
        Features::Temporal { start, end } => key.extend([1, *start as u64, *end as u64]),
        Features::Spectral { lo, hi } => key.extend([2, *lo as u64, *hi as u64]),
        Features::Grid { pixels } => key.extend(std::iter::once(3).chain(pixels.iter().map(|&p| p as u64))),
    }
    key
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a Model, data: &'a Dataset, operator: &'a MaskingOperator, seed: u64) -> Result<Self> {
        let counterparts = match operator {
            MaskingOperator::Aim(cfg) => {
                Some(pgd_dataset(model, data, &cfg.adversarial)?.into_iter().map(|c| c.x_adv).collect())
            }
            _ => None,
        };
        Self::with_counterparts(model, data, operator, seed, counterparts)
    }

    pub fn with_counterparts(
        model: &'a Model,
        data: &'a Dataset,
        operator: &'a MaskingOperator,
        seed: u64,
        counterparts: Option<Vec<Tensor>>,
    ) -> Result<Self> {
        if let Some(c) = &counterparts {
            if c.len() != data.len() {
                return Err(Error::Shape(format!("{} counterparts for {} samples", c.len(), data.len())));
            }
        }
        Ok(Self { model, data, operator, seed, power_tolerance: DEFAULT_POWER_TOLERANCE, acc0: accuracy(model, data)?, counterparts })
    }

    pub fn acc0(&self) -> f64 {
        self.acc0
    }

    pub fn counterparts(&self) -> Option<&[Tensor]> {
        self.counterparts.as_deref()
    }

    fn hit(&self, i: usize, subset: &FeatureSubset) -> Result<bool> {
        let s = &self.data.samples[i];
        let ctx = MaskContext {
            layout: &self.data.layout,
            x_adv: self.counterparts.as_ref().map(|c| &c[i]),
            seed: rng::derive(self.seed, &subset_key(i, subset)),
        };
        let x = self.operator.apply(&s.x, subset, &ctx)?;
        Ok(self.model.predict(&x)? == s.y)
    }

    /// Accuracy with every feature of `domain` masked.
    pub fn full_accuracy(&self, domain: Domain) -> Result<f64> {
        self.operator.check(domain, &self.data.layout)?;
        let all = FeatureSubset::all(domain, &self.data.layout)?;
        let hits: Vec<bool> = (0..self.data.len()).into_par_iter().map(|i| self.hit(i, &all)).collect::<Result<_>>()?;
        Ok(hits.iter().filter(|&&h| h).count() as f64 / self.data.len() as f64)
    }

    pub fn curve(&self, scorer: &dyn Scorer, domain: Domain, ratios: &[f64], meta: CurveMeta) -> Result<DegradationCurve> {
        let full = self.full_accuracy(domain)?;
        self.curve_with_full(scorer, domain, ratios, full, meta)
    }

    /// [`curve`](Self::curve) with a precomputed full-masking accuracy.
    pub fn curve_with_full(&self, scorer: &dyn Scorer, domain: Domain, ratios: &[f64], acc_full: f64, meta: CurveMeta) -> Result<DegradationCurve> {
        validate_ratios(ratios)?;
        self.operator.check(domain, &self.data.layout)?;
        let k = ratios.len();
        let per_sample: Vec<(Vec<bool>, Vec<bool>)> = (0..self.data.len())
            .into_par_iter()
            .map(|i| {
                let scores = scorer.scores(i, &self.data.samples[i])?;
                let mut morf = Vec::with_capacity(k);
                let mut lerf = Vec::with_capacity(k);
                for &ratio in ratios {
                    for (order, out) in [(Order::MoRF, &mut morf), (Order::LeRF, &mut lerf)] {
                        let subset = select_subset(&scores, domain, ratio, order, self.power_tolerance)?;
                        out.push(self.hit(i, &subset)?);
                    }
                }
                Ok((morf, lerf))
            })
            .collect::<Result<_>>()?;
        let n = self.data.len() as f64;
        let rate = |pick: &dyn Fn(&(Vec<bool>, Vec<bool>)) -> bool| per_sample.iter().filter(|s| pick(s)).count() as f64 / n;
        let acc_morf = (0..k).map(|r| rate(&|s| s.0[r])).collect();
        let acc_lerf = (0..k).map(|r| rate(&|s| s.1[r])).collect();
        let meta = CurveMeta { operator: self.operator.name().into(), domain: domain.name().into(), seed: self.seed, ..meta };
        Ok(DegradationCurve { ratios: ratios.to_vec(), acc_morf, acc_lerf, acc0: self.acc0, acc_full, meta })
    }
}

/// Convenience wrapper that builds an [`Evaluator`] for a single curve.
pub fn run_curve(
    model: &Model,
    data: &Dataset,
    cfg: &AttributionConfig,
    domain: Domain,
    operator: &MaskingOperator,
    ratios: &[f64],
    seed: u64,
) -> Result<DegradationCurve> {
    let ev = Evaluator::new(model, data, operator, seed)?;
    let scorer = MethodScorer { model, config: cfg.clone(), domain };
    ev.curve(&scorer, domain, ratios, CurveMeta { method: cfg.label(), ..Default::default() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBias {
    pub mean: f64,
    /// Sample standard deviation over permutations.
    pub std: f64,
    pub n_perm: usize,
    pub values: Vec<f64>,
}

impl RandomBias {
    /// `3·std/√n_perm`.
    pub fn clt_band(&self) -> f64 {
        3.0 * self.std / (self.n_perm as f64).sqrt()
    }

    pub fn within_clt_band(&self) -> bool {
        self.mean.abs() <= self.clt_band()
    }
}

fn random_scorer(data: &Dataset, domain: Domain, seed: u64) -> impl Fn(usize, &Sample) -> Result<Scores> + Sync + '_ {
    move |i, s| {
        let cfg = AttributionConfig { seed: rng::derive(seed, &[i as u64]), ..AttributionConfig::new(Method::Random) };
        match domain {
            Domain::Spectral => {
                let f = data.layout.shape()[1] / 2 + 1;
                let scores = crate::attribution::attribute_random(&[f - 1], cfg.seed)?.values.into_data();
                Ok(Scores::Spectral { scores, power: band_power(&s.x)? })
            }
            _ => Ok(Scores::Map(crate::attribution::attribute_random(s.x.shape(), cfg.seed)?.values)),
        }
    }
}

/// ABC of `n_perm` independent random saliency draws. When masking leaves
/// accuracy untouched and the MoRF and LeRF curves coincide, ABC is 0.
pub fn random_bias(ev: &Evaluator, domain: Domain, ratios: &[f64], n_perm: usize, seed: u64) -> Result<RandomBias> {
    if n_perm == 0 {
        return Err(Error::Config("n_perm must be >= 1".into()));
    }
    let full = ev.full_accuracy(domain)?;
    let values = (0..n_perm)
        .map(|p| {
            let scorer = random_scorer(ev.data, domain, rng::derive(seed, &[p as u64]));
            let curve = ev.curve_with_full(&scorer, domain, ratios, full, CurveMeta { method: "RANDOM".into(), ..Default::default() })?;
            match area_metrics(&curve) {
                Ok(m) => Ok(m.abc),
                Err(Error::DegenerateDenominator { .. }) if curve.acc_morf == curve.acc_lerf => Ok(0.0),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    Ok(RandomBias { mean, std, n_perm, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub operator: String,
    pub domain: String,
    pub random_bias: Option<RandomBias>,
    pub consistency: Option<ConsistencyResult>,
    /// Population std of each metric across the configurations evaluated.
    pub stability: Option<AreaMetrics>,
}

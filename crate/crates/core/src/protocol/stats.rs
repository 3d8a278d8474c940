use serde::{Deserialize, Serialize};

use super::{AreaMetrics, DegradationCurve, CONSISTENCY_MAX_RATIO};
use crate::error::{Error, Result};

/// 1-based ranks in ascending order; tied values share their mean rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// Set when either ranking has zero variance; `rho` is then 0.
    pub degenerate: bool,
}

/// Rank correlation of two score vectors: Pearson correlation of their
/// average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Spearman> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Shape(format!("spearman needs two equal rankings of length >= 2, got {} and {}", a.len(), b.len())));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(Spearman { rho: 0.0, degenerate: true });
    }
    Ok(Spearman { rho: (cov / (va * vb).sqrt()).clamp(-1.0, 1.0), degenerate: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub methods: Vec<String>,
    pub ratios: Vec<f64>,
    pub rho: Vec<f64>,
    pub degenerate: Vec<bool>,
    /// Per ratio, the average rank of each method by MoRF degradation.
    pub ranks_morf: Vec<Vec<f64>>,
    /// Per ratio, the average rank of each method by LeRF preservation.
    pub ranks_lerf: Vec<Vec<f64>>,
    /// Mean of `rho` over ratios up to one half.
    pub mean: f64,
}

/// Agreement between method rankings by MoRF degradation (`acc0 − acc_morf`)
/// and by LeRF preservation (`acc_lerf − acc_full`), per ratio.
pub fn ranking_consistency(curves: &[DegradationCurve]) -> Result<ConsistencyResult> {
    if curves.len() < 2 {
        return Err(Error::Config("ranking consistency needs at least two methods".into()));
    }
    let ratios = curves[0].ratios.clone();
    if curves.iter().any(|c| c.ratios != ratios) {
        return Err(Error::Shape("curves disagree on masking ratios".into()));
    }
    let (mut rho, mut degenerate, mut ranks_morf, mut ranks_lerf) = (vec![], vec![], vec![], vec![]);
    for r in 0..ratios.len() {
        let q_m: Vec<f64> = curves.iter().map(|c| c.acc0 - c.acc_morf[r]).collect();
        let q_l: Vec<f64> = curves.iter().map(|c| c.acc_lerf[r] - c.acc_full).collect();
        let s = spearman(&q_m, &q_l)?;
        rho.push(s.rho);
        degenerate.push(s.degenerate);
        ranks_morf.push(average_ranks(&q_m));
        ranks_lerf.push(average_ranks(&q_l));
    }
    let early: Vec<f64> = ratios.iter().zip(&rho).filter(|(&k, _)| k <= CONSISTENCY_MAX_RATIO + 1e-12).map(|(_, &p)| p).collect();
    if early.is_empty() {
        return Err(Error::Config(format!("no masking ratio at or below {CONSISTENCY_MAX_RATIO}")));
    }
    let mean = early.iter().sum::<f64>() / early.len() as f64;
    Ok(ConsistencyResult {
        methods: curves.iter().map(|c| c.meta.method.clone()).collect(),
        ratios,
        rho,
        degenerate,
        ranks_morf,
        ranks_lerf,
        mean,
    })
}

/// Population standard deviation.
pub fn stability(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Config("stability needs at least one value".into()));
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    Ok((values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
}

pub fn stability_metrics(metrics: &[AreaMetrics]) -> Result<AreaMetrics> {
    let col = |f: fn(&AreaMetrics) -> f64| stability(&metrics.iter().map(f).collect::<Vec<_>>());
    Ok(AreaMetrics { aoc: col(|m| m.aoc)?, abc: col(|m| m.abc)?, auc: col(|m| m.auc)? })
}

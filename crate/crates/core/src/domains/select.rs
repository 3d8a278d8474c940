use super::{FeatureSubset, Features, Order};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative tolerance on band power around the `k` share of total power.
pub const DEFAULT_POWER_TOLERANCE: f64 = 0.10;

/// `⌈k·n⌉`, guarded against representation error (0.3 × 10 is 3, not 4).
pub(crate) fn ratio_count(k: f64, n: usize) -> usize {
    if k <= 0.0 {
        return 0;
    }
    ((k * n as f64 - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// Indices of the `count` highest (MoRF) or lowest (LeRF) scores, ties going
/// to the lower index.
fn rank_select(scores: &[f64], count: usize, order: Order) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let c = match order {
            Order::MoRF => scores[b].total_cmp(&scores[a]),
            Order::LeRF => scores[a].total_cmp(&scores[b]),
        };
        c.then(a.cmp(&b))
    });
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

/// Channel scores: the signed sum over time of each row.
pub fn aggregate_spatial(s: &Tensor) -> Result<Vec<f64>> {
    let (c, _) = s.dims2()?;
    Ok((0..c).map(|ch| s.row(ch).iter().sum()).collect())
}

pub fn select_spatial(scores: &[f64], k: f64, order: Order) -> FeatureSubset {
    let channels = rank_select(scores, ratio_count(k, scores.len()), order);
    FeatureSubset { features: Features::Spatial { channels }, ratio: k }
}

pub fn select_grid(s: &Tensor, k: f64, order: Order) -> FeatureSubset {
    let pixels = rank_select(s.data(), ratio_count(k, s.len()), order);
    FeatureSubset { features: Features::Grid { pixels }, ratio: k }
}

/// The window of `⌈k·T⌉` samples with the largest (MoRF) or smallest (LeRF)
/// importance summed over channels; the earliest window wins ties.
pub fn select_temporal(s: &Tensor, k: f64, order: Order) -> Result<FeatureSubset> {
    let (c, t) = s.dims2()?;
    let len = if k > 1.0 { (k * t as f64).ceil() as usize } else { ratio_count(k, t) };
    if len > t {
        return Err(Error::Selection(format!("window of {len} samples exceeds signal length {t}")));
    }
    if len == 0 {
        return Ok(FeatureSubset { features: Features::Temporal { start: 0, end: 0 }, ratio: k });
    }
    let column: Vec<f64> = (0..t).map(|j| (0..c).map(|ch| s.row(ch)[j]).sum()).collect();
    let mut best = (0, f64::NAN);
    for start in 0..=t - len {
        let total: f64 = column[start..start + len].iter().sum();
        let better = match order {
            Order::MoRF => total > best.1,
            Order::LeRF => total < best.1,
        };
        if start == 0 || better {
            best = (start, total);
        }
    }
    Ok(FeatureSubset { features: Features::Temporal { start: best.0, end: best.0 + len }, ratio: k })
}

/// Contiguous band selection over bins `0..scores.len()`.
///
/// For each start bin the candidate is the shortest band whose power reaches
/// `k` of the total. Candidates whose power stays within `(1 + tolerance)` of
/// that target compete on mean importance (max for MoRF, min for LeRF,
/// earliest start on ties). When none does, the candidate with power closest
/// to the target wins, preferring shorter then earlier bands.
///
/// Returns the half-open band `lo..hi`.
pub fn select_spectral(
    scores: &[f64],
    power: &[f64],
    k: f64,
    order: Order,
    tolerance: f64,
) -> Result<(usize, usize)> {
    let n = scores.len();
    if n == 0 || power.len() != n {
        return Err(Error::Selection(format!(
            "spectral selection needs matching non-empty score ({n}) and power ({}) vectors",
            power.len()
        )));
    }
    if k <= 0.0 {
        return Ok((0, 0));
    }
    let total: f64 = power.iter().sum();
    let target = k.min(1.0) * total;
    let reach = target * (1.0 - 1e-12);

    struct Cand {
        lo: usize,
        hi: usize,
        power: f64,
        mean: f64,
    }
    let mut cands = Vec::new();
    for lo in 0..n {
        let mut acc = 0.0;
        for hi in lo..n {
            acc += power[hi];
            if acc >= reach {
                let mean = scores[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
                cands.push(Cand { lo, hi: hi + 1, power: acc, mean });
                break;
            }
        }
    }
    if cands.is_empty() {
        // only possible when rounding leaves the full band a hair short
        return Ok((0, n));
    }
    let cap = target * (1.0 + tolerance) * (1.0 + 1e-12);
    let mut best: Option<&Cand> = None;
    for c in cands.iter().filter(|c| c.power <= cap) {
        let better = match (best, order) {
            (None, _) => true,
            (Some(b), Order::MoRF) => c.mean > b.mean,
            (Some(b), Order::LeRF) => c.mean < b.mean,
        };
        if better {
            best = Some(c);
        }
    }
    if best.is_none() {
        for c in &cands {
            let better = match best {
                None => true,
                Some(b) => {
                    let (dc, db) = ((c.power - target).abs(), (b.power - target).abs());
                    dc < db || (dc == db && c.hi - c.lo < b.hi - b.lo)
                }
            };
            if better {
                best = Some(c);
            }
        }
    }
    let b = best.expect("at least one candidate");
    Ok((b.lo, b.hi))
}

/// Number of scalar entries a subset covers in a tensor of `shape`
/// (`[channels, time]` or `[height, width]`; spectral counts bins × channels).
pub fn feature_count(subset: &FeatureSubset, shape: &[usize]) -> usize {
    match &subset.features {
        Features::Spatial { channels } => channels.len() * shape[1],
        Features::Temporal { start, end } => end.saturating_sub(*start) * shape[0],
        Features::Spectral { lo, hi } => hi.saturating_sub(*lo) * shape[0],
        Features::Grid { pixels } => pixels.len(),
    }
}

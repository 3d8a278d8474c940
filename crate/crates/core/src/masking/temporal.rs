use crate::error::{Error, Result};
use crate::rng;
use crate::stochastic::{mfbb_scaled, BridgeAnchors};
use crate::tensor::Tensor;

pub const DEFAULT_HURST: f64 = 1e-5;

/// Window offsets of the start, centre and last sample, deduplicated.
pub fn anchor_offsets(len: usize) -> Vec<usize> {
    let mut a = vec![0, (len - 1) / 2, len - 1];
    a.dedup();
    a
}

fn population_std(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    (v.map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Replaces `start..end` of every channel with a fractional Brownian bridge
/// pinned to the original values at the window's start, centre and end. The
/// bridge's free path is scaled by the std of the channel outside the window.
pub fn temporal_impute(x: &Tensor, start: usize, end: usize, hurst: f64, seed: u64) -> Result<Tensor> {
    let (c, t) = x.dims2()?;
    if end > t || start > end {
        return Err(Error::Imputation(format!("window {start}..{end} outside 0..{t}")));
    }
    let len = end - start;
    if len == 0 {
        return Ok(x.clone());
    }
    let offsets = anchor_offsets(len);
    let mut out = x.clone();
    for ch in 0..c {
        let row = x.row(ch);
        let outside = row[..start].iter().chain(&row[end..]).copied();
        let scale = if t - len >= 2 { population_std(outside) } else { population_std(row.iter().copied()) };
        // grid point 0 is a virtual origin where the free path is zero, so the
        // anchors carry no constraint of their own
        let anchors = BridgeAnchors::new(offsets.iter().map(|o| o + 1).collect(), offsets.iter().map(|&o| row[start + o]).collect())?;
        let path = mfbb_scaled(len + 1, &anchors, hurst, scale, rng::derive(seed, &[ch as u64]))?;
        out.row_mut(ch)[start..end].copy_from_slice(&path[1..]);
    }
    Ok(out)
}

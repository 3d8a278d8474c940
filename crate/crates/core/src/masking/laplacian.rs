use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};

use crate::data::Montage;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

pub const DIRECT_WEIGHT: f64 = 1.0 / 6.0;
pub const DIAGONAL_WEIGHT: f64 = 1.0 / 12.0;

/// Adjacency on a rectangular layout of nodes. Node `i` sits at
/// `(i / cols, i % cols)`; only the first `nodes` positions exist.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub direct: Vec<Vec<usize>>,
    pub diagonal: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn grid(rows: usize, cols: usize, nodes: usize) -> Result<Self> {
        if nodes > rows * cols || nodes == 0 {
            return Err(Error::Imputation(format!("{nodes} nodes do not fit a {rows}x{cols} layout")));
        }
        let at = |r: isize, c: isize| -> Option<usize> {
            if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
                return None;
            }
            let i = r as usize * cols + c as usize;
            (i < nodes).then_some(i)
        };
        let mut direct = vec![Vec::new(); nodes];
        let mut diagonal = vec![Vec::new(); nodes];
        for i in 0..nodes {
            let (r, c) = ((i / cols) as isize, (i % cols) as isize);
            direct[i] = [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().filter_map(|&(dr, dc)| at(r + dr, c + dc)).collect();
            diagonal[i] = [(-1, -1), (-1, 1), (1, -1), (1, 1)].iter().filter_map(|&(dr, dc)| at(r + dr, c + dc)).collect();
        }
        Ok(Self { direct, diagonal })
    }

    pub fn montage(m: &Montage, channels: usize) -> Result<Self> {
        Self::grid(m.rows, m.cols, channels)
    }

    pub fn len(&self) -> usize {
        self.direct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.direct.is_empty()
    }

    /// Interpolation weights of node `i`, normalized to sum to one when
    /// part of the neighborhood falls off the layout.
    pub fn weights(&self, i: usize) -> Vec<(usize, f64)> {
        let raw: Vec<(usize, f64)> = self.direct[i]
            .iter()
            .map(|&j| (j, DIRECT_WEIGHT))
            .chain(self.diagonal[i].iter().map(|&j| (j, DIAGONAL_WEIGHT)))
            .collect();
        let total: f64 = raw.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() < 1e-15 {
            raw
        } else {
            raw.into_iter().map(|(j, w)| (j, w / total)).collect()
        }
    }

    /// `true` when every connected group of masked nodes touches an
    /// unmasked node.
    pub fn anchored(&self, masked: &[bool]) -> bool {
        let n = self.len();
        let mut seen = vec![false; n];
        for s in 0..n {
            if !masked[s] || seen[s] {
                continue;
            }
            let mut stack = vec![s];
            seen[s] = true;
            let mut touches = false;
            while let Some(u) = stack.pop() {
                for (v, _) in self.weights(u) {
                    if !masked[v] {
                        touches = true;
                    } else if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            if !touches {
                return false;
            }
        }
        true
    }
}

/// Rebuilds the masked rows of `x` (`[nodes, columns]`) from their neighbors by
/// solving `x_u − Σ_{v masked} W_uv x_v = Σ_{v observed} W_uv x_v` jointly,
/// then adds `N(0, noise_std²)` to every rebuilt value.
pub fn laplacian_impute(x: &Tensor, masked: &[usize], graph: &NeighborGraph, noise_std: f64, seed: u64) -> Result<Tensor> {
    let (n, cols) = x.dims2()?;
    if graph.len() != n {
        return Err(Error::Imputation(format!("graph has {} nodes, signal has {n}", graph.len())));
    }
    if masked.is_empty() {
        return Ok(x.clone());
    }
    let mut is_masked = vec![false; n];
    for &m in masked {
        if m >= n {
            return Err(Error::Imputation(format!("node {m} out of range")));
        }
        is_masked[m] = true;
    }
    if !graph.anchored(&is_masked) {
        return Err(Error::Imputation("masked nodes with no observed neighbor".into()));
    }
    let unknowns: Vec<usize> = (0..n).filter(|&i| is_masked[i]).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &u) in unknowns.iter().enumerate() {
        slot[u] = k;
    }
    let m = unknowns.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DMatrix::<f64>::zeros(m, cols);
    for (k, &u) in unknowns.iter().enumerate() {
        for (v, w) in graph.weights(u) {
            if is_masked[v] {
                a[(k, slot[v])] -= w;
            } else {
                for t in 0..cols {
                    b[(k, t)] += w * x.row(v)[t];
                }
            }
        }
    }
    let sol = a.lu().solve(&b).ok_or_else(|| Error::Imputation("singular interpolation system".into()))?;
    let mut out = x.clone();
    let noise = if noise_std > 0.0 {
        Some(Normal::new(0.0, noise_std).map_err(|e| Error::Imputation(e.to_string()))?)
    } else {
        None
    };
    let mut r = rng::rng(seed, &[0x4c4150]);
    for (k, &u) in unknowns.iter().enumerate() {
        let row = out.row_mut(u);
        for (t, v) in row.iter_mut().enumerate() {
            *v = sol[(k, t)] + noise.as_ref().map_or(0.0, |d| d.sample(&mut r));
        }
    }
    if out.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("laplacian imputation"));
    }
    Ok(out)
}

//! Watts–Strogatz graphs and the correlation matrices built from them.

use std::collections::VecDeque;

use mfbm_core::{MfbmError, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphSpec {
    pub nodes: usize,
    pub neighbors_each_side: usize,
    pub rewire_prob: f64,
    /// Edge weights are drawn uniformly from `[−high, −low] ∪ [low, high]`.
    /// Magnitudes up to 1 chain into correlations near 1, which mixed Hurst
    /// exponents almost never admit, hence the default `high = 0.5`.
    pub weight_low: f64,
    pub weight_high: f64,
    pub seed: u64,
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec {
            nodes: 100,
            neighbors_each_side: 2,
            rewire_prob: 0.2,
            weight_low: 0.1,
            weight_high: 0.5,
            seed: 0,
        }
    }
}

impl GraphSpec {
    fn check(&self) -> Result<()> {
        if self.nodes < 3 || 2 * self.neighbors_each_side >= self.nodes {
            return Err(MfbmError::InvalidParameter(format!(
                "a ring of {} nodes cannot have {} neighbors on each side",
                self.nodes, self.neighbors_each_side
            )));
        }
        if !(0.0..=1.0).contains(&self.rewire_prob) {
            return Err(MfbmError::InvalidParameter("rewire_prob must lie in [0, 1]".into()));
        }
        if !(0.0 <= self.weight_low && self.weight_low <= self.weight_high) {
            return Err(MfbmError::InvalidParameter("need 0 <= weight_low <= weight_high".into()));
        }
        Ok(())
    }
}

/// Undirected simple graph as a symmetric 0/1 adjacency matrix.
pub fn watts_strogatz(spec: &GraphSpec, rng: &mut ChaCha20Rng) -> Result<DMatrix<u8>> {
    spec.check()?;
    let p = spec.nodes;
    let mut adj = DMatrix::<u8>::zeros(p, p);
    let mut edges = Vec::with_capacity(p * spec.neighbors_each_side);
    for i in 0..p {
        for d in 1..=spec.neighbors_each_side {
            let j = (i + d) % p;
            adj[(i, j)] = 1;
            adj[(j, i)] = 1;
            edges.push((i, j));
        }
    }
    for (i, j) in edges {
        if !rng.random_bool(spec.rewire_prob) {
            continue;
        }
        // The new endpoint may coincide with the old one; self-loops and
        // duplicate edges are rejected and redrawn.
        let target = loop {
            let k = rng.random_range(0..p);
            if k != i && (k == j || adj[(i, k)] == 0) {
                break k;
            }
        };
        adj[(i, j)] = 0;
        adj[(j, i)] = 0;
        adj[(i, target)] = 1;
        adj[(target, i)] = 1;
    }
    Ok(adj)
}

pub fn edge_count(adj: &DMatrix<u8>) -> usize {
    adj.iter().filter(|&&x| x == 1).count() / 2
}

/// Mean shortest-path length over connected ordered pairs.
pub fn mean_geodesic(adj: &DMatrix<u8>) -> f64 {
    let p = adj.nrows();
    let mut total = 0usize;
    let mut pairs = 0usize;
    for s in 0..p {
        let mut dist = vec![usize::MAX; p];
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..p {
                if adj[(u, v)] == 1 && dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for (v, &d) in dist.iter().enumerate() {
            if v != s && d != usize::MAX {
                total += d;
                pairs += 1;
            }
        }
    }
    total as f64 / pairs as f64
}

/// Strictly lower-triangular weight matrix with a random weight on each edge.
pub fn weighted_lower(adj: &DMatrix<u8>, spec: &GraphSpec, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let p = adj.nrows();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..i {
            if adj[(i, j)] == 1 {
                let magnitude = if spec.weight_high > spec.weight_low {
                    rng.random_range(spec.weight_low..spec.weight_high)
                } else {
                    spec.weight_low
                };
                a[(i, j)] = if rng.random_bool(0.5) { magnitude } else { -magnitude };
            }
        }
    }
    a
}

/// `S = (I − A)⁻¹ (I − A)⁻ᵗ`, rescaled to unit diagonal.
pub fn correlation_from_graph(a_lower: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a_lower.nrows();
    if !a_lower.is_square() || (0..p).any(|i| (i..p).any(|j| a_lower[(i, j)] != 0.0)) {
        return Err(MfbmError::InvalidParameter(
            "A must be square and strictly lower triangular".into(),
        ));
    }
    let l = DMatrix::identity(p, p) - a_lower;
    // I − A is unit lower triangular, hence always invertible.
    let inv = l
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .expect("unit triangular matrix is invertible");
    let s = &inv * inv.transpose();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt()
        }
    }))
}

/// Partial correlations `−Ω_ij / √(Ω_ii Ω_jj)` with `Ω = ρ⁻¹`, unit diagonal.
pub fn partial_correlation(rho: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = rho.nrows();
    let omega = rho
        .clone()
        .cholesky()
        .ok_or_else(|| MfbmError::Numerical("correlation matrix is not positive definite".into()))?
        .inverse();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            -omega[(i, j)] / (omega[(i, i)] * omega[(j, j)]).sqrt()
        }
    }))
}

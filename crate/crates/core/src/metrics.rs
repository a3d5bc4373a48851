//! External (ARI) and internal (silhouette) clustering scores.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::pairwise_sq_dist;

/// Scores attached to a fit report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ari: Option<f64>,
    pub silhouette: Option<f64>,
    pub kernel_kmeans_score: Option<f64>,
}

/// Cross-tabulation of two labelings.
#[derive(Debug, Clone, PartialEq)]
pub struct Contingency {
    pub table: Array2<u64>,
    pub rows: Vec<u64>,
    pub cols: Vec<u64>,
    pub total: u64,
}

impl Contingency {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Dimension(format!(
                "labelings of length {} and {}",
                a.len(),
                b.len()
            )));
        }
        let ra = a.iter().max().map_or(0, |m| m + 1);
        let rb = b.iter().max().map_or(0, |m| m + 1);
        let mut table = Array2::zeros((ra, rb));
        for (&i, &j) in a.iter().zip(b) {
            table[[i, j]] += 1;
        }
        let rows = table.rows().into_iter().map(|r| r.sum()).collect();
        let cols = table.columns().into_iter().map(|c| c.sum()).collect();
        Ok(Self { table, rows, cols, total: a.len() as u64 })
    }
}

fn pairs(c: u64) -> f64 {
    (c as f64) * (c as f64 - 1.0) / 2.0
}

/// Adjusted Rand index. Both labelings single-cluster (or otherwise a zero
/// denominator with identical partitions) gives 1.0.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = Contingency::new(a, b)?;
    if c.total < 2 {
        return Err(Error::Parameter("ARI needs at least two samples".into()));
    }
    let index: f64 = c.table.iter().map(|&v| pairs(v)).sum();
    let sum_a: f64 = c.rows.iter().map(|&v| pairs(v)).sum();
    let sum_b: f64 = c.cols.iter().map(|&v| pairs(v)).sum();
    // (index - expected) / (max_index - expected), scaled through by the
    // total pair count so that everything before the division is integral.
    let total = pairs(c.total);
    let num = index * total - sum_a * sum_b;
    let denom = 0.5 * (sum_a + sum_b) * total - sum_a * sum_b;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok(num / denom)
}

/// Silhouette with Euclidean distance. Returns the mean and per-sample values.
pub fn silhouette(x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let mut d = pairwise_sq_dist(x, x)?;
    d.mapv_inplace(f64::sqrt);
    silhouette_precomputed(d.view(), labels)
}

/// Silhouette from a precomputed distance matrix (e.g. kernel-induced distances).
///
/// `s(i) = (outer - intra) / max(intra, outer)`; members of singleton clusters
/// score 0, as does any sample with `max(intra, outer) = 0`.
pub fn silhouette_precomputed(dist: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let n = labels.len();
    if dist.dim() != (n, n) {
        return Err(Error::Dimension(format!(
            "distance matrix {:?} for {n} labels",
            dist.dim()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Degenerate("silhouette needs at least two clusters".into()));
    }
    let per_sample: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                sums[labels[j]] += dist[[i, j]];
            }
            let intra = sums[own] / (sizes[own] - 1) as f64;
            let outer = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = intra.max(outer);
            if m > 0.0 {
                (outer - intra) / m
            } else {
                0.0
            }
        })
        .collect();
    let mean = per_sample.iter().sum::<f64>() / n as f64;
    Ok((mean, per_sample))
}

//! Classical baselines: Lloyd's K-means, the kernel K-means partition score
//! and normalized spectral clustering.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Rng;
use crate::error::{Error, Result};
use crate::kernels::{gram, KernelMatrix, KernelSpec};
use crate::linalg::symmetric_eigen;

/// Hard assignment of `n` samples to `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Parameter("partition must cover at least one sample".into()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Parameter(format!("label {l} outside 0..{k}")));
        }
        Ok(Self { labels, k })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub partition: Partition,
    /// `K x d` cluster means.
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub history: Vec<f64>,
    pub restart: usize,
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn nearest(x: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    x.outer_iter()
        .map(|row| {
            let mut best = (0, f64::INFINITY);
            for (c, mu) in centroids.outer_iter().enumerate() {
                let d = sq_dist(row, mu);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

/// D^2-weighted seeding.
fn kmeans_pp(x: ArrayView2<'_, f64>, k: usize, rng: &mut Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    centroids.row_mut(0).assign(&x.row(rng.index(n)));
    let mut d2: Vec<f64> = x.outer_iter().map(|r| sq_dist(r, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.index(n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, row) in x.outer_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(row, centroids.row(c)));
        }
    }
    centroids
}

fn lloyd(x: ArrayView2<'_, f64>, k: usize, max_iter: usize, tol: f64, rng: &mut Rng) -> (Vec<usize>, Array2<f64>, f64, Vec<f64>) {
    let d = x.ncols();
    let mut centroids = kmeans_pp(x, k, rng);
    let mut history = Vec::new();
    let mut labels;
    let mut iter = 0;
    loop {
        let (l, dists) = nearest(x, &centroids);
        labels = l;
        history.push(dists.iter().sum());
        iter += 1;

        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (row, &c) in x.outer_iter().zip(&labels) {
            sums.row_mut(c).scaled_add(1.0, &row);
            counts[c] += 1;
        }
        let mut next = centroids.clone();
        let mut taken = vec![false; x.nrows()];
        for c in 0..k {
            if counts[c] > 0 {
                next.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            } else {
                // re-seed an empty cluster at the sample farthest from its centroid
                let far = dists
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken[*i])
                    .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                    .0;
                taken[far] = true;
                next.row_mut(c).assign(&x.row(far));
            }
        }
        let shift: f64 = next
            .outer_iter()
            .zip(centroids.outer_iter())
            .map(|(a, b)| sq_dist(a, b))
            .sum();
        centroids = next;
        if shift <= tol || iter >= max_iter {
            break;
        }
    }
    let (final_labels, dists) = nearest(x, &centroids);
    let inertia = dists.iter().sum();
    if final_labels != labels {
        history.push(inertia);
    }
    (final_labels, centroids, inertia, history)
}

/// Lloyd's algorithm with k-means++ seeding; best of `n_init` restarts by inertia.
///
/// Restarts use independent child streams of `rng` and may run in parallel;
/// ties go to the lowest restart index.
pub fn kmeans(
    x: ArrayView2<'_, f64>,
    k: usize,
    n_init: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut Rng,
) -> Result<KMeansResult> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("K = {k} must lie in 1..={n}")));
    }
    if n_init == 0 || max_iter == 0 {
        return Err(Error::Parameter("n_init and max_iter must be >= 1".into()));
    }
    let parent = rng.clone();
    let runs: Vec<_> = (0..n_init)
        .into_par_iter()
        .map(|r| lloyd(x, k, max_iter, tol, &mut parent.fork(r as u64)))
        .collect();
    // advance the caller's stream so consecutive calls differ
    rng.uniform();
    let (restart, (labels, centroids, inertia, history)) = runs
        .into_iter()
        .enumerate()
        .reduce(|best, cur| if cur.1 .2 < best.1 .2 { cur } else { best })
        .expect("n_init >= 1");
    Ok(KMeansResult {
        partition: Partition::new(labels, k)?,
        centroids,
        inertia,
        history,
        restart,
    })
}

/// Assigns each row of `x` to its nearest centroid.
pub fn kmeans_predict(x: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> Result<Vec<usize>> {
    if x.ncols() != centroids.ncols() {
        return Err(Error::Dimension(format!(
            "centroids have {} features, input {}",
            centroids.ncols(),
            x.ncols()
        )));
    }
    Ok(nearest(x, centroids).0)
}

/// Kernel K-means objective as a function of the partition:
/// `-sum_k (sum_{i,j in C_k} K_ij) / |C_k|`.
pub fn kernel_kmeans_score(part: &Partition, k: &KernelMatrix) -> Result<f64> {
    let n = part.labels.len();
    if k.values.dim() != (n, n) {
        return Err(Error::Dimension(format!(
            "Gram matrix {:?} for {n} samples",
            k.values.dim()
        )));
    }
    let sizes = part.sizes();
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Degenerate(format!("cluster {c} is empty")));
    }
    let mut within = vec![0.0; part.k];
    for i in 0..n {
        let li = part.labels[i];
        for j in 0..n {
            if part.labels[j] == li {
                within[li] += k.values[[i, j]];
            }
        }
    }
    Ok(-within
        .iter()
        .zip(&sizes)
        .map(|(w, &s)| w / s as f64)
        .sum::<f64>())
}

/// rbf affinity bandwidth used by spectral clustering when none is given
/// (the scikit-learn default), independent of the data scale.
pub const SPECTRAL_DEFAULT_GAMMA: f64 = 1.0;

/// Spectrum of the symmetric normalized Laplacian and the row-normalized
/// embedding spanned by its `k` smallest eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub eigenvalues: Array1<f64>,
    pub embedding: Array2<f64>,
}

pub fn spectral_embedding(x: ArrayView2<'_, f64>, k: usize, affinity: KernelSpec) -> Result<SpectralEmbedding> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("K = {k} must lie in 1..={n}")));
    }
    let mut a = gram(x, x, affinity)?.values;
    a.diag_mut().fill(0.0);
    let deg = a.sum_axis(Axis(1));
    if let Some(i) = deg.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Degenerate(format!("sample {i} is an isolated vertex (zero degree)")));
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut lap = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            lap[[i, j]] = delta - inv_sqrt[i] * a[[i, j]] * inv_sqrt[j];
        }
    }
    let (eigenvalues, vectors) = symmetric_eigen(&lap)?;
    let mut embedding = vectors.slice(ndarray::s![.., ..k]).to_owned();
    for mut row in embedding.outer_iter_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(SpectralEmbedding { eigenvalues, embedding })
}

/// Normalized spectral clustering: embed, then K-means (10 restarts) on the rows.
pub fn spectral(x: ArrayView2<'_, f64>, k: usize, affinity: KernelSpec, rng: &mut Rng) -> Result<Partition> {
    let emb = spectral_embedding(x, k, affinity)?;
    Ok(kmeans(emb.embedding.view(), k, 10, 300, 1e-10, rng)?.partition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_gaussian_blobs, Rng};
    use crate::metrics::ari;
    use ndarray::array;
    use proptest::prelude::*;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = Rng::new(seed);
        Array2::from_shape_fn((n, d), |_| rng.normal())
    }

    /// Centroid-form inertia of a partition.
    fn centroid_inertia(x: &Array2<f64>, labels: &[usize], k: usize) -> f64 {
        let mut total = 0.0;
        for c in 0..k {
            let rows: Vec<_> = x.outer_iter().zip(labels).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
            let mut mean = Array1::<f64>::zeros(x.ncols());
            for r in &rows {
                mean += r;
            }
            mean /= rows.len() as f64;
            total += rows.iter().map(|r| sq_dist(r.view(), mean.view())).sum::<f64>();
        }
        total
    }

    #[test]
    fn kmeans_one_dimensional_case() {
        let x = array![[0.0], [1.0], [10.0], [11.0]];
        let r = kmeans(x.view(), 2, 5, 100, 1e-12, &mut Rng::new(0)).unwrap();
        let mut c: Vec<f64> = r.centroids.column(0).to_vec();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.5, 10.5]);
        assert!((r.inertia - 1.0).abs() < 1e-12);
        // both contiguous splits enumerated: {0},{1,10,11} and {0,1,10},{11}
        let alt = [centroid_inertia(&x, &[0, 1, 1, 1], 2), centroid_inertia(&x, &[0, 0, 0, 1], 2)];
        assert!(alt.iter().all(|&v| v > r.inertia));
    }

    #[test]
    fn kmeans_k_equals_n() {
        let x = random(7, 2, 1);
        let r = kmeans(x.view(), 7, 3, 50, 0.0, &mut Rng::new(1)).unwrap();
        assert!(r.inertia.abs() < 1e-12);
    }

    #[test]
    fn kmeans_errors() {
        let x = random(3, 2, 2);
        assert!(kmeans(x.view(), 4, 1, 10, 0.0, &mut Rng::new(0)).is_err());
        assert!(kmeans(x.view(), 0, 1, 10, 0.0, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn kmeans_is_deterministic() {
        let x = random(50, 2, 3);
        let a = kmeans(x.view(), 4, 5, 100, 1e-8, &mut Rng::new(9)).unwrap();
        let b = kmeans(x.view(), 4, 5, 100, 1e-8, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kmeans_recovers_blobs() {
        let means = array![[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
        let x = make_gaussian_blobs(means.view(), &[0.5; 3], &[30; 3], &mut Rng::new(4)).unwrap();
        let r = kmeans(x.values(), 3, 10, 100, 1e-8, &mut Rng::new(5)).unwrap();
        assert_eq!(ari(&r.partition.labels, x.labels().unwrap()).unwrap(), 1.0);
        let pred = kmeans_predict(x.values(), &r.centroids).unwrap();
        assert_eq!(pred, r.partition.labels);
    }

    #[test]
    fn kernel_score_single_cluster_centered() {
        let mut x = random(10, 2, 6);
        let mean = x.mean_axis(Axis(0)).unwrap();
        x -= &mean;
        let g = gram(x.view(), x.view(), KernelSpec::Linear).unwrap();
        let s = kernel_kmeans_score(&Partition::new(vec![0; 10], 1).unwrap(), &g).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn kernel_score_duplicated_rows_doubles() {
        let x = random(6, 2, 7);
        let labels = vec![0, 1, 0, 2, 1, 2];
        let g = gram(x.view(), x.view(), KernelSpec::Rbf { gamma: 0.3 }).unwrap();
        let s = kernel_kmeans_score(&Partition::new(labels.clone(), 3).unwrap(), &g).unwrap();
        let xx = ndarray::concatenate![Axis(0), x, x];
        let gg = gram(xx.view(), xx.view(), KernelSpec::Rbf { gamma: 0.3 }).unwrap();
        let ll: Vec<usize> = labels.iter().chain(&labels).copied().collect();
        let ss = kernel_kmeans_score(&Partition::new(ll, 3).unwrap(), &gg).unwrap();
        assert!((ss - 2.0 * s).abs() < 1e-12);
    }

    #[test]
    fn kernel_score_empty_cluster_is_named() {
        let x = random(4, 2, 8);
        let g = gram(x.view(), x.view(), KernelSpec::Linear).unwrap();
        match kernel_kmeans_score(&Partition::new(vec![0, 0, 2, 2], 3).unwrap(), &g) {
            Err(Error::Degenerate(msg)) => assert!(msg.contains("cluster 1")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spectral_separates_far_blobs() {
        let means = array![[-5.0, 0.0], [5.0, 0.0]];
        let x = make_gaussian_blobs(means.view(), &[0.3; 2], &[25; 2], &mut Rng::new(10)).unwrap();
        let p = spectral(x.values(), 2, KernelSpec::Rbf { gamma: 0.5 }, &mut Rng::new(0)).unwrap();
        assert_eq!(ari(&p.labels, x.labels().unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn spectral_embedding_invariants() {
        let x = random(40, 2, 11);
        let e = spectral_embedding(x.view(), 3, KernelSpec::Rbf { gamma: 1.0 }).unwrap();
        assert!(e.eigenvalues.iter().all(|&v| (-1e-8..=2.0 + 1e-8).contains(&v)));
        for row in e.embedding.outer_iter() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn isolated_vertex_is_reported() {
        let x = array![[0.0, 0.0], [0.1, 0.0], [1e3, 1e3]];
        assert!(matches!(
            spectral_embedding(x.view(), 2, KernelSpec::Rbf { gamma: 1.0 }),
            Err(Error::Degenerate(_))
        ));
    }

    proptest! {
        #[test]
        fn kernel_score_matches_centroid_inertia(seed in 0u64..5000, n in 3usize..20, k in 1usize..4) {
            let x = random(n, 2, seed);
            let mut rng = Rng::new(seed);
            let mut labels: Vec<usize> = (0..n).map(|_| rng.index(k)).collect();
            for c in 0..k.min(n) {
                labels[c] = c;
            }
            let g = gram(x.view(), x.view(), KernelSpec::Linear).unwrap();
            let score = kernel_kmeans_score(&Partition::new(labels.clone(), k).unwrap(), &g).unwrap();
            let trace: f64 = g.values.diag().sum();
            prop_assert!((score + trace - centroid_inertia(&x, &labels, k)).abs() < 1e-9);
        }

        #[test]
        fn lloyd_inertia_never_increases(seed in 0u64..500) {
            let x = random(60, 2, seed);
            let r = kmeans(x.view(), 4, 1, 100, 0.0, &mut Rng::new(seed)).unwrap();
            for w in r.history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }
}

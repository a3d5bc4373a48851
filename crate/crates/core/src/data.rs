//! Synthetic datasets, standardization and CSV I/O.

use std::f64::consts::PI;
use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Seeded pseudo-random stream.
///
/// Backed by ChaCha8, whose output is specified independently of platform
/// and word size, so a seed reproduces the same stream everywhere.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream, keyed by `stream`. The parent is not advanced.
    pub fn fork(&self, stream: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        Rng {
            seed: self.seed,
            inner,
        }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

/// Observations (rows = samples) with optional ground-truth labels.
///
/// Labels are carried for evaluation only; no fitting routine reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    labels: Option<Vec<usize>>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let (n, d) = values.dim();
        if n == 0 || d == 0 {
            return Err(Error::Degenerate(format!(
                "data matrix must be non-empty, got {n}x{d}"
            )));
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Degenerate(format!(
                "non-finite entry at row {}, column {}",
                idx / d,
                idx % d
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Dimension(format!(
                    "{} labels for {} rows",
                    l.len(),
                    n
                )));
            }
        }
        Ok(Self { values, labels })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_parts(self) -> (Array2<f64>, Option<Vec<usize>>) {
        (self.values, self.labels)
    }

    /// Writes `f0,...,f{d-1}[,label]` CSV with shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.n_features()).map(|j| format!("f{j}")).collect();
        if self.labels.is_some() {
            header.push("label".to_string());
        }
        w.write_record(&header).map_err(csv_err)?;
        for (i, row) in self.values.outer_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            if let Some(l) = &self.labels {
                rec.push(l[i].to_string());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers().map_err(csv_err)?.clone();
        let has_label = header.iter().next_back() == Some("label");
        let d = header.len() - usize::from(has_label);
        for (j, name) in header.iter().take(d).enumerate() {
            if name != format!("f{j}") {
                return Err(Error::Format(format!(
                    "expected column f{j}, found `{name}`"
                )));
            }
        }
        let mut flat = Vec::new();
        let mut labels = Vec::new();
        let mut n = 0;
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != header.len() {
                return Err(Error::Format(format!("row {n} has {} fields", rec.len())));
            }
            for field in rec.iter().take(d) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("row {n}: bad number `{field}`")))?;
                flat.push(v);
            }
            if has_label {
                let field = rec.get(d).unwrap_or_default();
                let l: usize = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("row {n}: bad label `{field}`")))?;
                labels.push(l);
            }
            n += 1;
        }
        let values = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| Error::Format(e.to_string()))?;
        DataMatrix::new(values, has_label.then_some(labels))
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Two concentric rings: `ceil(n/2)` points at radius 1 (label 0) and
/// `floor(n/2)` at radius `factor` (label 1), equally spaced angles, then
/// i.i.d. Gaussian noise of std `noise` on every coordinate.
pub fn make_circles(n: usize, noise: f64, factor: f64, rng: &mut Rng) -> Result<DataMatrix> {
    if n < 2 {
        return Err(Error::Parameter(format!("make_circles needs n >= 2, got {n}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Parameter(format!("noise must be >= 0, got {noise}")));
    }
    if !(factor > 0.0 && factor < 1.0) {
        return Err(Error::Parameter(format!(
            "factor must lie in (0, 1), got {factor}"
        )));
    }
    let n_outer = n.div_ceil(2);
    let n_inner = n - n_outer;
    let mut values = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    let rings = [(n_outer, 1.0, 0usize), (n_inner, factor, 1usize)];
    let mut row = 0;
    for (count, radius, label) in rings {
        for i in 0..count {
            let angle = 2.0 * PI * i as f64 / count as f64;
            values[[row, 0]] = radius * angle.cos();
            values[[row, 1]] = radius * angle.sin();
            labels.push(label);
            row += 1;
        }
    }
    if noise > 0.0 {
        for v in values.iter_mut() {
            *v += noise * rng.normal();
        }
    }
    DataMatrix::new(values, Some(labels))
}

/// Isotropic Gaussian components; row labels are the component index.
pub fn make_gaussian_blobs(
    means: ArrayView2<'_, f64>,
    stds: &[f64],
    counts: &[usize],
    rng: &mut Rng,
) -> Result<DataMatrix> {
    let (k, d) = means.dim();
    if k == 0 || d == 0 {
        return Err(Error::Parameter("blobs need at least one component".into()));
    }
    if stds.len() != k || counts.len() != k {
        return Err(Error::Dimension(format!(
            "{k} means, {} stds, {} counts",
            stds.len(),
            counts.len()
        )));
    }
    if let Some(s) = stds.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::Parameter(format!("blob std must be positive, got {s}")));
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::Parameter("blobs need at least one sample".into()));
    }
    let mut values = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for c in 0..k {
        for _ in 0..counts[c] {
            for j in 0..d {
                values[[row, j]] = means[[c, j]] + stds[c] * rng.normal();
            }
            labels.push(c);
            row += 1;
        }
    }
    DataMatrix::new(values, Some(labels))
}

/// Per-column z-score with the population (divide-by-n) standard deviation.
pub fn standardize(x: &DataMatrix) -> Result<DataMatrix> {
    let values = x.values();
    let n = values.nrows() as f64;
    let mean: Array1<f64> = values.sum_axis(Axis(0)) / n;
    let mut out = values.to_owned();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        col -= mean[j];
        let var = col.iter().map(|v| v * v).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) {
            return Err(Error::Degenerate(format!(
                "column f{j} has zero variance"
            )));
        }
        col /= std;
    }
    DataMatrix::new(out, x.labels.clone())
}

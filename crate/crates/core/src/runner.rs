//! End-to-end runs: model dispatch, evaluation, decision-boundary grids and
//! model-selection sweeps. The command-line front end is a thin layer on top.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    kernel_kmeans_score, kmeans, kmeans_predict, spectral, Partition, SPECTRAL_DEFAULT_GAMMA,
};
use crate::contrastive::{
    train_contrastive, Augmentation, Critic, DEFAULT_CONTRASTIVE_EPOCHS,
    DEFAULT_CONTRASTIVE_LEARNING_RATE,
};
use crate::data::{DataMatrix, Rng};
use crate::error::{Error, Result};
use crate::kernels::{gram, KernelChoice, KernelSpec};
use crate::metrics::{ari, silhouette, Metrics};
use crate::models::{self, argmax_rows, Model, ModelDims, ModelDocument, ModelKind, DEFAULT_HIDDEN};
use crate::objectives::{proportions, ObjectiveId};
use crate::optim::{fit, FitReport, TrainConfig, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE};

/// l2 weight used by `linear-rim` and `kernel-rim` unless overridden.
pub const DEFAULT_RIM_REG: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    Kmeans,
    Spectral,
    Linear,
    LinearRim,
    Kernel,
    KernelRim,
    Mlp,
    Nonparametric,
}

impl ModelId {
    pub const ALL: [ModelId; 8] = [
        ModelId::Kmeans,
        ModelId::Spectral,
        ModelId::Linear,
        ModelId::LinearRim,
        ModelId::Kernel,
        ModelId::KernelRim,
        ModelId::Mlp,
        ModelId::Nonparametric,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Kmeans => "kmeans",
            ModelId::Spectral => "spectral",
            ModelId::Linear => "linear",
            ModelId::LinearRim => "linear-rim",
            ModelId::Kernel => "kernel",
            ModelId::KernelRim => "kernel-rim",
            ModelId::Mlp => "mlp",
            ModelId::Nonparametric => "nonparametric",
        }
    }

    fn kind(self) -> Option<ModelKind> {
        match self {
            ModelId::Kmeans | ModelId::Spectral => None,
            ModelId::Linear | ModelId::LinearRim => Some(ModelKind::Linear),
            ModelId::Kernel | ModelId::KernelRim => Some(ModelKind::Kernel),
            ModelId::Mlp => Some(ModelKind::Mlp),
            ModelId::Nonparametric => Some(ModelKind::Nonparametric),
        }
    }

    fn is_rim(self) -> bool {
        matches!(self, ModelId::LinearRim | ModelId::KernelRim)
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ModelId::ALL.iter().map(|m| m.as_str()).collect();
                Error::Parameter(format!("unknown model `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Every knob of a `fit` run. Serialized verbatim into the report, so a run
/// can be repeated from its echo alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelId,
    pub n_clusters: usize,
    pub objective: ObjectiveId,
    /// l2 weight of `rim`.
    pub reg: f64,
    /// Kernel of kernel models, of `mmd-gemini` and the spectral affinity.
    /// An rbf kernel without bandwidth gets `default_gamma` of the data, or
    /// `SPECTRAL_DEFAULT_GAMMA` as a spectral affinity.
    pub kernel: Option<KernelChoice>,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub init_scale: Option<f64>,
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl RunConfig {
    /// Defaults for `model`: `*-rim` ids train `rim` with [`DEFAULT_RIM_REG`],
    /// the others `mi`; kernel models and spectral clustering get an rbf
    /// kernel with the default bandwidth.
    pub fn new(model: ModelId) -> Self {
        let kernel = match model {
            ModelId::Kernel | ModelId::KernelRim | ModelId::Spectral => Some(KernelChoice::Rbf { gamma: None }),
            _ => None,
        };
        Self {
            model,
            n_clusters: 2,
            objective: if model.is_rim() { ObjectiveId::Rim } else { ObjectiveId::Mi },
            reg: if model.is_rim() { DEFAULT_RIM_REG } else { 0.0 },
            kernel,
            hidden: DEFAULT_HIDDEN,
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
            init_scale: None,
            n_init: 10,
            max_iter: 300,
            tol: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(Error::Parameter("number of clusters must be >= 1".into()));
        }
        if self.model.is_rim() && self.objective != ObjectiveId::Rim {
            return Err(Error::Incompatible(format!(
                "model {} trains the rim objective, not {}",
                self.model,
                self.objective.as_str()
            )));
        }
        if self.model == ModelId::Kernel || self.model == ModelId::KernelRim || self.model == ModelId::Spectral {
            if self.kernel.is_none() {
                return Err(Error::Incompatible(format!("model {} needs a kernel", self.model)));
            }
        }
        if self.model.kind().is_some() {
            self.train_config().validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed,
            objective: self.objective,
            lambda: if self.objective == ObjectiveId::Rim { self.reg } else { 0.0 },
            kernel: self.kernel,
            ..TrainConfig::default()
        }
    }
}

/// A finished `fit` run: the report and a document of what was learned.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: FitReport,
    /// Spectral runs store only their kind and affinity.
    pub model: ModelDocument,
}

/// Document kinds that cannot be evaluated away from their training data.
const NON_GENERALISING: [&str; 2] = ["nonparametric", "spectral"];

/// Fits the configured model on `data` and evaluates the result. Labels in
/// `data` are used for the ARI only.
pub fn run_fit(cfg: &RunConfig, data: &DataMatrix) -> Result<RunOutcome> {
    cfg.validate()?;
    let x = data.values();
    let mut rng = Rng::new(cfg.seed);
    let (mut report, model) = match cfg.model {
        ModelId::Kmeans => {
            let started = std::time::Instant::now();
            let res = kmeans(x, cfg.n_clusters, cfg.n_init, cfg.max_iter, cfg.tol, &mut rng)?;
            let (k, d) = res.centroids.dim();
            let doc = ModelDocument {
                kind: "kmeans".into(),
                dims: vec![k, d],
                params: res.centroids.iter().copied().collect(),
                kernel: None,
                reference: None,
                fingerprint: None,
            };
            let report = FitReport {
                config: None,
                history: res.history,
                final_objective: Some(res.inertia),
                final_model: Some(doc.clone()),
                labels: res.partition.labels,
                metrics: None,
                elapsed: started.elapsed().as_secs_f64(),
            };
            (report, doc)
        }
        ModelId::Spectral => {
            let started = std::time::Instant::now();
            let affinity = match cfg.kernel {
                Some(KernelChoice::Rbf { gamma: None }) => KernelSpec::Rbf { gamma: SPECTRAL_DEFAULT_GAMMA },
                _ => resolve_kernel(cfg, x)?,
            };
            let part = spectral(x, cfg.n_clusters, affinity, &mut rng)?;
            let doc = ModelDocument {
                kind: "spectral".into(),
                dims: vec![x.nrows(), cfg.n_clusters],
                params: Vec::new(),
                kernel: Some(affinity),
                reference: None,
                fingerprint: None,
            };
            let report = FitReport {
                config: None,
                history: Vec::new(),
                final_objective: None,
                final_model: Some(doc.clone()),
                labels: part.labels,
                metrics: None,
                elapsed: started.elapsed().as_secs_f64(),
            };
            (report, doc)
        }
        id => {
            let kind = id.kind().expect("probabilistic model");
            let dims = ModelDims {
                n_clusters: cfg.n_clusters,
                hidden: cfg.hidden,
                kernel: match kind {
                    ModelKind::Kernel => Some(resolve_kernel(cfg, x)?),
                    _ => None,
                },
            };
            let model = models::init(kind, x, dims, cfg.init_scale, &mut rng)?;
            let (model, report) = fit(model, x, &cfg.train_config())?;
            (report, model.to_document())
        }
    };
    report.metrics = Some(evaluate(x, data.labels(), &report.labels, cfg.kernel)?);
    report.config = Some(serde_json::to_value(cfg)?);
    log::info!("{} fit in {:.3} s", cfg.model, report.elapsed);
    Ok(RunOutcome { report, model })
}

fn resolve_kernel(cfg: &RunConfig, x: ArrayView2<'_, f64>) -> Result<KernelSpec> {
    cfg.kernel
        .ok_or_else(|| Error::Incompatible(format!("model {} needs a kernel", cfg.model)))?
        .resolve(x)
}

/// ARI (when ground truth is known), Euclidean silhouette and the kernel
/// K-means score (under `kernel`, linear when absent). Scores that need at
/// least two non-empty clusters are left out otherwise.
pub fn evaluate(
    x: ArrayView2<'_, f64>,
    truth: Option<&[usize]>,
    labels: &[usize],
    kernel: Option<KernelChoice>,
) -> Result<Metrics> {
    let ari = match truth {
        Some(t) if t.len() >= 2 => Some(ari(t, labels)?),
        _ => None,
    };
    let (compact, used) = compact_labels(labels);
    let silhouette = if used >= 2 {
        Some(silhouette(x, &compact)?.0)
    } else {
        None
    };
    let spec = kernel.unwrap_or(KernelChoice::Linear).resolve(x)?;
    let score = kernel_kmeans_score(&Partition::new(compact, used)?, &gram(x, x, spec)?)?;
    Ok(Metrics { ari, silhouette, kernel_kmeans_score: Some(score) })
}

/// Renumbers labels to `0..used` in order of first appearance of each value.
fn compact_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::BTreeMap::new();
    for &l in labels {
        map.entry(l).or_insert(());
    }
    let index: std::collections::BTreeMap<usize, usize> =
        map.keys().enumerate().map(|(i, &l)| (l, i)).collect();
    (labels.iter().map(|l| index[l]).collect(), index.len())
}

/// Settings of a contrastive run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub augmentation: Augmentation,
    pub n_clusters: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub init_scale: Option<f64>,
}

impl ContrastiveConfig {
    pub fn new(augmentation: Augmentation) -> Self {
        Self {
            augmentation,
            n_clusters: 2,
            hidden: DEFAULT_HIDDEN,
            epochs: DEFAULT_CONTRASTIVE_EPOCHS,
            learning_rate: DEFAULT_CONTRASTIVE_LEARNING_RATE,
            seed: 0,
            init_scale: None,
        }
    }
}

/// Trains a critic on `data` and evaluates the argmax clustering.
pub fn run_contrastive(cfg: &ContrastiveConfig, data: &DataMatrix) -> Result<RunOutcome> {
    let x = data.values();
    // critic init and augmentation draws use separate streams
    let critic = Critic::init(
        x.ncols(),
        cfg.hidden,
        cfg.n_clusters,
        cfg.init_scale,
        &mut Rng::new(cfg.seed).fork(0),
    )?;
    let train = TrainConfig {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    let (critic, mut report) = train_contrastive(critic, x, &cfg.augmentation, &train)?;
    report.metrics = Some(evaluate(x, data.labels(), &report.labels, None)?);
    report.config = Some(serde_json::to_value(cfg)?);
    log::info!("contrastive fit in {:.3} s", report.elapsed);
    Ok(RunOutcome { report, model: critic.to_document() })
}

/// Rectangle and resolution of a decision-boundary grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x0: (f64, f64),
    pub x1: (f64, f64),
    pub resolution: usize,
}

impl GridSpec {
    pub fn square(lo: f64, hi: f64, resolution: usize) -> Self {
        Self { x0: (lo, hi), x1: (lo, hi), resolution }
    }

    /// `resolution^2` points, `x0` varying fastest.
    pub fn points(&self) -> Result<Array2<f64>> {
        let r = self.resolution;
        if r < 2 {
            return Err(Error::Parameter(format!("grid resolution must be >= 2, got {r}")));
        }
        for (lo, hi) in [self.x0, self.x1] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Parameter(format!("grid bounds [{lo}, {hi}] are invalid")));
            }
        }
        let at = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * i as f64 / (r - 1) as f64;
        Ok(Array2::from_shape_fn((r * r, 2), |(p, c)| {
            if c == 0 {
                at(self.x0, p % r)
            } else {
                at(self.x1, p / r)
            }
        }))
    }
}

/// A grid of `x0, x1, value` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub value_name: &'static str,
    pub points: Array2<f64>,
    pub values: Vec<f64>,
}

impl BoundaryGrid {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x0", "x1", self.value_name]).map_err(csv_err)?;
        for (p, v) in self.points.outer_iter().zip(&self.values) {
            w.write_record([format!("{:?}", p[0]), format!("{:?}", p[1]), format!("{v:?}")])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Evaluates a saved model over a 2-d grid.
///
/// Probabilistic models give `p_cluster2`, the probability of the second
/// cluster; k-means gives it as a hard 0/1 assignment. Contrastive critics
/// give `argmax_value`, the index of their largest raw output. Nonparametric
/// models and spectral clusterings are refused: they only label their
/// training samples.
pub fn boundary_grid(doc: &ModelDocument, grid: &GridSpec) -> Result<BoundaryGrid> {
    if NON_GENERALISING.contains(&doc.kind.as_str()) {
        return Err(Error::Incompatible(format!(
            "model does not generalise: a {} model only labels its training samples",
            doc.kind
        )));
    }
    let points = grid.points()?;
    match doc.kind.as_str() {
        "critic" => {
            let critic = Critic::from_document(doc)?;
            let values = argmax_rows(critic.outputs(points.view())?.view())
                .into_iter()
                .map(|l| l as f64)
                .collect();
            Ok(BoundaryGrid { value_name: "argmax_value", points, values })
        }
        "kmeans" => {
            let [k, d] = doc.dims[..] else {
                return Err(Error::Format("kmeans document needs dims [K, d]".into()));
            };
            let centroids = Array2::from_shape_vec((k, d), doc.params.clone())
                .map_err(|e| Error::Format(e.to_string()))?;
            let values = kmeans_predict(points.view(), &centroids)?
                .into_iter()
                .map(|l| f64::from(u8::from(l == 1)))
                .collect();
            Ok(BoundaryGrid { value_name: "p_cluster2", points, values })
        }
        _ => {
            let model = Model::from_document(doc)?;
            let p = model.forward(points.view())?.into_inner();
            let values = if p.ncols() >= 2 {
                p.column(1).to_vec()
            } else {
                vec![0.0; p.nrows()]
            };
            Ok(BoundaryGrid { value_name: "p_cluster2", points, values })
        }
    }
}

/// One configuration of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub model: ModelId,
    pub k: usize,
    pub seed: u64,
    pub ari: Option<f64>,
    pub silhouette: Option<f64>,
    /// Final training objective, or the inertia for k-means.
    pub objective: Option<f64>,
    /// Clusters holding more than a tenth of a uniform share of the mass.
    pub used_clusters: usize,
}

/// Fits `base` for every `K` in `ks` and every seed; rows sorted by `(K, seed)`.
pub fn sweep(base: &RunConfig, ks: &[usize], seeds: &[u64], data: &DataMatrix) -> Result<Vec<SweepRow>> {
    if ks.is_empty() || seeds.is_empty() {
        return Err(Error::Parameter("sweep grid is empty".into()));
    }
    let grid: Vec<(usize, u64)> = ks
        .iter()
        .flat_map(|&k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let mut rows = grid
        .into_par_iter()
        .map(|(k, seed)| {
            let cfg = RunConfig { n_clusters: k, seed, ..base.clone() };
            let out = run_fit(&cfg, data)?;
            let used = used_clusters(&out, data.values(), k)?;
            let metrics = out.report.metrics.unwrap_or_default();
            Ok(SweepRow {
                model: cfg.model,
                k,
                seed,
                ari: metrics.ari,
                silhouette: metrics.silhouette,
                objective: out.report.final_objective,
                used_clusters: used,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (r.k, r.seed));
    Ok(rows)
}

fn used_clusters(out: &RunOutcome, x: ArrayView2<'_, f64>, k: usize) -> Result<usize> {
    let threshold = 1.0 / (10.0 * k as f64);
    let p = match out.model.kind.as_str() {
        "kmeans" | "spectral" => {
            let mut p = Array2::zeros((out.report.labels.len(), k));
            for (i, &l) in out.report.labels.iter().enumerate() {
                p[[i, l]] = 1.0;
            }
            p
        }
        _ => Model::from_document(&out.model)?.forward(x)?.into_inner(),
    };
    Ok(proportions(p.view()).iter().filter(|&&v| v > threshold).count())
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "k", "seed", "ari", "silhouette", "objective", "used_clusters"])
        .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:?}"));
    for r in rows {
        w.write_record([
            r.model.to_string(),
            r.k.to_string(),
            r.seed.to_string(),
            opt(r.ari),
            opt(r.silhouette),
            opt(r.objective),
            r.used_clusters.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

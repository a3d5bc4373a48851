//! Discriminative clustering models `p(y|x)`.
//!
//! Every model keeps its parameters in one flat vector so optimizers and
//! gradient checkers can treat them uniformly. Layouts (row-major blocks,
//! in this order):
//!
//! | model          | blocks                                   |
//! |----------------|------------------------------------------|
//! | linear         | `W: d x K`, `b: K`                       |
//! | kernel         | `A: n_ref x K`, `b: K`                   |
//! | mlp            | `W1: d x H`, `b1: H`, `W2: H x K`, `b2: K` |
//! | nonparametric  | `L: n x K`                               |

use std::ops::Range;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Rng;
use crate::error::{Error, Result};
use crate::kernels::{gram, KernelSpec};

/// Default hidden width of the one-hidden-layer network.
pub const DEFAULT_HIDDEN: usize = 20;

/// Row-stochastic `n x K` matrix of cluster memberships.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities(Array2<f64>);

impl Responsibilities {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        for (i, row) in values.outer_iter().enumerate() {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Numeric(format!("row {i} has entries outside [0, 1]")));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Numeric(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self(values))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn n_clusters(&self) -> usize {
        self.0.ncols()
    }

    /// Argmax per row, ties to the lowest index.
    pub fn labels(&self) -> Vec<usize> {
        argmax_rows(self.0.view())
    }
}

pub(crate) fn argmax_rows(m: ArrayView2<'_, f64>) -> Vec<usize> {
    m.outer_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(z: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut p = z.to_owned();
    for mut row in p.outer_iter_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// Pulls `dJ/dP` back through the row softmax to `dJ/dZ`.
pub fn softmax_backward(p: ArrayView2<'_, f64>, dp: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut dz = Array2::zeros(p.raw_dim());
    for ((mut out, prow), drow) in dz.outer_iter_mut().zip(p.outer_iter()).zip(dp.outer_iter()) {
        let inner = prow.dot(&drow);
        for k in 0..prow.len() {
            out[k] = prow[k] * (drow[k] - inner);
        }
    }
    dz
}

fn fingerprint(x: ArrayView2<'_, f64>) -> String {
    let mut h = Sha256::new();
    h.update((x.nrows() as u64).to_le_bytes());
    h.update((x.ncols() as u64).to_le_bytes());
    for v in x.iter() {
        h.update(v.to_bits().to_le_bytes());
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn block<'a>(params: &'a [f64], range: Range<usize>, rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &params[range]).expect("layout")
}

fn check_cols(x: ArrayView2<'_, f64>, d: usize) -> Result<()> {
    if x.ncols() != d {
        return Err(Error::Dimension(format!(
            "model expects {d} features, input has {}",
            x.ncols()
        )));
    }
    Ok(())
}

/// `softmax(W^T x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    d: usize,
    k: usize,
    params: Vec<f64>,
}

impl LinearModel {
    pub fn new(w: Array2<f64>, b: Vec<f64>) -> Result<Self> {
        let (d, k) = w.dim();
        if b.len() != k {
            return Err(Error::Dimension(format!("bias of length {} for K={k}", b.len())));
        }
        let mut params: Vec<f64> = w.iter().copied().collect();
        params.extend(b);
        Self::from_params(d, k, params)
    }

    fn from_params(d: usize, k: usize, params: Vec<f64>) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(Error::Parameter("linear model needs d >= 1 and K >= 1".into()));
        }
        if params.len() != d * k + k {
            return Err(Error::Dimension("linear parameter vector length".into()));
        }
        Ok(Self { d, k, params })
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        block(&self.params, 0..self.d * self.k, self.d, self.k)
    }

    pub fn bias(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[self.d * self.k..])
    }
}

/// `softmax(A^T kappa(x) + b)` with `kappa(x)_i = k(x_i, x)` over a fixed reference set.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    reference: Array2<f64>,
    spec: KernelSpec,
    k: usize,
    params: Vec<f64>,
}

impl KernelModel {
    pub fn reference(&self) -> ArrayView2<'_, f64> {
        self.reference.view()
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        let m = self.reference.nrows();
        block(&self.params, 0..m * self.k, m, self.k)
    }

    fn from_params(reference: Array2<f64>, spec: KernelSpec, k: usize, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let m = reference.nrows();
        if m == 0 || k == 0 {
            return Err(Error::Parameter("kernel model needs a reference set and K >= 1".into()));
        }
        if params.len() != m * k + k {
            return Err(Error::Dimension("kernel parameter vector length".into()));
        }
        Ok(Self { reference, spec, k, params })
    }
}

/// `softmax(W2^T relu(W1^T x + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    d: usize,
    h: usize,
    k: usize,
    params: Vec<f64>,
}

impl MlpModel {
    pub fn new(w1: Array2<f64>, b1: Vec<f64>, w2: Array2<f64>, b2: Vec<f64>) -> Result<Self> {
        let (d, h) = w1.dim();
        let (h2, k) = w2.dim();
        if h2 != h || b1.len() != h || b2.len() != k {
            return Err(Error::Dimension("inconsistent MLP block shapes".into()));
        }
        let mut params: Vec<f64> = w1.iter().copied().collect();
        params.extend(b1);
        params.extend(w2.iter().copied());
        params.extend(b2);
        Self::from_params(d, h, k, params)
    }

    pub(crate) fn from_params(d: usize, h: usize, k: usize, params: Vec<f64>) -> Result<Self> {
        if d == 0 || h == 0 || k == 0 {
            return Err(Error::Parameter("MLP needs d, H, K >= 1".into()));
        }
        if params.len() != d * h + h + h * k + k {
            return Err(Error::Dimension("MLP parameter vector length".into()));
        }
        Ok(Self { d, h, k, params })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.d, self.h, self.k)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> [usize; 4] {
        let (d, h, k) = (self.d, self.h, self.k);
        let b1 = d * h;
        let w2 = b1 + h;
        [0, b1, w2, w2 + h * k]
    }

    /// Hidden activations and raw outputs.
    pub(crate) fn run(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        check_cols(x, self.d)?;
        let [o_w1, o_b1, o_w2, o_b2] = self.offsets();
        let (d, h, k) = (self.d, self.h, self.k);
        let w1 = block(&self.params, o_w1..o_b1, d, h);
        let b1 = ArrayView1::from(&self.params[o_b1..o_w2]);
        let w2 = block(&self.params, o_w2..o_b2, h, k);
        let b2 = ArrayView1::from(&self.params[o_b2..]);
        let mut hidden = x.dot(&w1) + &b1;
        hidden.mapv_inplace(|v| v.max(0.0));
        let out = hidden.dot(&w2) + &b2;
        Ok((hidden, out))
    }

    /// Gradient of the flat parameters given `dJ/d(output)`.
    pub(crate) fn backward_raw(
        &self,
        x: ArrayView2<'_, f64>,
        hidden: &Array2<f64>,
        dout: ArrayView2<'_, f64>,
    ) -> Vec<f64> {
        let [_, _, o_w2, o_b2] = self.offsets();
        let (h, k) = (self.h, self.k);
        let w2 = block(&self.params, o_w2..o_b2, h, k);
        let g_w2 = hidden.t().dot(&dout);
        let g_b2 = dout.sum_axis(Axis(0));
        let mut dhid = dout.dot(&w2.t());
        ndarray::Zip::from(&mut dhid)
            .and(hidden)
            .for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
        let g_w1 = x.t().dot(&dhid);
        let g_b1 = dhid.sum_axis(Axis(0));
        let mut grad = Vec::with_capacity(self.params.len());
        grad.extend(g_w1.iter());
        grad.extend(g_b1.iter());
        grad.extend(g_w2.iter());
        grad.extend(g_b2.iter());
        debug_assert_eq!(grad.len(), self.params.len());
        grad
    }

    pub(crate) fn weight_ranges(&self) -> [Range<usize>; 2] {
        let [o_w1, o_b1, o_w2, o_b2] = self.offsets();
        [o_w1..o_b1, o_w2..o_b2]
    }
}

/// Free logits per training sample: `p(y=k | x_i) = softmax(L_i)_k`.
///
/// Defined only on the dataset it was bound to.
#[derive(Debug, Clone, PartialEq)]
pub struct NonparametricModel {
    n: usize,
    k: usize,
    fingerprint: String,
    params: Vec<f64>,
}

impl NonparametricModel {
    pub fn new(x: ArrayView2<'_, f64>, logits: Array2<f64>) -> Result<Self> {
        if logits.nrows() != x.nrows() {
            return Err(Error::Dimension(format!(
                "{} logit rows for {} samples",
                logits.nrows(),
                x.nrows()
            )));
        }
        let k = logits.ncols();
        if k == 0 {
            return Err(Error::Parameter("K must be >= 1".into()));
        }
        Ok(Self {
            n: x.nrows(),
            k,
            fingerprint: fingerprint(x),
            params: logits.iter().copied().collect(),
        })
    }

    fn check_bound(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.nrows() != self.n || fingerprint(x) != self.fingerprint {
            return Err(Error::Incompatible(
                "nonparametric model applied to data other than its training set".into(),
            ));
        }
        Ok(())
    }
}

/// Model family selector used by [`init`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Kernel,
    Mlp,
    Nonparametric,
}

/// Sizes needed to initialize a model. Kernel and nonparametric models
/// bind to the training matrix passed alongside.
#[derive(Debug, Clone, Copy)]
pub struct ModelDims {
    pub n_clusters: usize,
    pub hidden: usize,
    pub kernel: Option<KernelSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Kernel(KernelModel),
    Mlp(MlpModel),
    Nonparametric(NonparametricModel),
}

/// Inputs prepared once per dataset; reused across training epochs.
#[derive(Debug, Clone)]
pub struct Prepared {
    features: Array2<f64>,
    n: usize,
}

impl Prepared {
    pub fn n_samples(&self) -> usize {
        self.n
    }
}

/// Intermediate values of one forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct Tape {
    hidden: Option<Array2<f64>>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
}

/// Weights i.i.d. `N(0, scale^2)`, biases 0. With `scale = None` each weight
/// block uses `1/sqrt(fan_in)`, except the kernel model which uses `1/n_ref`:
/// rbf kernel rows are non-negative and sum over every reference sample, so
/// the usual rule starts with large logits. Nonparametric logits default to
/// `0.3`: with unit scale the random starting partition outlives 1000 Adam
/// steps at the default learning rate.
pub fn init(
    kind: ModelKind,
    x: ArrayView2<'_, f64>,
    dims: ModelDims,
    scale: Option<f64>,
    rng: &mut Rng,
) -> Result<Model> {
    let k = dims.n_clusters;
    if k == 0 {
        return Err(Error::Parameter("number of clusters must be >= 1".into()));
    }
    if let Some(s) = scale {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::Parameter(format!("init scale must be >= 0, got {s}")));
        }
    }
    let d = x.ncols();
    let mut draw = |count: usize, fan_in: usize, out: &mut Vec<f64>| {
        let sd = scale.unwrap_or(1.0 / (fan_in as f64).sqrt());
        out.extend((0..count).map(|_| sd * rng.normal()));
    };
    let model = match kind {
        ModelKind::Linear => {
            let mut p = Vec::new();
            draw(d * k, d, &mut p);
            p.extend(std::iter::repeat_n(0.0, k));
            Model::Linear(LinearModel::from_params(d, k, p)?)
        }
        ModelKind::Kernel => {
            let spec = dims
                .kernel
                .ok_or_else(|| Error::Parameter("kernel model needs a kernel spec".into()))?;
            let m = x.nrows();
            let sd = scale.unwrap_or(1.0 / m as f64);
            let mut p: Vec<f64> = (0..m * k).map(|_| sd * rng.normal()).collect();
            p.extend(std::iter::repeat_n(0.0, k));
            Model::Kernel(KernelModel::from_params(x.to_owned(), spec, k, p)?)
        }
        ModelKind::Mlp => {
            let h = dims.hidden;
            if h == 0 {
                return Err(Error::Parameter("hidden width must be >= 1".into()));
            }
            let mut p = Vec::new();
            draw(d * h, d, &mut p);
            p.extend(std::iter::repeat_n(0.0, h));
            draw(h * k, h, &mut p);
            p.extend(std::iter::repeat_n(0.0, k));
            Model::Mlp(MlpModel::from_params(d, h, k, p)?)
        }
        ModelKind::Nonparametric => {
            let n = x.nrows();
            let sd = scale.unwrap_or(0.3);
            let logits = Array2::from_shape_fn((n, k), |_| sd * rng.normal());
            Model::Nonparametric(NonparametricModel::new(x, logits)?)
        }
    };
    Ok(model)
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Linear(_) => ModelKind::Linear,
            Model::Kernel(_) => ModelKind::Kernel,
            Model::Mlp(_) => ModelKind::Mlp,
            Model::Nonparametric(_) => ModelKind::Nonparametric,
        }
    }

    pub fn n_clusters(&self) -> usize {
        match self {
            Model::Linear(m) => m.k,
            Model::Kernel(m) => m.k,
            Model::Mlp(m) => m.k,
            Model::Nonparametric(m) => m.k,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Model::Linear(m) => &m.params,
            Model::Kernel(m) => &m.params,
            Model::Mlp(m) => &m.params,
            Model::Nonparametric(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Model::Linear(m) => &mut m.params,
            Model::Kernel(m) => &mut m.params,
            Model::Mlp(m) => &mut m.params,
            Model::Nonparametric(m) => &mut m.params,
        }
    }

    /// Whether the model can score samples outside its training set.
    pub fn generalises(&self) -> bool {
        !matches!(self, Model::Nonparametric(_))
    }

    /// Index ranges of the weight matrices (biases and free logits excluded);
    /// these are the entries an l2 penalty acts on.
    pub fn weight_ranges(&self) -> Vec<Range<usize>> {
        match self {
            Model::Linear(m) => vec![0..m.d * m.k],
            Model::Kernel(m) => vec![0..m.reference.nrows() * m.k],
            Model::Mlp(m) => m.weight_ranges().to_vec(),
            Model::Nonparametric(_) => Vec::new(),
        }
    }

    pub fn weight_norm_sq(&self) -> f64 {
        let p = self.params();
        self.weight_ranges()
            .into_iter()
            .flat_map(|r| p[r].iter())
            .map(|w| w * w)
            .sum()
    }

    /// Validates `x` against the model and computes parameter-independent features.
    pub fn prepare(&self, x: ArrayView2<'_, f64>) -> Result<Prepared> {
        let n = x.nrows();
        let features = match self {
            Model::Linear(m) => {
                check_cols(x, m.d)?;
                x.to_owned()
            }
            Model::Mlp(m) => {
                check_cols(x, m.d)?;
                x.to_owned()
            }
            Model::Kernel(m) => {
                check_cols(x, m.reference.ncols())?;
                gram(x, m.reference.view(), m.spec)?.values
            }
            Model::Nonparametric(m) => {
                m.check_bound(x)?;
                Array2::zeros((n, 0))
            }
        };
        Ok(Prepared { features, n })
    }

    pub fn forward_prepared(&self, prep: &Prepared) -> Tape {
        let (hidden, logits) = match self {
            Model::Linear(m) => {
                let z = prep.features.dot(&m.weights()) + &m.bias();
                (None, z)
            }
            Model::Kernel(m) => {
                let b = ArrayView1::from(&m.params[m.reference.nrows() * m.k..]);
                (None, prep.features.dot(&m.weights()) + &b)
            }
            Model::Mlp(m) => {
                let (h, z) = m.run(prep.features.view()).expect("prepared input");
                (Some(h), z)
            }
            Model::Nonparametric(m) => {
                (None, block(&m.params, 0..m.n * m.k, m.n, m.k).to_owned())
            }
        };
        let probs = softmax_rows(logits.view());
        Tape { hidden, logits, probs }
    }

    /// Flat-parameter gradient given `dJ/dZ` on the logits.
    pub fn backward_logits(&self, prep: &Prepared, tape: &Tape, dz: ArrayView2<'_, f64>) -> Vec<f64> {
        match self {
            Model::Linear(_) | Model::Kernel(_) => {
                let gw = prep.features.t().dot(&dz);
                let gb = dz.sum_axis(Axis(0));
                gw.iter().chain(gb.iter()).copied().collect()
            }
            Model::Mlp(m) => m.backward_raw(
                prep.features.view(),
                tape.hidden.as_ref().expect("mlp tape"),
                dz,
            ),
            Model::Nonparametric(_) => dz.iter().copied().collect(),
        }
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let prep = self.prepare(x)?;
        Ok(self.forward_prepared(&prep).logits)
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Responsibilities> {
        let prep = self.prepare(x)?;
        Ok(Responsibilities(self.forward_prepared(&prep).probs))
    }

    /// Exact gradient of `J` with respect to the flat parameters, given
    /// `dJ/dP` on the responsibilities of `x`.
    pub fn backward(&self, x: ArrayView2<'_, f64>, dp: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let prep = self.prepare(x)?;
        let tape = self.forward_prepared(&prep);
        if dp.dim() != tape.probs.dim() {
            return Err(Error::Dimension(format!(
                "dJ/dP has shape {:?}, responsibilities {:?}",
                dp.dim(),
                tape.probs.dim()
            )));
        }
        let dz = softmax_backward(tape.probs.view(), dp);
        Ok(self.backward_logits(&prep, &tape, dz.view()))
    }

    pub fn to_document(&self) -> ModelDocument {
        match self {
            Model::Linear(m) => ModelDocument {
                kind: "linear".into(),
                dims: vec![m.d, m.k],
                params: m.params.clone(),
                kernel: None,
                reference: None,
                fingerprint: None,
            },
            Model::Kernel(m) => ModelDocument {
                kind: "kernel".into(),
                dims: vec![m.reference.nrows(), m.reference.ncols(), m.k],
                params: m.params.clone(),
                kernel: Some(m.spec),
                reference: Some(m.reference.iter().copied().collect()),
                fingerprint: None,
            },
            Model::Mlp(m) => ModelDocument {
                kind: "mlp".into(),
                dims: vec![m.d, m.h, m.k],
                params: m.params.clone(),
                kernel: None,
                reference: None,
                fingerprint: None,
            },
            Model::Nonparametric(m) => ModelDocument {
                kind: "nonparametric".into(),
                dims: vec![m.n, m.k],
                params: m.params.clone(),
                kernel: None,
                reference: None,
                fingerprint: Some(m.fingerprint.clone()),
            },
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let dims = |want: usize| -> Result<&[usize]> {
            if doc.dims.len() != want {
                return Err(Error::Format(format!(
                    "`{}` model needs {want} dims, got {:?}",
                    doc.kind, doc.dims
                )));
            }
            Ok(&doc.dims)
        };
        match doc.kind.as_str() {
            "linear" => {
                let d = dims(2)?;
                Ok(Model::Linear(LinearModel::from_params(d[0], d[1], doc.params.clone())?))
            }
            "kernel" => {
                let d = dims(3)?;
                let spec = doc
                    .kernel
                    .ok_or_else(|| Error::Format("kernel model without kernel spec".into()))?;
                let reference = doc
                    .reference
                    .clone()
                    .ok_or_else(|| Error::Format("kernel model without reference set".into()))?;
                let reference = Array2::from_shape_vec((d[0], d[1]), reference)
                    .map_err(|e| Error::Format(e.to_string()))?;
                Ok(Model::Kernel(KernelModel::from_params(reference, spec, d[2], doc.params.clone())?))
            }
            "mlp" => {
                let d = dims(3)?;
                Ok(Model::Mlp(MlpModel::from_params(d[0], d[1], d[2], doc.params.clone())?))
            }
            "nonparametric" => {
                let d = dims(2)?;
                if doc.params.len() != d[0] * d[1] {
                    return Err(Error::Format("nonparametric parameter length".into()));
                }
                Ok(Model::Nonparametric(NonparametricModel {
                    n: d[0],
                    k: d[1],
                    fingerprint: doc
                        .fingerprint
                        .clone()
                        .ok_or_else(|| Error::Format("nonparametric model without fingerprint".into()))?,
                    params: doc.params.clone(),
                }))
            }
            other => Err(Error::Format(format!("not a clustering model kind: `{other}`"))),
        }
    }
}

/// JSON form of a model: kind, dims, flat parameters in the layout above,
/// plus the kernel spec and reference set for kernel models.
///
/// `dims` is `[d, K]` (linear), `[n_ref, d, K]` (kernel), `[d, H, K]` (mlp,
/// critic) or `[n, K]` (nonparametric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub kind: String,
    pub dims: Vec<usize>,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
}

impl Serialize for Model {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_document().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Model {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ModelDocument::deserialize(d)?;
        Model::from_document(&doc).map_err(serde::de::Error::custom)
    }
}

/// Kernel feature vector of one sample, computed entry by entry.
#[cfg(test)]
fn kernel_row(m: &KernelModel, x: ArrayView1<'_, f64>) -> Vec<f64> {
    m.reference
        .outer_iter()
        .map(|r| match m.spec {
            KernelSpec::Linear => r.dot(&x),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = r.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
        })
        .collect()
}

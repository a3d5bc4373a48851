//! Clustering objectives over responsibilities, all to be maximized.
//!
//! Each objective takes the raw `n x K` matrix `P` and returns its value with
//! the exact gradient `dJ/dP`, treating every entry of `P` as a free variable
//! (the proportions are recomputed from `P`, so their dependence is included).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::models::Model;

/// Floor applied inside logarithms so that `0 log 0` evaluates to 0.
const LOG_FLOOR: f64 = 1e-300;
/// Clusters with proportion below this are ignored by MMD-GEMINI.
const EMPTY_CLUSTER: f64 = 1e-12;
/// Below this quadratic form the square root is treated as flat.
const SQRT_FLOOR: f64 = 1e-18;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    /// `dJ/dP`, same shape as the responsibilities.
    pub d_p: Array2<f64>,
    /// Gradient acting directly on model parameters (weight penalties), in
    /// the model's flat layout.
    pub d_params_extra: Option<Vec<f64>>,
}

/// Objective identifiers as used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveId {
    #[serde(rename = "mi")]
    Mi,
    #[serde(rename = "rim")]
    Rim,
    #[serde(rename = "mmd-gemini")]
    MmdGemini,
}

impl ObjectiveId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectiveId::Mi => "mi",
            ObjectiveId::Rim => "rim",
            ObjectiveId::MmdGemini => "mmd-gemini",
        }
    }
}

impl std::str::FromStr for ObjectiveId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mi" => Ok(ObjectiveId::Mi),
            "rim" => Ok(ObjectiveId::Rim),
            "mmd-gemini" => Ok(ObjectiveId::MmdGemini),
            other => Err(Error::Parameter(format!(
                "unknown objective `{other}` (expected mi, rim or mmd-gemini)"
            ))),
        }
    }
}

/// An objective ready for evaluation: hyperparameters resolved and, for
/// MMD-GEMINI, the training Gram matrix computed.
#[derive(Debug, Clone)]
pub enum Objective {
    Mi,
    Rim { lambda: f64 },
    MmdGemini { gram: KernelMatrix },
}

impl Objective {
    pub fn id(&self) -> ObjectiveId {
        match self {
            Objective::Mi => ObjectiveId::Mi,
            Objective::Rim { .. } => ObjectiveId::Rim,
            Objective::MmdGemini { .. } => ObjectiveId::MmdGemini,
        }
    }

    pub fn evaluate(&self, p: ArrayView2<'_, f64>, model: &Model) -> Result<ObjectiveValue> {
        match self {
            Objective::Mi => Ok(mi(p)),
            Objective::Rim { lambda } => rim(p, model, *lambda),
            Objective::MmdGemini { gram } => mmd_gemini_ova(p, gram),
        }
    }
}

/// Cluster proportions `p_k = (1/n) sum_i P_ik`.
pub fn proportions(p: ArrayView2<'_, f64>) -> Array1<f64> {
    p.mean_axis(Axis(0)).expect("at least one row")
}

fn safe_ln(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

fn xlogx(v: f64) -> f64 {
    if v > 0.0 {
        v * v.ln()
    } else {
        0.0
    }
}

/// Monte-Carlo mutual information `(1/n) sum_i KL(P_i || p)`.
pub fn mi(p: ArrayView2<'_, f64>) -> ObjectiveValue {
    let n = p.nrows() as f64;
    let pbar = proportions(p);
    let log_pbar = pbar.mapv(safe_ln);
    let mut value = 0.0;
    let mut d_p = Array2::zeros(p.raw_dim());
    for (i, row) in p.outer_iter().enumerate() {
        for (k, &pik) in row.iter().enumerate() {
            let lp = safe_ln(pik);
            if pik > 0.0 {
                value += pik * (lp - log_pbar[k]);
            }
            d_p[[i, k]] = (lp - log_pbar[k]) / n;
        }
    }
    ObjectiveValue {
        value: value / n,
        d_p,
        d_params_extra: None,
    }
}

/// Entropy of the proportions (fairness) and mean conditional entropy
/// (firmness). Mutual information equals the first minus the second.
pub fn fairness_firmness(p: ArrayView2<'_, f64>) -> (f64, f64) {
    let n = p.nrows() as f64;
    let h_marginal = -proportions(p).iter().map(|&v| xlogx(v)).sum::<f64>();
    let h_conditional = -p.iter().map(|&v| xlogx(v)).sum::<f64>() / n;
    (h_marginal, h_conditional)
}

/// Regularized mutual information: `mi(P) - lambda * |W|_F^2` over the
/// model's weight matrices (biases unpenalized).
pub fn rim(p: ArrayView2<'_, f64>, model: &Model, lambda: f64) -> Result<ObjectiveValue> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let mut out = mi(p);
    out.value -= lambda * model.weight_norm_sq();
    let params = model.params();
    let mut extra = vec![0.0; params.len()];
    for r in model.weight_ranges() {
        for i in r {
            extra[i] = -2.0 * lambda * params[i];
        }
    }
    out.d_params_extra = Some(extra);
    Ok(out)
}

/// One-vs-all MMD-GEMINI: `sum_k p_k * MMD(p(x|y=k), p_data)`.
///
/// The cluster-conditional distribution is the empirical measure reweighted by
/// `alpha_k = P_:k / (n p_k)`; the data distribution is uniform `beta = 1/n`.
/// `MMD_k^2 = (alpha_k - beta)^T G (alpha_k - beta)` for the training Gram `G`.
pub fn mmd_gemini_ova(p: ArrayView2<'_, f64>, gram: &KernelMatrix) -> Result<ObjectiveValue> {
    let (n, k) = p.dim();
    let g = &gram.values;
    if g.dim() != (n, n) {
        return Err(Error::Dimension(format!(
            "Gram matrix is {:?}, expected {n}x{n}",
            g.dim()
        )));
    }
    let nf = n as f64;
    let beta = Array1::from_elem(n, 1.0 / nf);
    let mut value = 0.0;
    let mut d_p = Array2::zeros((n, k));
    for c in 0..k {
        let col = p.column(c);
        let mass = col.sum();
        if mass / nf < EMPTY_CLUSTER {
            continue;
        }
        let delta = &col / mass - &beta;
        let g_delta = g.dot(&delta);
        let alpha_g = col.dot(&g_delta) / mass;
        let q = delta.dot(&g_delta);
        let mmd = q.max(0.0).sqrt();
        value += mass / nf * mmd;
        if q < SQRT_FLOOR {
            continue;
        }
        for i in 0..n {
            d_p[[i, c]] = (mmd + (g_delta[i] - alpha_g) / mmd) / nf;
        }
    }
    Ok(ObjectiveValue {
        value,
        d_p,
        d_params_extra: None,
    })
}

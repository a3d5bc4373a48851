//! Full-batch Adam ascent on clustering objectives.

use std::time::Instant;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gram, KernelChoice};
use crate::metrics::Metrics;
use crate::models::{softmax_backward, Model, ModelDocument};
use crate::objectives::{Objective, ObjectiveId};

pub const DEFAULT_EPOCHS: usize = 1000;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub objective: ObjectiveId,
    /// l2 weight for `rim`.
    pub lambda: f64,
    /// Kernel for `mmd-gemini`.
    pub kernel: Option<KernelChoice>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            objective: ObjectiveId::Mi,
            lambda: 0.0,
            kernel: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Parameter(format!("adam {name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Parameter("adam eps must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Resolves the configured objective against the training data.
    pub fn objective_for(&self, x: ArrayView2<'_, f64>) -> Result<Objective> {
        match self.objective {
            ObjectiveId::Mi => Ok(Objective::Mi),
            ObjectiveId::Rim => Ok(Objective::Rim { lambda: self.lambda }),
            ObjectiveId::MmdGemini => {
                let choice = self.kernel.ok_or_else(|| {
                    Error::Incompatible("mmd-gemini needs a kernel (linear or rbf)".into())
                })?;
                let spec = choice.resolve(x)?;
                Ok(Objective::MmdGemini { gram: gram(x, x, spec)? })
            }
        }
    }
}

/// Adam state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn from_config(n_params: usize, cfg: &TrainConfig) -> Self {
        Self::new(n_params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    }

    /// One descent step along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Outcome of a training run.
///
/// `elapsed` is kept out of the JSON form so that reports of identical runs
/// are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    /// Objective value before each epoch's update.
    pub history: Vec<f64>,
    /// Objective at the returned parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_model: Option<ModelDocument>,
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(skip)]
    pub elapsed: f64,
}

/// Trains `model` by full-batch Adam ascent on the configured objective.
///
/// Only the feature matrix is accepted; ground-truth labels never reach training.
pub fn fit(mut model: Model, x: ArrayView2<'_, f64>, cfg: &TrainConfig) -> Result<(Model, FitReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let objective = cfg.objective_for(x)?;
    let prep = model.prepare(x)?;
    let mut adam = Adam::from_config(model.params().len(), cfg);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let tape = model.forward_prepared(&prep);
        let obj = objective.evaluate(tape.probs.view(), &model)?;
        if !obj.value.is_finite() {
            return Err(Error::Numeric(format!(
                "{} objective became {} at epoch {epoch}",
                objective.id().as_str(),
                obj.value
            )));
        }
        history.push(obj.value);
        let dz = softmax_backward(tape.probs.view(), obj.d_p.view());
        let mut grad = model.backward_logits(&prep, &tape, dz.view());
        if let Some(extra) = &obj.d_params_extra {
            for (g, e) in grad.iter_mut().zip(extra) {
                *g += e;
            }
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient for parameter {i} at epoch {epoch}"
            )));
        }
        // ascent on the objective = descent on its negation
        grad.iter_mut().for_each(|g| *g = -*g);
        adam.step(model.params_mut(), &grad);
    }

    let tape = model.forward_prepared(&prep);
    let final_objective = objective.evaluate(tape.probs.view(), &model)?.value;
    let labels = crate::models::argmax_rows(tape.probs.view());
    log::debug!(
        "fit {:?}/{}: {} epochs, final objective {final_objective:.6}",
        model.kind(),
        objective.id().as_str(),
        cfg.epochs
    );
    let report = FitReport {
        config: None,
        history,
        final_objective: Some(final_objective),
        final_model: Some(model.to_document()),
        labels,
        metrics: None,
        elapsed: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Cluster labels by argmax of the responsibilities, ties to the lowest index.
pub fn predict(model: &Model, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    Ok(model.forward(x)?.labels())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// Parameter indices whose relative error reached `tol`.
    pub failures: Vec<usize>,
    pub passed: bool,
}

/// Compares the analytic parameter gradient of `objective(model(x))` with
/// central finite differences of step `h`.
///
/// The relative error of entry `i` is `|a_i - n_i| / max(|a_i|, |n_i|, 1e-3 * g_max, 1e-10)`,
/// where `g_max` is the largest gradient magnitude; entries negligible against
/// the overall gradient are thus judged on an absolute scale.
pub fn check_gradients(
    model: &Model,
    objective: &Objective,
    x: ArrayView2<'_, f64>,
    h: f64,
    tol: f64,
) -> Result<GradientReport> {
    let prep = model.prepare(x)?;
    let tape = model.forward_prepared(&prep);
    let obj = objective.evaluate(tape.probs.view(), model)?;
    let dz = softmax_backward(tape.probs.view(), obj.d_p.view());
    let mut analytic = model.backward_logits(&prep, &tape, dz.view());
    if let Some(extra) = &obj.d_params_extra {
        for (g, e) in analytic.iter_mut().zip(extra) {
            *g += e;
        }
    }

    let value_at = |m: &Model| -> Result<f64> {
        let t = m.forward_prepared(&prep);
        Ok(objective.evaluate(t.probs.view(), m)?.value)
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = model.clone();
    for i in 0..analytic.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let plus = value_at(&probe)?;
        probe.params_mut()[i] = orig - h;
        let minus = value_at(&probe)?;
        probe.params_mut()[i] = orig;
        numeric.push((plus - minus) / (2.0 * h));
    }

    let g_max = analytic
        .iter()
        .chain(&numeric)
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut max_abs_error: f64 = 0.0;
    let mut max_rel_error: f64 = 0.0;
    let mut failures = Vec::new();
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(1e-3 * g_max).max(1e-10);
        max_abs_error = max_abs_error.max(abs);
        max_rel_error = max_rel_error.max(rel);
        if !(rel < tol) {
            failures.push(i);
        }
    }
    Ok(GradientReport {
        analytic,
        numeric,
        max_abs_error,
        max_rel_error,
        passed: failures.is_empty(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rng;
    use crate::kernels::KernelSpec;
    use crate::models::{init, LinearModel, ModelDims, ModelKind};
    use crate::objectives::mi;
    use ndarray::{array, Array2};

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = Rng::new(seed);
        Array2::from_shape_fn((n, d), |_| rng.normal())
    }

    fn dims(k: usize) -> ModelDims {
        ModelDims { n_clusters: k, hidden: 4, kernel: Some(KernelSpec::Rbf { gamma: 0.5 }) }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut adam = Adam::new(3, 0.1, 0.9, 0.999, 1e-8);
        let mut p = vec![1.0, -2.0, 3.0];
        adam.step(&mut p, &[0.0; 3]);
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn adam_first_step_has_learning_rate_size() {
        let mut adam = Adam::new(2, 0.01, 0.9, 0.999, 1e-8);
        let mut p = vec![0.0, 0.0];
        adam.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] + 0.01).abs() < 1e-9 && (p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn predict_tie_break_and_one_hot() {
        let uniform = Model::Linear(LinearModel::new(Array2::zeros((2, 3)), vec![0.0; 3]).unwrap());
        assert_eq!(predict(&uniform, random(4, 2, 0).view()).unwrap(), vec![0; 4]);
        let sharp = Model::Linear(
            LinearModel::new(array![[50.0, -50.0]], vec![0.0, 0.0]).unwrap(),
        );
        assert_eq!(predict(&sharp, array![[1.0], [-1.0], [2.0]].view()).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn gradient_check_linear_mi() {
        let x = random(6, 2, 1);
        let m = init(ModelKind::Linear, x.view(), dims(3), Some(1.0), &mut Rng::new(2)).unwrap();
        let r = check_gradients(&m, &Objective::Mi, x.view(), 1e-5, 1e-5).unwrap();
        assert!(r.passed, "max rel {}", r.max_rel_error);
    }

    #[test]
    fn gradient_check_mlp_gemini_linear_kernel() {
        let x = random(8, 2, 3);
        let cfg = TrainConfig {
            objective: ObjectiveId::MmdGemini,
            kernel: Some(KernelChoice::Linear),
            ..TrainConfig::default()
        };
        let obj = cfg.objective_for(x.view()).unwrap();
        let m = init(ModelKind::Mlp, x.view(), dims(3), Some(1.0), &mut Rng::new(4)).unwrap();
        let r = check_gradients(&m, &obj, x.view(), 1e-5, 1e-4).unwrap();
        assert!(r.passed, "max rel {}", r.max_rel_error);
    }

    #[test]
    fn gradient_check_at_symmetric_point() {
        let x = random(6, 2, 5);
        let m = init(ModelKind::Linear, x.view(), dims(2), Some(0.0), &mut Rng::new(0)).unwrap();
        let r = check_gradients(&m, &Objective::Mi, x.view(), 1e-5, 1e-5).unwrap();
        assert!(r.analytic.iter().all(|g| g.abs() < 1e-8));
        assert!(r.numeric.iter().all(|g| g.abs() < 1e-8));
    }

    #[test]
    fn fit_is_deterministic_and_logs_every_epoch() {
        let x = random(20, 2, 6);
        let m = init(ModelKind::Mlp, x.view(), dims(2), None, &mut Rng::new(7)).unwrap();
        let cfg = TrainConfig { epochs: 25, ..TrainConfig::default() };
        let (_, a) = fit(m.clone(), x.view(), &cfg).unwrap();
        let (_, b) = fit(m, x.view(), &cfg).unwrap();
        assert_eq!(a.history.len(), 25);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.labels.iter().all(|&l| l < 2));
    }

    #[test]
    fn rim_history_matches_post_hoc_value() {
        let x = random(15, 2, 8);
        let m = init(ModelKind::Linear, x.view(), dims(3), None, &mut Rng::new(9)).unwrap();
        let lambda = 0.3;
        let base = TrainConfig { objective: ObjectiveId::Rim, lambda, ..TrainConfig::default() };
        let (_, long) = fit(m.clone(), x.view(), &TrainConfig { epochs: 8, ..base.clone() }).unwrap();
        for e in 1..8 {
            let (trained, _) = fit(m.clone(), x.view(), &TrainConfig { epochs: e, ..base.clone() }).unwrap();
            let p = trained.forward(x.view()).unwrap();
            let post = mi(p.view()).value - lambda * trained.weight_norm_sq();
            assert!((long.history[e] - post).abs() < 1e-9);
        }
    }

    #[test]
    fn training_increases_mi() {
        let x = random(30, 2, 10);
        let m = init(ModelKind::Linear, x.view(), dims(2), None, &mut Rng::new(11)).unwrap();
        let cfg = TrainConfig { epochs: 300, learning_rate: 1e-2, ..TrainConfig::default() };
        let (_, r) = fit(m, x.view(), &cfg).unwrap();
        assert!(r.final_objective.unwrap() > r.history[0]);
    }

    #[test]
    fn config_errors() {
        let x = random(5, 2, 12);
        let m = init(ModelKind::Linear, x.view(), dims(2), None, &mut Rng::new(0)).unwrap();
        let no_kernel = TrainConfig { objective: ObjectiveId::MmdGemini, ..TrainConfig::default() };
        assert!(matches!(fit(m.clone(), x.view(), &no_kernel), Err(Error::Incompatible(_))));
        let zero = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(fit(m.clone(), x.view(), &zero).is_err());
        let bad_lr = TrainConfig { learning_rate: -1.0, ..TrainConfig::default() };
        assert!(fit(m, x.view(), &bad_lr).is_err());
    }

    #[test]
    fn nan_objective_aborts() {
        let x = random(5, 2, 13);
        let mut m = init(ModelKind::Linear, x.view(), dims(2), None, &mut Rng::new(0)).unwrap();
        m.params_mut()[0] = f64::NAN;
        let err = fit(m, x.view(), &TrainConfig { epochs: 3, ..TrainConfig::default() });
        assert!(matches!(err, Err(Error::Numeric(_))));
    }
}

//! Contrastive clustering with a cosine critic.
//!
//! The critic is the one-hidden-layer network without a terminal softmax. Its
//! raw outputs are representations: the loss only sees their directions, and
//! clusters are read off as the argmax coordinate. Those outputs are not
//! cluster probabilities.

use std::f64::consts::PI;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Rng;
use crate::error::{Error, Result};
use crate::models::{argmax_rows, MlpModel, ModelDocument};
use crate::optim::{Adam, FitReport, TrainConfig};

pub const DEFAULT_CONTRASTIVE_EPOCHS: usize = 5000;
pub const DEFAULT_CONTRASTIVE_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Augmentation {
    GaussianNoise { sigma: f64 },
    /// One angle per call, uniform in `[lo, hi]` radians, applied to every row.
    Rotation2d { lo: f64, hi: f64 },
}

impl Augmentation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Augmentation::GaussianNoise { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            Augmentation::GaussianNoise { sigma } => Err(Error::Parameter(format!(
                "noise sigma must be >= 0, got {sigma}"
            ))),
            Augmentation::Rotation2d { lo, hi } if lo <= hi && lo.is_finite() && hi.is_finite() => {
                Ok(())
            }
            Augmentation::Rotation2d { lo, hi } => Err(Error::Parameter(format!(
                "rotation range [{lo}, {hi}] is invalid"
            ))),
        }
    }
}

impl std::str::FromStr for Augmentation {
    type Err = Error;

    /// `rotation:LO:HI`, `rotation` (full turn) or `noise:SIGMA`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::Parameter(format!("bad number `{t}` in augmentation `{s}`")))
        };
        let aug = match parts.as_slice() {
            ["rotation"] => Augmentation::Rotation2d { lo: 0.0, hi: 2.0 * PI },
            ["rotation", lo, hi] => Augmentation::Rotation2d { lo: num(lo)?, hi: num(hi)? },
            ["noise", sigma] => Augmentation::GaussianNoise { sigma: num(sigma)? },
            _ => {
                return Err(Error::Parameter(format!(
                    "unknown augmentation `{s}` (expected rotation:LO:HI or noise:SIGMA)"
                )))
            }
        };
        aug.validate()?;
        Ok(aug)
    }
}

pub fn augment(x: ArrayView2<'_, f64>, aug: &Augmentation, rng: &mut Rng) -> Result<Array2<f64>> {
    aug.validate()?;
    match *aug {
        Augmentation::GaussianNoise { sigma } => {
            let mut out = x.to_owned();
            if sigma > 0.0 {
                out.mapv_inplace(|v| v + sigma * rng.normal());
            }
            Ok(out)
        }
        Augmentation::Rotation2d { lo, hi } => {
            let theta = lo + (hi - lo) * rng.uniform();
            rotate(x, theta)
        }
    }
}

/// Rotates every row about the origin by `theta` radians.
pub fn rotate(x: ArrayView2<'_, f64>, theta: f64) -> Result<Array2<f64>> {
    if x.ncols() != 2 {
        return Err(Error::Dimension(format!(
            "rotation needs 2-d data, got {} features",
            x.ncols()
        )));
    }
    let (s, c) = theta.sin_cos();
    let mut out = x.to_owned();
    for mut row in out.outer_iter_mut() {
        let (a, b) = (row[0], row[1]);
        row[0] = c * a - s * b;
        row[1] = s * a + c * b;
    }
    Ok(out)
}

fn normalize_rows(z: ArrayView2<'_, f64>, what: &str) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut out = z.to_owned();
    let mut norms = Vec::with_capacity(z.nrows());
    for (i, mut row) in out.outer_iter_mut().enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numeric(format!("{what} row {i} has norm {norm}")));
        }
        row /= norm;
        norms.push(norm);
    }
    Ok((out, norms))
}

/// Cosine-similarity InfoNCE with a column-wise softmax.
///
/// With `S = normalize(Z) normalize(Z_aug)^T`, the loss is
/// `-sum_j softmax(S[:, j])_j`: each augmented sample must pick out its own
/// original among all originals. Temperature is 1. Returns the loss and its
/// gradient with respect to `Z`; `Z_aug` is treated as a constant.
pub fn info_nce_loss(z: ArrayView2<'_, f64>, z_aug: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
    if z.dim() != z_aug.dim() {
        return Err(Error::Dimension(format!(
            "representations {:?} vs augmented {:?}",
            z.dim(),
            z_aug.dim()
        )));
    }
    let n = z.nrows();
    let (zn, norms) = normalize_rows(z, "representation")?;
    let (an, _) = normalize_rows(z_aug, "augmented representation")?;
    // t = S^T, so the column softmax of S is a contiguous row softmax of t
    let mut t = an.dot(&zn.t());
    for mut row in t.outer_iter_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let total = row.sum();
        row /= total;
    }
    let diag = t.diag().to_owned();
    let loss = -diag.sum();

    // dL/dS_ij = sigma_jj * (sigma_ij - [i == j]), held transposed like t
    for (j, mut row) in t.outer_iter_mut().enumerate() {
        row *= diag[j];
        row[j] -= diag[j];
    }
    let d_zn = t.t().dot(&an);
    let mut d_z = Array2::zeros(z.raw_dim());
    for i in 0..n {
        let u = zn.row(i);
        let g = d_z_row(u, d_zn.row(i), norms[i]);
        d_z.row_mut(i).assign(&g);
    }
    Ok((loss, d_z))
}

/// Back through `u = z / |z|`.
fn d_z_row(
    u: ndarray::ArrayView1<'_, f64>,
    du: ndarray::ArrayView1<'_, f64>,
    norm: f64,
) -> ndarray::Array1<f64> {
    let proj = u.dot(&du);
    (&du - &(&u * proj)) / norm
}

/// Representation network: `x -> W2^T relu(W1^T x + b1) + b2`, no softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    net: MlpModel,
}

impl Critic {
    pub fn new(net: MlpModel) -> Self {
        Self { net }
    }

    /// Default: every weight and bias uniform in `±1/sqrt(fan_in)` of its layer,
    /// the usual initialization of a dense layer in deep-learning libraries.
    /// With `scale`, weights are `N(0, scale^2)` and biases 0.
    pub fn init(d: usize, hidden: usize, k: usize, scale: Option<f64>, rng: &mut Rng) -> Result<Self> {
        if d == 0 || hidden == 0 || k == 0 {
            return Err(Error::Parameter("critic needs d, H, K >= 1".into()));
        }
        if let Some(s) = scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Parameter(format!("init scale must be >= 0, got {s}")));
            }
        }
        let mut p = Vec::with_capacity(d * hidden + hidden + hidden * k + k);
        for (fan_in, fan_out) in [(d, hidden), (hidden, k)] {
            match scale {
                None => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    let mut u = || bound * (2.0 * rng.uniform() - 1.0);
                    p.extend((0..fan_in * fan_out).map(|_| u()));
                    p.extend((0..fan_out).map(|_| u()));
                }
                Some(s) => {
                    p.extend((0..fan_in * fan_out).map(|_| s * rng.normal()));
                    p.extend(std::iter::repeat_n(0.0, fan_out));
                }
            }
        }
        Ok(Self { net: MlpModel::from_params(d, hidden, k, p)? })
    }

    pub fn n_outputs(&self) -> usize {
        self.net.dims().2
    }

    pub fn net(&self) -> &MlpModel {
        &self.net
    }

    /// Raw (unnormalized) representations.
    pub fn outputs(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.net.run(x)?.1)
    }

    pub fn to_document(&self) -> ModelDocument {
        let (d, h, k) = self.net.dims();
        ModelDocument {
            kind: "critic".into(),
            dims: vec![d, h, k],
            params: self.net.params().to_vec(),
            kernel: None,
            reference: None,
            fingerprint: None,
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        if doc.kind != "critic" || doc.dims.len() != 3 {
            return Err(Error::Format(format!("not a critic document: `{}`", doc.kind)));
        }
        let (d, h, k) = (doc.dims[0], doc.dims[1], doc.dims[2]);
        Ok(Self { net: MlpModel::from_params(d, h, k, doc.params.clone())? })
    }
}

/// Cluster labels as the argmax coordinate of the raw critic outputs, ties to
/// the lowest index.
pub fn extract_clusters(critic: &Critic, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    Ok(argmax_rows(critic.outputs(x)?.view()))
}

/// Trains the critic by Adam descent on [`info_nce_loss`] between the
/// representations of `x` and of a fresh augmentation of `x` each epoch.
///
/// Augmentations are drawn from a stream seeded by `cfg.seed`. The history
/// holds the loss (to be minimized) before each epoch's update. `epochs = 0`
/// returns the critic unchanged.
pub fn train_contrastive(
    mut critic: Critic,
    x: ArrayView2<'_, f64>,
    aug: &Augmentation,
    cfg: &TrainConfig,
) -> Result<(Critic, FitReport)> {
    aug.validate()?;
    if cfg.epochs > 0 {
        cfg.validate()?;
    }
    if matches!(aug, Augmentation::Rotation2d { .. }) && x.ncols() != 2 {
        return Err(Error::Dimension("rotation augmentation needs 2-d data".into()));
    }
    let started = Instant::now();
    let mut rng = Rng::new(cfg.seed);
    let mut adam = Adam::from_config(critic.net.params().len(), cfg);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let xa = augment(x, aug, &mut rng)?;
        let (hidden, z) = critic.net.run(x)?;
        let z_aug = critic.net.run(xa.view())?.1;
        let (loss, d_z) = info_nce_loss(z.view(), z_aug.view())
            .map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("contrastive loss became {loss} at epoch {epoch}")));
        }
        history.push(loss);
        let grad = critic.net.backward_raw(x, &hidden, d_z.view());
        adam.step(critic.net.params_mut(), &grad);
    }
    let labels = extract_clusters(&critic, x)?;
    let report = FitReport {
        config: None,
        history,
        final_objective: None,
        final_model: Some(critic.to_document()),
        labels,
        metrics: None,
        elapsed: started.elapsed().as_secs_f64(),
    };
    Ok((critic, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use crate::data::Rng;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = Rng::new(seed);
        Array2::from_shape_fn((n, d), |_| rng.normal())
    }

    #[test]
    fn rotation_cases() {
        let x = random(10, 2, 0);
        let full = rotate(x.view(), 2.0 * PI).unwrap();
        for (a, b) in full.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let half = rotate(array![[1.0, 0.0]].view(), PI).unwrap();
        assert!((half[[0, 0]] + 1.0).abs() < 1e-15 && half[[0, 1]].abs() < 1e-15);
        assert!(rotate(random(3, 3, 1).view(), 1.0).is_err());
        let aug = Augmentation::Rotation2d { lo: 0.0, hi: 2.0 * PI };
        assert!(augment(random(3, 3, 1).view(), &aug, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn rotation_uses_one_angle_per_call() {
        let x = array![[1.0, 0.0], [2.0, 0.0], [0.0, 3.0]];
        let aug = Augmentation::Rotation2d { lo: 0.0, hi: 2.0 * PI };
        let y = augment(x.view(), &aug, &mut Rng::new(4)).unwrap();
        let angle = |r: usize| y[[r, 1]].atan2(y[[r, 0]]) - x[[r, 1]].atan2(x[[r, 0]]);
        let wrap = |a: f64| (a + 4.0 * PI) % (2.0 * PI);
        assert!((wrap(angle(0)) - wrap(angle(1))).abs() < 1e-12);
        assert!((wrap(angle(0)) - wrap(angle(2))).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_is_identity() {
        let x = random(5, 3, 2);
        let y = augment(x.view(), &Augmentation::GaussianNoise { sigma: 0.0 }, &mut Rng::new(0)).unwrap();
        assert_eq!(x, y);
        assert!(Augmentation::GaussianNoise { sigma: -1.0 }.validate().is_err());
        assert!(Augmentation::Rotation2d { lo: 1.0, hi: 0.0 }.validate().is_err());
    }

    #[test]
    fn parse_augmentations() {
        assert_eq!(
            "rotation:0:6.2832".parse::<Augmentation>().unwrap(),
            Augmentation::Rotation2d { lo: 0.0, hi: 6.2832 }
        );
        assert_eq!("noise:1".parse::<Augmentation>().unwrap(), Augmentation::GaussianNoise { sigma: 1.0 });
        assert!("blur:2".parse::<Augmentation>().is_err());
        assert!("noise:-2".parse::<Augmentation>().is_err());
    }

    #[test]
    fn closed_form_loss() {
        let eye = array![[1.0, 0.0], [0.0, 1.0]];
        let (loss, _) = info_nce_loss(eye.view(), eye.view()).unwrap();
        let e = 1f64.exp();
        assert!((loss + 2.0 * e / (e + 1.0)).abs() < 1e-9);
        assert!((loss + 1.4621).abs() < 1e-4);
    }

    #[test]
    fn matched_orthogonal_pairs_beat_random_pairs() {
        let z = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 2.0 } else { 0.0 });
        let (matched, _) = info_nce_loss(z.view(), z.view()).unwrap();
        let (random_pairs, _) = info_nce_loss(z.view(), random(4, 4, 3).view()).unwrap();
        assert!(matched < random_pairs);
    }

    #[test]
    fn loss_gradient_matches_fd() {
        for seed in 0..4 {
            let z = random(6, 3, seed);
            let za = random(6, 3, seed + 50);
            let (_, g) = info_nce_loss(z.view(), za.view()).unwrap();
            let h = 1e-6;
            let scale = g.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            for i in 0..6 {
                for j in 0..3 {
                    let mut p = z.clone();
                    p[[i, j]] += h;
                    let mut m = z.clone();
                    m[[i, j]] -= h;
                    let num = (info_nce_loss(p.view(), za.view()).unwrap().0
                        - info_nce_loss(m.view(), za.view()).unwrap().0)
                        / (2.0 * h);
                    let denom = g[[i, j]].abs().max(num.abs()).max(1e-3 * scale);
                    assert!((g[[i, j]] - num).abs() / denom < 1e-5);
                }
            }
        }
    }

    #[test]
    fn zero_norm_row_is_rejected() {
        let z = array![[0.0, 0.0], [1.0, 0.0]];
        assert!(info_nce_loss(z.view(), z.view()).is_err());
        assert!(info_nce_loss(z.view(), random(3, 2, 0).view()).is_err());
    }

    #[test]
    fn zero_critic_labels_everything_zero() {
        let c = Critic::init(2, 5, 3, Some(0.0), &mut Rng::new(0)).unwrap();
        assert_eq!(extract_clusters(&c, random(6, 2, 1).view()).unwrap(), vec![0; 6]);
    }

    #[test]
    fn no_epochs_keeps_initial_labels() {
        let x = random(20, 2, 5);
        let c = Critic::init(2, 20, 2, None, &mut Rng::new(6)).unwrap();
        let before = extract_clusters(&c, x.view()).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let aug = Augmentation::GaussianNoise { sigma: 0.1 };
        let (trained, r) = train_contrastive(c.clone(), x.view(), &aug, &cfg).unwrap();
        assert_eq!(trained, c);
        assert_eq!(r.labels, before);
        assert!(r.history.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_lowers_loss() {
        let x = random(30, 2, 7);
        let c = Critic::init(2, 8, 2, None, &mut Rng::new(8)).unwrap();
        let cfg = TrainConfig { epochs: 200, learning_rate: 1e-2, seed: 3, ..TrainConfig::default() };
        let aug = Augmentation::GaussianNoise { sigma: 0.05 };
        let (_, a) = train_contrastive(c.clone(), x.view(), &aug, &cfg).unwrap();
        let (_, b) = train_contrastive(c, x.view(), &aug, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        let head: f64 = a.history[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = a.history[190..].iter().sum::<f64>() / 10.0;
        assert!(tail < head);
    }

    #[test]
    fn critic_document_round_trip() {
        let c = Critic::init(2, 4, 2, None, &mut Rng::new(1)).unwrap();
        let json = serde_json::to_string(&c.to_document()).unwrap();
        let doc: ModelDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(Critic::from_document(&doc).unwrap(), c);
    }

    proptest! {
        #[test]
        fn loss_is_scale_invariant_and_bounded(seed in 0u64..2000, n in 2usize..10) {
            let z = random(n, 3, seed);
            let za = random(n, 3, seed + 7);
            let mut rng = Rng::new(seed);
            let scale: Vec<f64> = (0..n).map(|_| 0.1 + 10.0 * rng.uniform()).collect();
            let zs = Array2::from_shape_fn(z.raw_dim(), |(i, j)| z[[i, j]] * scale[i]);
            let zas = Array2::from_shape_fn(za.raw_dim(), |(i, j)| za[[i, j]] * scale[n - 1 - i]);
            let (a, _) = info_nce_loss(z.view(), za.view()).unwrap();
            let (b, _) = info_nce_loss(zs.view(), zas.view()).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
            prop_assert!(a >= -(n as f64) && a < 0.0);
        }

        #[test]
        fn rotation_preserves_norms(seed in 0u64..2000, theta in -10.0f64..10.0) {
            let x = random(8, 2, seed);
            let y = rotate(x.view(), theta).unwrap();
            for (a, b) in x.outer_iter().zip(y.outer_iter()) {
                prop_assert!((a.dot(&a).sqrt() - b.dot(&b).sqrt()).abs() < 1e-12);
            }
        }
    }
}

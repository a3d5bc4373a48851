//! Kernel functions and Gram matrices.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            KernelSpec::Rbf { gamma } => Err(Error::Parameter(format!(
                "rbf gamma must be positive, got {gamma}"
            ))),
        }
    }
}

/// Kernel as requested by a user: the rbf bandwidth may be left to
/// [`default_gamma`] on the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelChoice {
    Linear,
    Rbf { gamma: Option<f64> },
}

impl KernelChoice {
    pub fn resolve(&self, x: ArrayView2<'_, f64>) -> Result<KernelSpec> {
        let spec = match *self {
            KernelChoice::Linear => KernelSpec::Linear,
            KernelChoice::Rbf { gamma: Some(gamma) } => KernelSpec::Rbf { gamma },
            KernelChoice::Rbf { gamma: None } => KernelSpec::Rbf {
                gamma: default_gamma(x)?,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl std::str::FromStr for KernelChoice {
    type Err = Error;

    /// `linear`, `rbf` or `rbf:GAMMA`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "linear" => Ok(KernelChoice::Linear),
            None if s == "rbf" => Ok(KernelChoice::Rbf { gamma: None }),
            Some(("rbf", g)) => g
                .parse()
                .map(|gamma| KernelChoice::Rbf { gamma: Some(gamma) })
                .map_err(|_| Error::Parameter(format!("bad rbf gamma `{g}`"))),
            _ => Err(Error::Parameter(format!(
                "unknown kernel `{s}` (expected linear, rbf or rbf:GAMMA)"
            ))),
        }
    }
}

/// Gram matrix together with the kernel that produced it.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub values: Array2<f64>,
    pub spec: KernelSpec,
}

/// Squared Euclidean distances between rows of `x` and rows of `y`.
pub fn pairwise_sq_dist(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::Dimension(format!(
            "pairwise distances between {} and {} features",
            x.ncols(),
            y.ncols()
        )));
    }
    // direct differences keep d(x, x) = 0 and d(x, y) = d(y, x) exact
    let mut d = Array2::zeros((x.nrows(), y.nrows()));
    Zip::indexed(&mut d).par_for_each(|(i, j), v| {
        *v = x
            .row(i)
            .iter()
            .zip(y.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
    });
    Ok(d)
}

pub fn gram(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, spec: KernelSpec) -> Result<KernelMatrix> {
    spec.validate()?;
    let values = match spec {
        KernelSpec::Linear => {
            if x.ncols() != y.ncols() {
                return Err(Error::Dimension(format!(
                    "gram between {} and {} features",
                    x.ncols(),
                    y.ncols()
                )));
            }
            x.dot(&y.t())
        }
        KernelSpec::Rbf { gamma } => {
            let mut d = pairwise_sq_dist(x, y)?;
            d.par_mapv_inplace(|v| (-gamma * v).exp());
            d
        }
    };
    Ok(KernelMatrix { values, spec })
}

/// `1 / (d * Var(X))`, where the variance pools every entry of `x`.
///
/// Used as the rbf bandwidth whenever the caller does not pass one.
pub fn default_gamma(x: ArrayView2<'_, f64>) -> Result<f64> {
    let d = x.ncols() as f64;
    let var = x.var(0.0);
    if !(var > 0.0) {
        return Err(Error::Degenerate("data has zero variance".into()));
    }
    Ok(1.0 / (d * var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_circles, standardize, Rng};
    use crate::linalg::symmetric_eigen;
    use ndarray::array;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = Rng::new(seed);
        Array2::from_shape_fn((n, d), |_| rng.normal())
    }

    #[test]
    fn sq_dist_small_cases() {
        let x = array![[0.0], [1.0]];
        assert_eq!(pairwise_sq_dist(x.view(), x.view()).unwrap(), array![[0.0, 1.0], [1.0, 0.0]]);
        let d = pairwise_sq_dist(array![[3.0, 4.0]].view(), array![[0.0, 0.0]].view()).unwrap();
        assert!((d[[0, 0]] - 25.0).abs() < 1e-12);
        assert!(pairwise_sq_dist(x.view(), array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn sq_dist_matches_loop() {
        let x = random(5, 3, 1);
        let y = random(4, 3, 2);
        let d = pairwise_sq_dist(x.view(), y.view()).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let mut s = 0.0;
                for c in 0..3 {
                    s += (x[[i, c]] - y[[j, c]]).powi(2);
                }
                assert!((d[[i, j]] - s).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gram_cases() {
        let x = random(6, 2, 3);
        let k = gram(x.view(), x.view(), KernelSpec::Rbf { gamma: 0.7 }).unwrap();
        for i in 0..6 {
            assert_eq!(k.values[[i, i]], 1.0);
            for j in 0..6 {
                assert!((k.values[[i, j]] - k.values[[j, i]]).abs() < 1e-12);
                assert!(k.values[[i, j]] > 0.0 && k.values[[i, j]] <= 1.0);
            }
        }
        let e = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(gram(e.view(), e.view(), KernelSpec::Linear).unwrap().values, e);
        let k = gram(
            array![[0.0, 0.0]].view(),
            array![[2f64.sqrt(), 0.0]].view(),
            KernelSpec::Rbf { gamma: 0.5 },
        )
        .unwrap();
        assert!((k.values[[0, 0]] - (-1f64).exp()).abs() < 1e-12);
        assert!((k.values[[0, 0]] - 0.3679).abs() < 1e-4);
        let lin = gram(x.view(), x.view(), KernelSpec::Linear).unwrap();
        let xxt = x.dot(&x.t());
        for (a, b) in lin.values.iter().zip(xxt.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(gram(x.view(), x.view(), KernelSpec::Rbf { gamma: 0.0 }).is_err());
        assert!(gram(x.view(), x.view(), KernelSpec::Rbf { gamma: -1.0 }).is_err());
    }

    #[test]
    fn rbf_gram_is_psd() {
        for seed in 0..5 {
            let x = random(10, 2, seed);
            let k = gram(x.view(), x.view(), KernelSpec::Rbf { gamma: 0.5 }).unwrap();
            let (vals, _) = symmetric_eigen(&k.values).unwrap();
            assert!(vals.iter().all(|&v| v >= -1e-8), "{vals:?}");
        }
    }

    #[test]
    fn default_gamma_cases() {
        let x = standardize(&make_circles(200, 0.05, 0.1, &mut Rng::new(0)).unwrap()).unwrap();
        let g = default_gamma(x.values()).unwrap();
        assert!((g - 0.5).abs() < 1e-9);
        let scaled = x.values().mapv(|v| 2.0 * v);
        assert!((default_gamma(scaled.view()).unwrap() - g / 4.0).abs() < 1e-12);
        assert!(default_gamma(array![[1.0, 1.0], [1.0, 1.0]].view()).is_err());
    }

    #[test]
    fn kernel_choice_parsing() {
        assert_eq!("linear".parse::<KernelChoice>().unwrap(), KernelChoice::Linear);
        assert_eq!("rbf".parse::<KernelChoice>().unwrap(), KernelChoice::Rbf { gamma: None });
        assert_eq!(
            "rbf:0.25".parse::<KernelChoice>().unwrap(),
            KernelChoice::Rbf { gamma: Some(0.25) }
        );
        assert!("poly".parse::<KernelChoice>().is_err());
        assert!("rbf:x".parse::<KernelChoice>().is_err());
        let x = array![[0.0, 1.0], [2.0, 3.0]];
        assert!(KernelChoice::Rbf { gamma: Some(-1.0) }.resolve(x.view()).is_err());
    }
}

//! Discriminative clustering: probabilistic clustering models trained by
//! maximizing mutual information or MMD-GEMINI, with k-means and spectral
//! baselines, clustering metrics and a contrastive critic.

pub mod baselines;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod objectives;
pub mod optim;
pub mod runner;

pub use data::{DataMatrix, Rng};
pub use error::{Error, Result};
pub use kernels::{KernelChoice, KernelMatrix, KernelSpec};
pub use models::{Model, ModelDims, ModelDocument, ModelKind, Responsibilities};
pub use objectives::{Objective, ObjectiveId};
pub use optim::{fit, predict, FitReport, TrainConfig};
pub use runner::{run_contrastive, run_fit, ContrastiveConfig, ModelId, RunConfig};

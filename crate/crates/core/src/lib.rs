//! Factor-augmented doubly robust estimation of average treatment effects.
//!
//! The pipeline holds out a small unlabeled subsample to build a diversified projection matrix,
//! maps every covariate vector to estimated factor scores, fits outcome and propensity functions
//! with factor-augmented sparse-throughput ReLU networks, and combines them with the augmented
//! inverse propensity weighting (AIPW) estimator. Oracle baselines, a Vanilla-NN baseline and a
//! synthetic benchmark harness come along for evaluation.

pub mod ate;
pub mod config;
pub mod data;
pub mod dgp;
pub mod error;
pub mod factor;
pub mod fastnn;
pub mod numerics;
pub mod selftest;
pub mod simulate;

pub use ate::{aipw, estimate, fit_fiddle, fit_vanilla, oracle_aipw, oracle_ipw, plugin_variance, truncate_propensity, AteResult};
pub use config::{Method, NetSettings, PipelineConfig, Preset};
pub use data::{load_csv, Dataset};
pub use dgp::{DgpSpec, SyntheticDataset};
pub use error::{FiddleError, Result};
pub use factor::{DpMatrix, FactorScores};
pub use fastnn::{FastNnConfig, FastNnModel, NetMode};
pub use numerics::{Matrix, SeededRng};

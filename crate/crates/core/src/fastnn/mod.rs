//! Factor-augmented sparse-throughput ReLU networks.
//!
//! A network sees `[f̃, Tr_M(Θᵀx)]`: the estimated factors concatenated with a truncated linear
//! "throughput" of the raw covariates. `Θ` carries a clipped-L1 penalty so that only a few
//! covariates pass through. In raw mode the network is a plain fully connected regressor on its
//! dense input and `Θ` is absent.

mod adam;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{FiddleError, Result};

pub use adam::AdamState;
pub use model::{Dense, Features, FastNnModel, Gradients, ModelBlob, Regularization, MODEL_FORMAT_VERSION};
pub use train::{fit, selected_variables, train_outcome, train_propensity, top_rows, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetMode {
    /// Factor scores plus the penalized `Θ` throughput layer.
    FactorAugmented,
    /// Plain fully connected network on the dense input; no `Θ`.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastNnConfig {
    /// Number of hidden ReLU layers `L`.
    pub depth: usize,
    /// Hidden width `N` (also the number of `Θ` columns).
    pub width: usize,
    /// Output truncation level `M`. `None` picks `1.2·max|y|` for outcome fits and `1` for
    /// propensity fits.
    pub trunc_level: Option<f64>,
    /// Clipping threshold `τ` of the clipped-L1 penalty.
    pub clip_tau: f64,
    /// Penalty weight `λ` on `Σ ψ_τ(Θᵢⱼ)`.
    pub penalty: f64,
    /// Squared-L2 penalty weight on the layer weights (Vanilla-NN baseline); 0 for FAST-NN.
    #[serde(default)]
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: NetMode,
}

impl Default for FastNnConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            width: 400,
            trunc_level: None,
            clip_tau: 0.005,
            penalty: 0.0,
            weight_decay: 0.0,
            learning_rate: 0.001,
            epochs: 100,
            batch_size: 64,
            seed: 0,
            mode: NetMode::FactorAugmented,
        }
    }
}

impl FastNnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(FiddleError::InvalidArgument(msg.to_string()));
        if self.depth < 1 {
            return bad("depth must be >= 1");
        }
        if self.width < 1 {
            return bad("width must be >= 1");
        }
        if !(self.clip_tau > 0.0) {
            return bad("clip_tau must be > 0");
        }
        if !(self.penalty >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("penalty weights must be >= 0");
        }
        if let Some(m) = self.trunc_level {
            if !(m > 0.0) || !m.is_finite() {
                return bad("trunc_level must be finite and > 0");
            }
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and >= 0");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        Ok(())
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            lambda: if self.mode == NetMode::Raw { 0.0 } else { self.penalty },
            tau: self.clip_tau,
            weight_decay: self.weight_decay,
        }
    }
}

/// Clipped-L1 penalty `ψ_τ(x) = min(|x|/τ, 1)`.
pub fn clipped_l1(x: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(FiddleError::InvalidArgument(format!("tau = {tau} must be > 0")));
    }
    Ok(clipped_l1_unchecked(x, tau))
}

#[inline]
pub(crate) fn clipped_l1_unchecked(x: f64, tau: f64) -> f64 {
    (x.abs() / tau).min(1.0)
}

/// Subgradient of [`clipped_l1`]: `sign(x)/τ` on `0 < |x| < τ`, zero at the origin and on the
/// flat region.
pub fn clipped_l1_subgrad(x: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(FiddleError::InvalidArgument(format!("tau = {tau} must be > 0")));
    }
    Ok(clipped_l1_subgrad_unchecked(x, tau))
}

#[inline]
pub(crate) fn clipped_l1_subgrad_unchecked(x: f64, tau: f64) -> f64 {
    if x == 0.0 || x.abs() >= tau {
        0.0
    } else {
        x.signum() / tau
    }
}

/// Coordinatewise truncation `Tr_M(z)ᵢ = sgn(zᵢ)·min(|zᵢ|, M)`.
pub fn truncate(v: &[f64], m: f64) -> Vec<f64> {
    v.iter().map(|&z| truncate_scalar(z, m)).collect()
}

#[inline]
pub fn truncate_scalar(z: f64, m: f64) -> f64 {
    z.clamp(-m, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipped_l1_values() {
        assert_eq!(clipped_l1(0.0, 0.005).unwrap(), 0.0);
        assert_eq!(clipped_l1(0.01, 0.005).unwrap(), 1.0);
        assert!((clipped_l1(0.001, 0.005).unwrap() - 0.2).abs() < 1e-12);
        assert!((clipped_l1(-0.001, 0.005).unwrap() - 0.2).abs() < 1e-12);
        assert!(clipped_l1(1.0, 0.0).is_err());
    }

    #[test]
    fn clipped_l1_subgrad_values() {
        assert_eq!(clipped_l1_subgrad(0.0, 0.005).unwrap(), 0.0);
        assert!((clipped_l1_subgrad(0.001, 0.005).unwrap() - 200.0).abs() < 1e-9);
        assert!((clipped_l1_subgrad(-0.001, 0.005).unwrap() + 200.0).abs() < 1e-9);
        assert_eq!(clipped_l1_subgrad(0.01, 0.005).unwrap(), 0.0);
        assert!(clipped_l1_subgrad(0.01, -1.0).is_err());
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate_scalar(7.0, 5.0), 5.0);
        assert_eq!(truncate_scalar(-7.0, 5.0), -5.0);
        assert_eq!(truncate_scalar(3.2, 5.0), 3.2);
        assert_eq!(truncate(&[-2.0, 0.5, 2.0], 1.0), vec![-1.0, 0.5, 1.0]);
    }

    #[test]
    fn config_validation() {
        assert!(FastNnConfig::default().validate().is_ok());
        let mut c = FastNnConfig::default();
        c.clip_tau = 0.0;
        assert!(c.validate().is_err());
        let mut c = FastNnConfig::default();
        c.depth = 0;
        assert!(c.validate().is_err());
        let mut c = FastNnConfig::default();
        c.trunc_level = Some(-1.0);
        assert!(c.validate().is_err());
    }
}

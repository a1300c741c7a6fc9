//! Pipeline configuration shared by the library entry points and the CLI.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dgp::DgpSpec;
use crate::error::{FiddleError, Result};
use crate::fastnn::{FastNnConfig, NetMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fiddle,
    VanillaNn,
    OracleIpw,
    OracleAipw,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fiddle, Method::VanillaNn, Method::OracleIpw, Method::OracleAipw];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Fiddle => "fiddle",
            Method::VanillaNn => "vanilla_nn",
            Method::OracleIpw => "oracle_ipw",
            Method::OracleAipw => "oracle_aipw",
        }
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self, Method::OracleIpw | Method::OracleAipw)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = FiddleError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "fiddle" => Ok(Method::Fiddle),
            "vanilla_nn" | "vanilla" | "vanillann" => Ok(Method::VanillaNn),
            "oracle_ipw" => Ok(Method::OracleIpw),
            "oracle_aipw" => Ok(Method::OracleAipw),
            other => Err(FiddleError::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// Network hyperparameters shared by the three nuisance fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetSettings {
    pub depth: usize,
    pub width: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_tau: f64,
    /// Fixed penalty weight; `None` uses `lambda_coef · ln(p) / n`.
    pub lambda: Option<f64>,
    pub lambda_coef: f64,
    /// Fixed output truncation level; `None` is data-driven (see `train_outcome`).
    pub trunc_level: Option<f64>,
    /// Squared-L2 weight penalty of the Vanilla-NN baseline.
    pub vanilla_weight_decay: f64,
}

impl Default for NetSettings {
    fn default() -> Self {
        Self {
            depth: 4,
            width: 400,
            learning_rate: 0.001,
            epochs: 100,
            batch_size: 64,
            clip_tau: 0.005,
            lambda: None,
            lambda_coef: 1.3,
            trunc_level: None,
            vanilla_weight_decay: 1.0,
        }
    }
}

impl NetSettings {
    /// Penalty weight for a fit on `n` observations with `p` covariates.
    pub fn lambda_for(&self, n: usize, p: usize) -> f64 {
        self.lambda
            .unwrap_or_else(|| self.lambda_coef * (p.max(1) as f64).ln() / n.max(1) as f64)
    }

    pub fn fastnn_config(&self, mode: NetMode, penalty: f64, weight_decay: f64, seed: u64) -> FastNnConfig {
        FastNnConfig {
            depth: self.depth,
            width: self.width,
            trunc_level: self.trunc_level,
            clip_tau: self.clip_tau,
            penalty,
            weight_decay,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Published hyperparameters (`N = 400`, 100 epochs, `n = 5000`, 100 replications).
    Paper,
    /// Laptop-scale: `N = 128`, 60 epochs, 20 replications.
    Desk,
}

impl FromStr for Preset {
    type Err = FiddleError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(FiddleError::InvalidArgument(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub method: Method,
    /// Unlabeled rows held out to build the projection matrix.
    pub m_pretrain: usize,
    /// Columns of the projection matrix.
    pub rbar: usize,
    /// Skip factor augmentation and feed raw covariates (for low-dimensional data).
    pub low_dimensional: bool,
    pub net: NetSettings,
    pub seed: u64,
    pub reps: usize,
    pub dgp: Option<DgpSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            method: Method::Fiddle,
            m_pretrain: 50,
            rbar: 10,
            low_dimensional: false,
            net: NetSettings::default(),
            seed: 0,
            reps: 100,
            dgp: None,
        }
    }
}

impl PipelineConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Paper => Self::default(),
            Preset::Desk => Self {
                reps: 20,
                net: NetSettings {
                    width: 128,
                    epochs: 60,
                    ..NetSettings::default()
                },
                ..Self::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FiddleError::InvalidArgument(m));
        if !self.low_dimensional && matches!(self.method, Method::Fiddle) {
            if self.m_pretrain == 0 {
                return bad("m_pretrain must be >= 1".into());
            }
            if self.rbar == 0 || self.rbar > self.m_pretrain {
                return bad(format!(
                    "rbar = {} must be in 1..=m_pretrain ({})",
                    self.rbar, self.m_pretrain
                ));
            }
        }
        if self.net.batch_size == 0 || self.net.depth == 0 || self.net.width == 0 {
            return bad("depth, width and batch_size must be positive".into());
        }
        if !(self.net.clip_tau > 0.0) {
            return bad("clip_tau must be > 0".into());
        }
        if let Some(l) = self.net.lambda {
            if !(l >= 0.0) {
                return bad("lambda must be >= 0".into());
            }
        }
        if let Some(d) = &self.dgp {
            d.validate()?;
        }
        Ok(())
    }

    /// Short SHA-256 digest of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hex::encode(&hash[..8])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_settings() {
        let c = PipelineConfig::default();
        assert_eq!(c.m_pretrain, 50);
        assert_eq!(c.rbar, 10);
        assert_eq!((c.net.depth, c.net.width, c.net.epochs, c.net.batch_size), (4, 400, 100, 64));
        assert_eq!(c.net.learning_rate, 0.001);
        assert_eq!(c.net.clip_tau, 0.005);
        let lambda = c.net.lambda_for(5000, 1000);
        assert!((lambda - 1.3 * 1000f64.ln() / 5000.0).abs() < 1e-15);
    }

    #[test]
    fn desk_preset() {
        let c = PipelineConfig::preset(Preset::Desk);
        assert_eq!((c.net.width, c.net.epochs, c.reps), (128, 60, 20));
    }

    #[test]
    fn json_round_trip_and_digest() {
        let c = PipelineConfig::preset(Preset::Desk);
        let text = serde_json::to_string(&c).unwrap();
        let back = PipelineConfig::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        let mut d = c.clone();
        d.seed = 1;
        assert_ne!(d.digest(), c.digest());
        let partial = PipelineConfig::from_json(r#"{"method":"oracle_ipw","seed":3}"#).unwrap();
        assert_eq!(partial.method, Method::OracleIpw);
        assert_eq!(partial.rbar, 10);
    }

    #[test]
    fn method_parsing() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("ganite".parse::<Method>().is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut c = PipelineConfig::default();
        c.rbar = 60;
        assert!(c.validate().is_err());
        c.low_dimensional = true;
        assert!(c.validate().is_ok());
    }
}

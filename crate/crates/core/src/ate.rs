//! AIPW combination of nuisance estimates, plug-in variance, and the estimator pipelines.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{Method, PipelineConfig};
use crate::data::Dataset;
use crate::error::{FiddleError, Result};
use crate::factor::{build_dp_matrix, extract_factors, split_pretrain, DpMatrix};
use crate::fastnn::{train_outcome, train_propensity, FastNnModel, Features, NetMode, TrainReport};
use crate::numerics::{derive_seed, SeededRng};

/// Normal quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteResult {
    pub method: Method,
    pub estimate: f64,
    pub sigma2: f64,
    pub ci: [f64; 2],
    pub n: usize,
    pub seed: u64,
    pub config_digest: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, Value>,
}

impl AteResult {
    /// Point estimate, plug-in variance and 95% interval from per-observation influence terms.
    pub fn from_terms(method: Method, terms: &[f64]) -> Result<Self> {
        if terms.is_empty() {
            return Err(FiddleError::InvalidArgument("no observations".into()));
        }
        let n = terms.len();
        let estimate = terms.iter().sum::<f64>() / n as f64;
        let sigma2 = terms.iter().map(|t| (t - estimate).powi(2)).sum::<f64>() / n as f64;
        if !estimate.is_finite() || !sigma2.is_finite() {
            return Err(FiddleError::NonFinite("ATE estimate".into()));
        }
        let half = Z_95 * (sigma2 / n as f64).sqrt();
        Ok(Self {
            method,
            estimate,
            sigma2,
            ci: [estimate - half, estimate + half],
            n,
            seed: 0,
            config_digest: String::new(),
            meta: BTreeMap::new(),
        })
    }

    pub fn ci_lo(&self) -> f64 {
        self.ci[0]
    }

    pub fn ci_hi(&self) -> f64 {
        self.ci[1]
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci[0] <= value && value <= self.ci[1]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Fitted nuisance functions evaluated on the estimation sample.
#[derive(Debug, Clone)]
pub struct NuisanceEstimates {
    pub mu0_hat: Vec<f64>,
    pub mu1_hat: Vec<f64>,
    /// Truncated propensity estimates.
    pub pi_hat: Vec<f64>,
    pub models: Option<FittedModels>,
}

#[derive(Debug, Clone)]
pub struct FittedModels {
    pub mu0: (FastNnModel, TrainReport),
    pub mu1: (FastNnModel, TrainReport),
    pub propensity: (FastNnModel, TrainReport),
}

/// Everything produced by one pipeline run.
#[derive(Debug, Clone)]
pub struct FiddleFit {
    pub result: AteResult,
    pub nuisances: NuisanceEstimates,
    pub dp: Option<DpMatrix>,
    /// The rows the estimator averaged over.
    pub estimation: Dataset,
}

/// `αₙ = 1 / ln n`.
pub fn propensity_floor(n: usize) -> Result<f64> {
    let alpha = 1.0 / (n as f64).ln();
    if n < 2 || !(alpha < 0.5) {
        return Err(FiddleError::InvalidArgument(format!(
            "n = {n} is too small for propensity truncation (1/ln n must be < 1/2)"
        )));
    }
    Ok(alpha)
}

/// Clamps raw propensity predictions into `[1/ln n, 1 − 1/ln n]`.
pub fn truncate_propensity(pi_raw: &[f64], n: usize) -> Result<Vec<f64>> {
    let alpha = propensity_floor(n)?;
    Ok(pi_raw.iter().map(|&p| p.max(alpha).min(1.0 - alpha)).collect())
}

fn check_inputs(y: &[f64], t: &[u8], others: &[&[f64]], pi: &[f64]) -> Result<()> {
    let n = y.len();
    if t.len() != n || pi.len() != n || others.iter().any(|v| v.len() != n) {
        return Err(FiddleError::Shape("AIPW inputs differ in length".into()));
    }
    if n == 0 {
        return Err(FiddleError::InvalidArgument("no observations".into()));
    }
    if let Some(i) = t.iter().position(|&v| v > 1) {
        return Err(FiddleError::InvalidArgument(format!("treatment {i} is not 0/1")));
    }
    if let Some(i) = pi.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(FiddleError::InvalidArgument(format!(
            "propensity {} at row {i} is not strictly inside (0, 1)",
            pi[i]
        )));
    }
    Ok(())
}

/// Per-observation AIPW summands
/// `Tᵢyᵢ/π̂ᵢ − (1−Tᵢ)yᵢ/(1−π̂ᵢ) − (Tᵢ−π̂ᵢ)(μ̂₁ᵢ/π̂ᵢ + μ̂₀ᵢ/(1−π̂ᵢ))`.
pub fn aipw_terms(y: &[f64], t: &[u8], mu0_hat: &[f64], mu1_hat: &[f64], pi_hat: &[f64]) -> Result<Vec<f64>> {
    check_inputs(y, t, &[mu0_hat, mu1_hat], pi_hat)?;
    Ok((0..y.len())
        .map(|i| {
            let ti = f64::from(t[i]);
            let p = pi_hat[i];
            ti * y[i] / p - (1.0 - ti) * y[i] / (1.0 - p) - (ti - p) * (mu1_hat[i] / p + mu0_hat[i] / (1.0 - p))
        })
        .collect())
}

pub fn aipw(y: &[f64], t: &[u8], mu0_hat: &[f64], mu1_hat: &[f64], pi_hat: &[f64]) -> Result<f64> {
    let terms = aipw_terms(y, t, mu0_hat, mu1_hat, pi_hat)?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Empirical second moment of the centered AIPW summands.
pub fn plugin_variance(
    y: &[f64],
    t: &[u8],
    mu0_hat: &[f64],
    mu1_hat: &[f64],
    pi_hat: &[f64],
    estimate: f64,
) -> Result<f64> {
    let terms = aipw_terms(y, t, mu0_hat, mu1_hat, pi_hat)?;
    Ok(terms.iter().map(|v| (v - estimate).powi(2)).sum::<f64>() / terms.len() as f64)
}

/// Inverse propensity weighting with the true propensity.
pub fn oracle_ipw(y: &[f64], t: &[u8], pi_star: &[f64]) -> Result<AteResult> {
    check_inputs(y, t, &[], pi_star)?;
    let terms: Vec<f64> = (0..y.len())
        .map(|i| {
            let ti = f64::from(t[i]);
            ti * y[i] / pi_star[i] - (1.0 - ti) * y[i] / (1.0 - pi_star[i])
        })
        .collect();
    AteResult::from_terms(Method::OracleIpw, &terms)
}

/// AIPW with the true response and propensity functions.
pub fn oracle_aipw(y: &[f64], t: &[u8], mu0_star: &[f64], mu1_star: &[f64], pi_star: &[f64]) -> Result<AteResult> {
    let terms = aipw_terms(y, t, mu0_star, mu1_star, pi_star)?;
    AteResult::from_terms(Method::OracleAipw, &terms)
}

fn require_both_arms(ds: &Dataset, stage: &str) -> Result<()> {
    if ds.n_treated() == 0 || ds.n_control() == 0 {
        return Err(FiddleError::DegenerateTreatment(format!(
            "{stage}: n0 = {}, n1 = {}",
            ds.n_control(),
            ds.n_treated()
        )));
    }
    Ok(())
}

fn fit_nuisances(
    features: &Features,
    ds: &Dataset,
    config: &PipelineConfig,
    mode: NetMode,
    penalty: f64,
    weight_decay: f64,
) -> Result<NuisanceEstimates> {
    let cfg = |k: u64| config.net.fastnn_config(mode, penalty, weight_decay, derive_seed(config.seed, k));
    let (cfg0, cfg1, cfg2) = (cfg(1), cfg(2), cfg(3));
    let ((mu0, mu1), propensity) = rayon::join(
        || {
            rayon::join(
                || train_outcome(features, &ds.y, &ds.treatment, 0, &cfg0),
                || train_outcome(features, &ds.y, &ds.treatment, 1, &cfg1),
            )
        },
        || train_propensity(features, &ds.treatment, &cfg2),
    );
    let (mu0, mu1, propensity) = (mu0?, mu1?, propensity?);
    let mu0_hat = mu0.0.predict(features)?;
    let mu1_hat = mu1.0.predict(features)?;
    let pi_raw = propensity.0.predict(features)?;
    let pi_hat = truncate_propensity(&pi_raw, ds.n())?;
    Ok(NuisanceEstimates {
        mu0_hat,
        mu1_hat,
        pi_hat,
        models: Some(FittedModels { mu0, mu1, propensity }),
    })
}

fn finish(
    method: Method,
    ds: &Dataset,
    nuisances: &NuisanceEstimates,
    config: &PipelineConfig,
    mut meta: BTreeMap<String, Value>,
) -> Result<AteResult> {
    let terms = aipw_terms(&ds.y, &ds.treatment, &nuisances.mu0_hat, &nuisances.mu1_hat, &nuisances.pi_hat)?;
    let mut result = AteResult::from_terms(method, &terms)?;
    result.seed = config.seed;
    result.config_digest = config.digest();
    if let Some(models) = &nuisances.models {
        meta.insert("trunc_level_mu0".into(), models.mu0.1.trunc_level.into());
        meta.insert("trunc_level_mu1".into(), models.mu1.1.trunc_level.into());
        meta.insert("trunc_level_pi".into(), models.propensity.1.trunc_level.into());
        meta.insert(
            "trunc_level_source".into(),
            if config.net.trunc_level.is_some() { "fixed" } else { "data_driven" }.into(),
        );
    }
    result.meta = meta;
    Ok(result)
}

/// The full factor-augmented pipeline: pretraining split, projection matrix, factor scores,
/// three FAST-NN fits, propensity truncation, AIPW.
///
/// With `config.low_dimensional` the factor steps are skipped and raw-mode networks are fit on
/// the full sample.
pub fn fit_fiddle_detailed(dataset: &Dataset, config: &PipelineConfig) -> Result<FiddleFit> {
    config.validate()?;
    dataset.validate()?;
    require_both_arms(dataset, "input")?;
    let mut meta = BTreeMap::new();

    let (estimation, features, dp, mode) = if config.low_dimensional {
        let est = dataset.clone();
        let features = Features::raw(est.x.clone());
        (est, features, None, NetMode::Raw)
    } else {
        let mut rng = SeededRng::child(config.seed, 0);
        let split = split_pretrain(dataset, config.m_pretrain, &mut rng)?;
        let dp = build_dp_matrix(&split.pretrain, config.rbar)?;
        let scores = extract_factors(&dp, &split.estimation.x)?;
        let est = split.estimation;
        let features = Features::factor_augmented(scores.scores, est.x.clone())?;
        meta.insert("m_pretrain".into(), split.pretrain_indices.len().into());
        (est, features, Some(dp), NetMode::FactorAugmented)
    };
    require_both_arms(&estimation, "estimation sample after pretraining split")?;

    let penalty = if mode == NetMode::Raw {
        0.0
    } else {
        config.net.lambda_for(estimation.n(), estimation.p())
    };
    meta.insert("lambda".into(), penalty.into());
    let nuisances = fit_nuisances(&features, &estimation, config, mode, penalty, 0.0)?;
    let result = finish(Method::Fiddle, &estimation, &nuisances, config, meta)?;
    Ok(FiddleFit {
        result,
        nuisances,
        dp,
        estimation,
    })
}

pub fn fit_fiddle(dataset: &Dataset, config: &PipelineConfig) -> Result<AteResult> {
    Ok(fit_fiddle_detailed(dataset, config)?.result)
}

/// Vanilla-NN baseline: fully connected networks on the raw covariates with a squared-L2
/// weight penalty, combined by the same AIPW step.
pub fn fit_vanilla_detailed(dataset: &Dataset, config: &PipelineConfig) -> Result<FiddleFit> {
    config.validate()?;
    dataset.validate()?;
    require_both_arms(dataset, "input")?;
    let features = Features::raw(dataset.x.clone());
    let wd = config.net.vanilla_weight_decay;
    let nuisances = fit_nuisances(&features, dataset, config, NetMode::Raw, 0.0, wd)?;
    let mut meta = BTreeMap::new();
    meta.insert("weight_decay".into(), wd.into());
    let result = finish(Method::VanillaNn, dataset, &nuisances, config, meta)?;
    Ok(FiddleFit {
        result,
        nuisances,
        dp: None,
        estimation: dataset.clone(),
    })
}

pub fn fit_vanilla(dataset: &Dataset, config: &PipelineConfig) -> Result<AteResult> {
    Ok(fit_vanilla_detailed(dataset, config)?.result)
}

fn oracle_columns(dataset: &Dataset, need_outcomes: bool) -> Result<(&[f64], Option<(&[f64], &[f64])>)> {
    let o = dataset.oracle.as_ref().ok_or_else(|| {
        FiddleError::InvalidArgument("oracle methods need a pi_star column".into())
    })?;
    let outcomes = match (&o.mu0_star, &o.mu1_star) {
        (Some(a), Some(b)) => Some((a.as_slice(), b.as_slice())),
        _ if need_outcomes => {
            return Err(FiddleError::InvalidArgument(
                "oracle_aipw needs mu0_star and mu1_star columns".into(),
            ))
        }
        _ => None,
    };
    Ok((&o.pi_star, outcomes))
}

/// Runs `config.method` on `dataset`, stamping the seed and config digest on the result.
pub fn estimate(dataset: &Dataset, config: &PipelineConfig) -> Result<AteResult> {
    let mut result = match config.method {
        Method::Fiddle => return fit_fiddle(dataset, config),
        Method::VanillaNn => return fit_vanilla(dataset, config),
        Method::OracleIpw => {
            let (pi, _) = oracle_columns(dataset, false)?;
            oracle_ipw(&dataset.y, &dataset.treatment, pi)?
        }
        Method::OracleAipw => {
            let (pi, outcomes) = oracle_columns(dataset, true)?;
            let (mu0, mu1) = outcomes.expect("checked above");
            oracle_aipw(&dataset.y, &dataset.treatment, mu0, mu1, pi)?
        }
    };
    result.seed = config.seed;
    result.config_digest = config.digest();
    Ok(result)
}

use serde::Serialize;

use super::adam::AdamState;
use super::model::{Features, FastNnModel, Workspace};
use super::{clipped_l1_unchecked, FastNnConfig, NetMode};
use crate::error::{FiddleError, Result};
use crate::numerics::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Size-weighted mean of the mini-batch MSE over each epoch (before each update).
    pub loss_per_epoch: Vec<f64>,
    /// `Σ ψ_τ(Θᵢⱼ)` at the end of training (0 in raw mode).
    pub penalty_final: f64,
    pub steps: u64,
    pub trunc_level: f64,
}

fn check_mode(features: &Features, config: &FastNnConfig) -> Result<()> {
    match (config.mode, features.sparse.is_some()) {
        (NetMode::FactorAugmented, false) => Err(FiddleError::InvalidArgument(
            "factor-augmented training needs covariates".into(),
        )),
        (NetMode::Raw, true) => Err(FiddleError::InvalidArgument(
            "raw-mode training takes the covariates as the dense input only".into(),
        )),
        _ => Ok(()),
    }
}

/// Mini-batch Adam on the penalized squared loss, starting from [`FastNnModel::init`] with the
/// output bias set to the mean target.
///
/// Indices are reshuffled every epoch from a stream derived from `config.seed` (the last
/// partial batch is kept); the full penalty gradient is applied at every step.
pub fn fit(
    features: &Features,
    targets: &[f64],
    config: &FastNnConfig,
    trunc_level: f64,
) -> Result<(FastNnModel, TrainReport)> {
    config.validate()?;
    check_mode(features, config)?;
    let n = targets.len();
    if n == 0 {
        return Err(FiddleError::InvalidArgument("no training observations".into()));
    }
    if features.n() != n {
        return Err(FiddleError::Shape(format!(
            "{} feature rows vs {n} targets",
            features.n()
        )));
    }
    if let Some(i) = targets.iter().position(|v| !v.is_finite()) {
        return Err(FiddleError::NonFinite(format!("training target {i}")));
    }

    let mut init_rng = SeededRng::child(config.seed, 0);
    let mut shuffle_rng = SeededRng::child(config.seed, 1);
    let mut model = FastNnModel::init(
        features.dense.cols(),
        features.sparse.as_ref().map(|s| s.cols()),
        config,
        trunc_level,
        &mut init_rng,
    )?;
    // Start the output at the target mean; at small learning rates the intercept would
    // otherwise consume most of the step budget.
    let mean = targets.iter().sum::<f64>() / n as f64;
    model.layers.last_mut().expect("output layer").bias[0] = mean;
    let reg = config.regularization();
    let mut adam = AdamState::new(&model);
    let mut grads = model.zero_gradients();
    let mut ws = Workspace::default();
    let mut batch = Features {
        dense: Default::default(),
        sparse: None,
    };
    let mut batch_targets = Vec::with_capacity(config.batch_size);
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_per_epoch = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut total = 0.0;
        for rows in order.chunks(config.batch_size) {
            features.gather_into(rows, &mut batch);
            batch_targets.clear();
            batch_targets.extend(rows.iter().map(|&i| targets[i]));
            let mse = model.grad_into(&batch, &batch_targets, &reg, &mut grads, &mut ws)?;
            total += mse * rows.len() as f64;
            adam.step(&mut model, &grads, config.learning_rate)?;
        }
        let epoch_loss = total / n as f64;
        if !epoch_loss.is_finite() {
            return Err(FiddleError::NonFinite(format!("training loss diverged at epoch {epoch}")));
        }
        loss_per_epoch.push(epoch_loss);
    }

    let penalty_final = model
        .theta
        .as_ref()
        .map(|t| t.as_slice().iter().map(|&v| clipped_l1_unchecked(v, config.clip_tau)).sum())
        .unwrap_or(0.0);
    Ok((
        model,
        TrainReport {
            loss_per_epoch,
            penalty_final,
            steps: adam.steps(),
            trunc_level,
        },
    ))
}

/// Fits `μ̂_arm` on the observations with `T = arm`.
///
/// Without an explicit truncation level, `M = max(1.2·max|y|, 1)` over the arm's outcomes.
pub fn train_outcome(
    features: &Features,
    y: &[f64],
    treatment: &[u8],
    arm: u8,
    config: &FastNnConfig,
) -> Result<(FastNnModel, TrainReport)> {
    if y.len() != treatment.len() || y.len() != features.n() {
        return Err(FiddleError::Shape("outcome, treatment and features differ in length".into()));
    }
    let idx: Vec<usize> = (0..y.len()).filter(|&i| treatment[i] == arm).collect();
    if idx.is_empty() {
        return Err(FiddleError::DegenerateTreatment(format!(
            "no observations with T = {arm}"
        )));
    }
    let targets: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let trunc = config.trunc_level.unwrap_or_else(|| {
        let max_abs = targets.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        (1.2 * max_abs).max(1.0)
    });
    fit(&features.select_rows(&idx), &targets, config, trunc)
}

/// Fits the (untruncated-in-[0,1]) propensity regression of `T` on the features with squared loss.
///
/// Without an explicit truncation level, `M = 1`.
pub fn train_propensity(
    features: &Features,
    treatment: &[u8],
    config: &FastNnConfig,
) -> Result<(FastNnModel, TrainReport)> {
    let n1 = treatment.iter().filter(|&&t| t == 1).count();
    if n1 == 0 || n1 == treatment.len() {
        return Err(FiddleError::DegenerateTreatment(
            "propensity fit needs both treated and control units".into(),
        ));
    }
    let targets: Vec<f64> = treatment.iter().map(|&t| f64::from(t)).collect();
    fit(features, &targets, config, config.trunc_level.unwrap_or(1.0))
}

fn theta_of(model: &FastNnModel) -> Result<&crate::numerics::Matrix> {
    model.theta.as_ref().ok_or_else(|| {
        FiddleError::InvalidArgument("raw-mode models have no variable-selection matrix".into())
    })
}

fn row_strength(theta: &crate::numerics::Matrix, j: usize) -> f64 {
    theta.row(j).iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Covariates `j` with `max_k |Θⱼₖ| > threshold`, ascending.
pub fn selected_variables(model: &FastNnModel, threshold: f64) -> Result<Vec<usize>> {
    let theta = theta_of(model)?;
    Ok((0..theta.rows())
        .filter(|&j| row_strength(theta, j) > threshold)
        .collect())
}

/// The `k` covariates with the largest `max_k |Θⱼₖ|`, strongest first.
pub fn top_rows(model: &FastNnModel, k: usize) -> Result<Vec<usize>> {
    let theta = theta_of(model)?;
    let mut idx: Vec<usize> = (0..theta.rows()).collect();
    idx.sort_by(|&a, &b| row_strength(theta, b).total_cmp(&row_strength(theta, a)).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn line_data(n: usize) -> (Features, Vec<f64>) {
        let x = Matrix::from_fn(n, 1, |i, _| -1.0 + 2.0 * i as f64 / (n - 1) as f64);
        let y = x.as_slice().to_vec();
        (Features::raw(x), y)
    }

    fn raw_config() -> FastNnConfig {
        FastNnConfig {
            depth: 2,
            width: 16,
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.01,
            mode: NetMode::Raw,
            seed: 11,
            ..FastNnConfig::default()
        }
    }

    #[test]
    fn learns_identity_line() {
        let (f, y) = line_data(200);
        let (model, report) = fit(&f, &y, &raw_config(), 2.0).unwrap();
        let mse = model.mse(&f, &y).unwrap();
        assert!(mse < 0.01, "in-sample mse {mse}");
        assert_eq!(report.loss_per_epoch.len(), 200);
        assert_eq!(report.steps, 200 * 7);
        assert_eq!(report.penalty_final, 0.0);
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let (f, y) = line_data(50);
        let mut cfg = raw_config();
        cfg.learning_rate = 0.0;
        cfg.epochs = 3;
        let (trained, _) = fit(&f, &y, &cfg, 2.0).unwrap();
        cfg.epochs = 0;
        let (initial, report) = fit(&f, &y, &cfg, 2.0).unwrap();
        assert_eq!(trained, initial);
        assert!(report.loss_per_epoch.is_empty());
    }

    #[test]
    fn same_seed_same_model() {
        let (f, y) = line_data(64);
        let mut cfg = raw_config();
        cfg.epochs = 5;
        let (a, _) = fit(&f, &y, &cfg, 2.0).unwrap();
        let (b, _) = fit(&f, &y, &cfg, 2.0).unwrap();
        assert_eq!(a, b);
        cfg.seed += 1;
        let (c, _) = fit(&f, &y, &cfg, 2.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_arms_are_fatal() {
        let (f, y) = line_data(10);
        let t = vec![1u8; 10];
        let cfg = raw_config();
        assert!(matches!(
            train_outcome(&f, &y, &t, 0, &cfg),
            Err(FiddleError::DegenerateTreatment(_))
        ));
        assert!(matches!(
            train_propensity(&f, &t, &cfg),
            Err(FiddleError::DegenerateTreatment(_))
        ));
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let (f, y) = line_data(10);
        let mut cfg = raw_config();
        cfg.mode = NetMode::FactorAugmented;
        assert!(fit(&f, &y, &cfg, 1.0).is_err());
    }

    #[test]
    fn selection_from_theta() {
        let cfg = FastNnConfig {
            depth: 1,
            width: 3,
            ..FastNnConfig::default()
        };
        let mut model = FastNnModel::init(1, Some(10), &cfg, 1.0, &mut SeededRng::new(0)).unwrap();
        let theta = model.theta.as_mut().unwrap();
        theta.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        assert!(selected_variables(&model, 0.5).unwrap().is_empty());
        model.theta.as_mut().unwrap()[(7, 1)] = 1.0;
        assert_eq!(selected_variables(&model, 0.5).unwrap(), vec![7]);
        assert_eq!(top_rows(&model, 1).unwrap(), vec![7]);

        let raw = FastNnModel::init(1, None, &raw_config(), 1.0, &mut SeededRng::new(0)).unwrap();
        assert!(selected_variables(&raw, 0.5).is_err());
    }
}

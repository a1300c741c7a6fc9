//! Diversified projection from a held-out pretraining subsample.
//!
//! `W = [√λ̂₁ v̂₁, …, √λ̂ᵣ v̂ᵣ]` is built from the leading eigenpairs of the uncentered second
//! moment `m⁻¹ Σ xxᵀ` of `m` unlabeled rows; factor scores are then `f̃ = p⁻¹ Wᵀx`.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{FiddleError, Result};
use crate::numerics::{dense_covariance_topk, gram_topk, matmul, sym_eig_topk, t_matmul, Matrix, SeededRng};

/// `p × r̄` diversified projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DpMatrix {
    pub w: Matrix,
    pub eigvals: Vec<f64>,
}

impl DpMatrix {
    pub fn p(&self) -> usize {
        self.w.rows()
    }

    pub fn rbar(&self) -> usize {
        self.w.cols()
    }
}

/// `n × r̄` estimated factor scores.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorScores {
    pub scores: Matrix,
}

/// Significance diagnostics of `H = p⁻¹ WᵀB` (simulation only: `B` is latent).
#[derive(Debug, Clone, Serialize)]
pub struct DpDiagnostics {
    #[serde(skip)]
    pub h: Matrix,
    pub nu_min: f64,
    pub nu_max: f64,
    pub w_max_abs: f64,
}

/// Pretraining covariates (unlabeled) and the remaining estimation sample.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub pretrain: Matrix,
    pub estimation: Dataset,
    pub pretrain_indices: Vec<usize>,
}

impl SplitDataset {
    pub fn m(&self) -> usize {
        self.pretrain.rows()
    }
}

/// Holds out a uniformly random `m`-subset of rows for pretraining. The estimation set keeps the
/// remaining rows in their original order.
pub fn split_pretrain(dataset: &Dataset, m: usize, rng: &mut SeededRng) -> Result<SplitDataset> {
    let n = dataset.n();
    if m == 0 || m >= n {
        return Err(FiddleError::InvalidArgument(format!(
            "pretraining size m = {m} must satisfy 1 <= m < n = {n}"
        )));
    }
    let mut held = rng.sample_indices(n, m);
    held.sort_unstable();
    let mut is_held = vec![false; n];
    held.iter().for_each(|&i| is_held[i] = true);
    let rest: Vec<usize> = (0..n).filter(|&i| !is_held[i]).collect();
    Ok(SplitDataset {
        pretrain: dataset.x.select_rows(&held),
        estimation: dataset.subset(&rest),
        pretrain_indices: held,
    })
}

/// Builds `W` from the `m × p` pretraining covariates.
///
/// Uses the `m × m` Gram matrix when `p > m` and the dense `p × p` second moment otherwise.
pub fn build_dp_matrix(pretrain: &Matrix, rbar: usize) -> Result<DpMatrix> {
    let (m, p) = pretrain.shape();
    if rbar == 0 {
        return Err(FiddleError::InvalidArgument("rbar must be positive".into()));
    }
    if rbar > m {
        return Err(FiddleError::InvalidArgument(format!(
            "rbar = {rbar} exceeds the pretraining size m = {m}"
        )));
    }
    if rbar > p {
        return Err(FiddleError::InvalidArgument(format!(
            "rbar = {rbar} exceeds the covariate dimension p = {p}"
        )));
    }
    if pretrain.max_abs() == 0.0 {
        return Err(FiddleError::Degenerate("pretraining covariates are all zero".into()));
    }
    let eig = if p > m {
        gram_topk(pretrain, rbar)?
    } else {
        dense_covariance_topk(pretrain, rbar)?
    };
    let mut w = eig.vectors;
    for (j, &lambda) in eig.values.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for i in 0..p {
            w[(i, j)] *= s;
        }
    }
    Ok(DpMatrix {
        w,
        eigvals: eig.values,
    })
}

/// `f̃ᵢ = p⁻¹ Wᵀ xᵢ` for each row of `x`.
pub fn extract_factors(dp: &DpMatrix, x: &Matrix) -> Result<FactorScores> {
    if x.cols() != dp.p() {
        return Err(FiddleError::Shape(format!(
            "covariates have {} columns but W has {} rows",
            x.cols(),
            dp.p()
        )));
    }
    let mut scores = matmul(x, &dp.w)?;
    scores.scale(1.0 / dp.p() as f64);
    Ok(FactorScores { scores })
}

/// Singular values of `H = p⁻¹ WᵀB` via the eigenvalues of `HᵀH`.
pub fn dp_diagnostics(dp: &DpMatrix, b_true: &Matrix) -> Result<DpDiagnostics> {
    if b_true.rows() != dp.p() {
        return Err(FiddleError::Shape(format!(
            "loadings have {} rows but W has {}",
            b_true.rows(),
            dp.p()
        )));
    }
    let mut h = t_matmul(&dp.w, b_true)?;
    h.scale(1.0 / dp.p() as f64);
    let r = h.cols();
    let hth = t_matmul(&h, &h)?;
    let eig = sym_eig_topk(&hth, r)?;
    let sv: Vec<f64> = eig.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    // rank-deficient when r̄ < r
    let nu_min = if h.rows() < r { 0.0 } else { sv.last().copied().unwrap_or(0.0) };
    Ok(DpDiagnostics {
        nu_min,
        nu_max: sv.first().copied().unwrap_or(0.0),
        w_max_abs: dp.w.max_abs(),
        h,
    })
}

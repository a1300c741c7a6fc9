//! Symmetric eigendecomposition by cyclic Jacobi rotations, plus the Gram-matrix route for
//! the leading eigenpairs of `m⁻¹ XᵀX` when `p ≫ m`.

use super::matrix::{matmul_t, t_matmul, Matrix};
use crate::error::{FiddleError, Result};

const MAX_SWEEPS: usize = 100;

/// Leading eigenpairs of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Eigenvalues, descending.
    pub values: Vec<f64>,
    /// `dim × k` matrix whose columns are the eigenvectors.
    pub vectors: Matrix,
    /// Pairs whose eigenvalue is numerically zero and whose vector could not be recovered
    /// (left as a zero column). Only the Gram route produces these.
    pub undetermined: usize,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.column(j)
    }
}

fn check_square_finite(s: &Matrix) -> Result<()> {
    if s.rows() != s.cols() {
        return Err(FiddleError::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if !s.is_finite() {
        return Err(FiddleError::NonFinite("eigensolver input".into()));
    }
    Ok(())
}

/// Flips `v` so its largest-magnitude entry (first on ties) is nonnegative.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Full Jacobi eigendecomposition; returns (values, vectors as columns), unsorted.
fn jacobi(s: &Matrix) -> (Vec<f64>, Matrix) {
    let n = s.rows();
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Rutishauser's stable rotation
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                let tau = sn / (1.0 + c);

                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = a[(r, p)];
                        let arq = a[(r, q)];
                        let new_rp = arp - sn * (arq + tau * arp);
                        let new_rq = arq + sn * (arp - tau * arq);
                        a[(r, p)] = new_rp;
                        a[(p, r)] = new_rp;
                        a[(r, q)] = new_rq;
                        a[(q, r)] = new_rq;
                    }
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp - sn * (vrq + tau * vrp);
                    v[(r, q)] = vrq + sn * (vrp - tau * vrq);
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

fn clamp_tolerance(values: &[f64]) -> f64 {
    let largest = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    1e-10 * largest.max(1.0)
}

/// Top-`topk` eigenpairs of the symmetric matrix `s`, eigenvalues descending.
///
/// Tiny negative eigenvalues produced by rounding (within `1e-10` relative) are clamped to 0.
pub fn sym_eig_topk(s: &Matrix, topk: usize) -> Result<EigenPairs> {
    check_square_finite(s)?;
    let n = s.rows();
    if topk > n {
        return Err(FiddleError::InvalidArgument(format!(
            "requested {topk} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let scale = s.max_abs();
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    if asym > 1e-10 * scale {
        return Err(FiddleError::NotSymmetric { asymmetry: asym });
    }

    let (values, vectors) = jacobi(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));

    let tol = clamp_tolerance(&values);
    let mut out_values = Vec::with_capacity(topk);
    let mut out_vectors = Matrix::zeros(n, topk);
    for (slot, &idx) in order.iter().take(topk).enumerate() {
        let lambda = values[idx];
        out_values.push(if (-tol..0.0).contains(&lambda) { 0.0 } else { lambda });
        let mut v = vectors.column(idx);
        canonical_sign(&mut v);
        out_vectors.set_column(slot, &v);
    }
    Ok(EigenPairs {
        values: out_values,
        vectors: out_vectors,
        undetermined: 0,
    })
}

/// Top-`topk` eigenpairs of the `p × p` matrix `m⁻¹ XᵀX`, computed through the `m × m` Gram
/// matrix `m⁻¹ XXᵀ`.
///
/// Eigenvalues are shared between the two; each eigenvector is recovered as `Xᵀw / ‖Xᵀw‖`.
/// Pairs with a numerically zero eigenvalue get a zero vector and are counted in
/// [`EigenPairs::undetermined`].
pub fn gram_topk(x: &Matrix, topk: usize) -> Result<EigenPairs> {
    let (m, p) = x.shape();
    if topk > m.min(p) {
        return Err(FiddleError::InvalidArgument(format!(
            "requested {topk} eigenpairs but rank of a {m}x{p} design is at most {}",
            m.min(p)
        )));
    }
    if !x.is_finite() {
        return Err(FiddleError::NonFinite("gram_topk input".into()));
    }
    let mut gram = matmul_t(x, x)?;
    gram.scale(1.0 / m as f64);
    let inner = sym_eig_topk(&gram, topk)?;

    let w = &inner.vectors;
    let lifted = t_matmul(x, w)?; // p × topk, column j = Xᵀ w_j
    let leading = inner.values.first().copied().unwrap_or(0.0);
    let mut vectors = Matrix::zeros(p, topk);
    let mut undetermined = 0;
    for j in 0..topk {
        let lambda = inner.values[j];
        let mut v = lifted.column(j);
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if leading <= 0.0 || lambda <= 1e-12 * leading || norm == 0.0 {
            undetermined += 1;
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        canonical_sign(&mut v);
        vectors.set_column(j, &v);
    }
    Ok(EigenPairs {
        values: inner.values,
        vectors,
        undetermined,
    })
}

/// Top-`topk` eigenpairs of `m⁻¹ XᵀX` by forming the `p × p` matrix directly.
pub fn dense_covariance_topk(x: &Matrix, topk: usize) -> Result<EigenPairs> {
    let mut cov = t_matmul(x, x)?;
    cov.scale(1.0 / x.rows().max(1) as f64);
    sym_eig_topk(&cov, topk)
}

use fiddle_core::dgp::{generate, DgpSpec};
use fiddle_core::factor::{build_dp_matrix, dp_diagnostics, extract_factors, split_pretrain};
use fiddle_core::fastnn::{FastNnConfig, FastNnModel, Features, NetMode};
use fiddle_core::numerics::{gram_topk, matmul, sym_eig_topk, Matrix, SeededRng};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn matrix_strategy(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-5.0f64..5.0, r * c).prop_map(move |d| Matrix::from_vec(r, c, d).unwrap())
    })
}

fn symmetric_strategy(max_dim: usize) -> impl Strategy<Value = Matrix> {
    matrix_strategy(max_dim, max_dim).prop_map(|a| {
        let k = a.rows().min(a.cols());
        Matrix::from_fn(k, k, |i, j| a[(i, j)] + a[(j, i)])
    })
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigen_reconstruction(s in symmetric_strategy(10)) {
        let k = s.rows();
        let e = sym_eig_topk(&s, k).unwrap();
        let target = &s;
        let v = &e.vectors;
        let lam = Matrix::from_fn(k, k, |i, j| if i == j { e.values[i] } else { 0.0 });
        let rebuilt = matmul(&matmul(v, &lam).unwrap(), &v.transpose()).unwrap();
        let mut diff = rebuilt.clone();
        diff.axpy(-1.0, target).unwrap();
        prop_assert!(diff.frobenius_norm() <= 1e-8 * target.frobenius_norm().max(1e-300));
        // orthonormal columns
        let gram = matmul(&v.transpose(), v).unwrap();
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[(i, j)] - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn eigenvalues_match_independent_solver(s in symmetric_strategy(10)) {
        let k = s.rows();
        let shift = 1.0 + s.as_slice().iter().map(|v| v.abs()).sum::<f64>();
        let psd = Matrix::from_fn(k, k, |i, j| s[(i, j)] + if i == j { shift } else { 0.0 });
        let ours = sym_eig_topk(&psd, k).unwrap().values;
        let theirs = sorted_desc(SymmetricEigen::new(to_na(&psd)).eigenvalues.iter().copied().collect());
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() <= 1e-9 * shift);
        }
    }

    #[test]
    fn gram_route_matches_independent_dense_eigen(x in matrix_strategy(20, 20)) {
        let (m, p) = x.shape();
        let k = m.min(p);
        let ours = gram_topk(&x, k).unwrap();
        let xa = to_na(&x);
        let cov = xa.transpose() * &xa / m as f64;
        let eig = SymmetricEigen::new(cov.clone());
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let scale = eig.eigenvalues.max().abs().max(1.0);
        for j in 0..k {
            let want = eig.eigenvalues[order[j]].max(0.0);
            prop_assert!((ours.values[j] - want).abs() <= 1e-8 * scale, "value {j}: {} vs {want}", ours.values[j]);
            // eigenvector check only where the eigenvalue is simple and nonzero
            let gap = order.iter().filter(|&&i| i != order[j])
                .map(|&i| (eig.eigenvalues[i] - eig.eigenvalues[order[j]]).abs())
                .fold(f64::INFINITY, f64::min);
            if want > 1e-6 * scale && gap > 1e-4 * scale {
                let v = ours.vector(j);
                let w = eig.eigenvectors.column(order[j]);
                let dot: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
                prop_assert!((dot.abs() - 1.0).abs() < 1e-6, "vector {j}: |dot| = {}", dot.abs());
            }
        }
    }

    #[test]
    fn dp_matrix_entries_are_bounded(x in matrix_strategy(12, 15), rbar in 1usize..5) {
        let rbar = rbar.min(x.rows()).min(x.cols());
        prop_assume!(x.max_abs() > 0.0);
        let dp = build_dp_matrix(&x, rbar).unwrap();
        let m = x.rows() as f64;
        let max_diag = (0..x.cols())
            .map(|j| (0..x.rows()).map(|i| x[(i, j)].powi(2)).sum::<f64>() / m)
            .fold(0.0, f64::max);
        prop_assert!(dp.w.max_abs() <= max_diag.sqrt() * (1.0 + 1e-10) + 1e-12);
        for j in 0..rbar {
            let norm2: f64 = dp.w.column(j).iter().map(|v| v * v).sum();
            prop_assert!((norm2 - dp.eigvals[j]).abs() <= 1e-8 * dp.eigvals[0].max(1.0));
        }
    }

    #[test]
    fn dp_matrix_scales_with_covariates(x in matrix_strategy(8, 12), c in 0.1f64..10.0) {
        prop_assume!(x.max_abs() > 0.1);
        let rbar = 1;
        let base = build_dp_matrix(&x, rbar).unwrap();
        let scaled = build_dp_matrix(&x.scaled(c), rbar).unwrap();
        // a simple leading eigenvalue keeps the eigenvector identified
        prop_assume!(base.eigvals.len() == 1);
        let top2 = sym_eig_topk(&{
            let m = x.rows() as f64;
            let xt = x.transpose();
            matmul(&xt, &x).unwrap().scaled(1.0 / m)
        }, 2.min(x.cols())).unwrap().values;
        prop_assume!(top2.len() < 2 || top2[0] - top2[1] > 1e-6 * top2[0]);
        for (a, b) in base.w.as_slice().iter().zip(scaled.w.as_slice()) {
            prop_assert!((c * a - b).abs() <= 1e-8 * (1.0 + b.abs()) * c.max(1.0));
        }
    }

    #[test]
    fn network_output_is_bounded(seed in 0u64..1000, scale in 0.1f64..1000.0, m in 0.1f64..20.0) {
        let mut rng = SeededRng::new(seed);
        let cfg = FastNnConfig { depth: 2, width: 8, ..FastNnConfig::default() };
        let model = FastNnModel::init(3, Some(6), &cfg, m, &mut rng).unwrap();
        let dense = Matrix::from_fn(5, 3, |_, _| scale * rng.uniform(-1.0, 1.0).unwrap());
        let sparse = Matrix::from_fn(5, 6, |_, _| scale * rng.uniform(-1.0, 1.0).unwrap());
        let out = model.predict(&Features::factor_augmented(dense, sparse).unwrap()).unwrap();
        prop_assert!(out.iter().all(|v| v.abs() <= m));
    }
}

#[test]
fn projection_ignores_estimation_rows() {
    let data = generate(&DgpSpec::new(120, 40, 5)).unwrap().to_dataset();
    let split = split_pretrain(&data, 20, &mut SeededRng::new(3)).unwrap();
    let w = build_dp_matrix(&split.pretrain, 5).unwrap().w;
    // overwrite every estimation row; the same seed picks the same pretraining rows
    let mut altered = data.clone();
    let mut rng = SeededRng::new(8);
    for i in (0..data.n()).filter(|i| !split.pretrain_indices.contains(i)) {
        altered.x.row_mut(i).iter_mut().for_each(|v| *v = rng.uniform(-9.0, 9.0).unwrap());
    }
    let split2 = split_pretrain(&altered, 20, &mut SeededRng::new(3)).unwrap();
    assert_eq!(split2.pretrain_indices, split.pretrain_indices);
    assert_ne!(split2.estimation.x, split.estimation.x);
    assert_eq!(build_dp_matrix(&split2.pretrain, 5).unwrap().w, w);
}

#[test]
fn significance_grows_weakly_with_extra_columns() {
    let d = generate(&DgpSpec::new(300, 200, 17)).unwrap();
    let pre = d.x.select_rows(&(0..50).collect::<Vec<_>>());
    let mut prev = 0.0;
    for rbar in 4..=12 {
        let dp = build_dp_matrix(&pre, rbar).unwrap();
        let nu = dp_diagnostics(&dp, &d.b_true).unwrap().nu_min;
        assert!(nu >= prev - 1e-12, "rbar {rbar}: {nu} < {prev}");
        prev = nu;
    }
}

#[test]
fn factor_scores_translate_with_covariate_shift() {
    // scores are linear in x: shifting x by a vector shifts f̃ by p⁻¹Wᵀ(shift)
    let d = generate(&DgpSpec::new(60, 30, 2)).unwrap();
    let dp = build_dp_matrix(&d.x.select_rows(&(0..20).collect::<Vec<_>>()), 4).unwrap();
    let shift: Vec<f64> = (0..30).map(|j| (j as f64).sin()).collect();
    let mut shifted = d.x.clone();
    for i in 0..shifted.rows() {
        shifted.row_mut(i).iter_mut().zip(&shift).for_each(|(v, s)| *v += s);
    }
    let a = extract_factors(&dp, &d.x).unwrap().scores;
    let b = extract_factors(&dp, &shifted).unwrap().scores;
    let delta = extract_factors(&dp, &Matrix::from_vec(1, 30, shift).unwrap()).unwrap().scores;
    for i in 0..a.rows() {
        for k in 0..4 {
            assert!((b[(i, k)] - a[(i, k)] - delta[(0, k)]).abs() < 1e-12);
        }
    }
}

#[test]
fn raw_mode_has_no_penalty() {
    let cfg = FastNnConfig {
        mode: NetMode::Raw,
        penalty: 5.0,
        ..FastNnConfig::default()
    };
    assert_eq!(cfg.regularization().lambda, 0.0);
}

//! Fast invariant suite: closed-form formula values, analytic versus finite-difference
//! gradients, Gram-route versus dense eigendecomposition, and the doubly-robust identity.

use std::time::Instant;

use serde::Serialize;

use crate::ate::{aipw, truncate_propensity};
use crate::dgp::{generate, sigmoid, trun, DgpSpec};
use crate::error::Result;
use crate::fastnn::{clipped_l1, clipped_l1_subgrad, truncate, FastNnConfig, FastNnModel, Features, NetMode, Regularization};
use crate::numerics::{dense_covariance_topk, derive_seed, gram_topk, Matrix, SeededRng};

/// Signature of an AIPW combiner, so a faulty implementation can be checked.
pub type AipwFn = fn(&[f64], &[u8], &[f64], &[f64], &[f64]) -> Result<f64>;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Cases examined.
    pub cases: usize,
    pub seconds: f64,
    /// First failure, if any.
    pub detail: Option<String>,
}

impl CheckResult {
    fn timed(name: &str, f: impl FnOnce() -> std::result::Result<usize, String>) -> Self {
        let start = Instant::now();
        let out = f();
        let seconds = start.elapsed().as_secs_f64();
        match out {
            Ok(cases) => Self {
                name: name.into(),
                passed: true,
                cases,
                seconds,
                detail: None,
            },
            Err(d) => Self {
                name: name.into(),
                passed: false,
                cases: 0,
                seconds,
                detail: Some(d),
            },
        }
    }

    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!("{status} {:<24} {:>5} cases {:>8.3}s", self.name, self.cases, self.seconds);
        if let Some(d) = &self.detail {
            s.push_str(&format!("  {d}"));
        }
        s
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> std::result::Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{name}: got {got}, want {want}"))
    }
}

fn stringify<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Closed-form values of the penalty, truncation, link and propensity clamp.
pub fn check_formulas() -> CheckResult {
    CheckResult::timed("formula_identities", || {
        let tol = 1e-12;
        let psi = |x| stringify(clipped_l1(x, 0.005));
        let dpsi = |x| stringify(clipped_l1_subgrad(x, 0.005));
        let cases = [
            ("psi(0)", psi(0.0)?, 0.0),
            ("psi(0.01)", psi(0.01)?, 1.0),
            ("psi(0.001)", psi(0.001)?, 0.2),
            ("psi(-0.001)", psi(-0.001)?, 0.2),
            ("dpsi(0)", dpsi(0.0)?, 0.0),
            ("dpsi(0.001)", dpsi(0.001)?, 200.0),
            ("dpsi(-0.001)", dpsi(-0.001)?, -200.0),
            ("dpsi(0.01)", dpsi(0.01)?, 0.0),
            ("trunc5(7)", truncate(&[7.0], 5.0)[0], 5.0),
            ("trunc5(-7)", truncate(&[-7.0], 5.0)[0], -5.0),
            ("trunc5(3.2)", truncate(&[3.2], 5.0)[0], 3.2),
            ("sigmoid(0)", sigmoid(0.0), 0.5),
            ("sigmoid(ln 3)", sigmoid(3f64.ln()), 0.75),
            ("trun(0)", trun(0.0), 0.1),
            ("trun(1)", trun(1.0), 0.9),
            ("pi clamp e^10", stringify(truncate_propensity(&[0.95], 22026))?[0], 1.0 - 1.0 / 22026f64.ln()),
            ("pi clamp interior", stringify(truncate_propensity(&[0.5], 1000))?[0], 0.5),
            ("pi clamp 1000", stringify(truncate_propensity(&[0.99], 1000))?[0], 1.0 - 1.0 / 1000f64.ln()),
        ];
        for (name, got, want) in cases {
            close(name, got, want, tol)?;
        }
        // n cannot equal e¹⁰ exactly; the nearest integer lands within 1e-6 of 0.9
        close("pi clamp near 0.9", stringify(truncate_propensity(&[0.95], 22026))?[0], 0.9, 1e-6)?;
        if truncate(&[-2.0, 0.5, 2.0], 1.0) != [-1.0, 0.5, 1.0] {
            return Err("trunc1 vector".into());
        }
        for x in [-1e300, -50.0, -1.0, 0.0, 1.0, 50.0, 1e300] {
            let v = trun(sigmoid(x));
            if !(0.1..=0.9).contains(&v) {
                return Err(format!("trun(sigmoid({x})) = {v} outside [0.1, 0.9]"));
            }
        }
        Ok(cases.len() + 8)
    })
}

/// A small random network, batch and regularization for derivative checks.
#[derive(Debug, Clone)]
pub struct GradientCase {
    pub model: FastNnModel,
    pub features: Features,
    pub targets: Vec<f64>,
    pub reg: Regularization,
}

/// Draws a case whose every ReLU, truncation and penalty kink is at least `margin` away.
pub fn gradient_case(seed: u64, margin: f64) -> GradientCase {
    (0u64..)
        .map(|attempt| draw_case(derive_seed(seed, attempt)))
        .find(|c| kink_margin(c) >= margin)
        .expect("unbounded search")
}

fn draw_case(seed: u64) -> GradientCase {
    let mut rng = SeededRng::new(seed);
    let mut pick = |lo: u64, span: u64| (lo + rng.next_u64() % span) as usize;
    let mode = if pick(0, 4) == 0 { NetMode::Raw } else { NetMode::FactorAugmented };
    let (depth, width, dense_dim, p, batch) = (pick(1, 3), pick(2, 4), pick(1, 3), pick(2, 6), pick(1, 6));
    let cfg = FastNnConfig {
        depth,
        width,
        mode,
        seed,
        ..FastNnConfig::default()
    };
    let sparse = (mode == NetMode::FactorAugmented).then_some(p);
    let trunc = rng.uniform_unchecked(0.5, 3.0);
    let mut model = FastNnModel::init(dense_dim, sparse, &cfg, trunc, &mut rng).expect("valid shapes");
    for layer in &mut model.layers {
        layer.bias.iter_mut().for_each(|b| *b = rng.uniform_unchecked(-0.3, 0.3));
    }
    let mut draw = |rows, cols| Matrix::from_fn(rows, cols, |_, _| rng.uniform_unchecked(-1.5, 1.5));
    let dense = draw(batch, dense_dim);
    let features = match mode {
        NetMode::FactorAugmented => Features {
            dense,
            sparse: Some(draw(batch, p)),
        },
        NetMode::Raw => Features::raw(dense),
    };
    let targets = (0..batch).map(|_| rng.uniform_unchecked(-2.0, 2.0)).collect();
    // τ comparable to |Θ| so both penalty regimes are exercised
    let reg = Regularization {
        lambda: if mode == NetMode::Raw { 0.0 } else { rng.uniform_unchecked(0.0, 0.5) },
        tau: rng.uniform_unchecked(0.1, 1.0),
        weight_decay: rng.uniform_unchecked(0.0, 0.2),
    };
    GradientCase {
        model,
        features,
        targets,
        reg,
    }
}

/// Smallest distance from any non-differentiable point of the loss.
pub fn kink_margin(case: &GradientCase) -> f64 {
    let model = &case.model;
    let m = model.trunc_level;
    let mut margin = f64::INFINITY;
    if let Some(theta) = &model.theta {
        for &t in theta.as_slice() {
            margin = margin.min(t.abs()).min((t.abs() - case.reg.tau).abs());
        }
    }
    let depth = model.layers.len() - 1;
    for i in 0..case.features.n() {
        let mut h: Vec<f64> = case.features.dense.row(i).to_vec();
        if let (Some(theta), Some(x)) = (&model.theta, &case.features.sparse) {
            for k in 0..theta.cols() {
                let z: f64 = (0..theta.rows()).map(|j| theta[(j, k)] * x[(i, j)]).sum();
                margin = margin.min((z.abs() - m).abs());
                h.push(z.clamp(-m, m));
            }
        }
        for (l, layer) in model.layers.iter().enumerate() {
            let z: Vec<f64> = (0..layer.weight.rows())
                .map(|r| layer.bias[r] + layer.weight.row(r).iter().zip(&h).map(|(w, v)| w * v).sum::<f64>())
                .collect();
            if l < depth {
                z.iter().for_each(|v| margin = margin.min(v.abs()));
                h = z.into_iter().map(|v| v.max(0.0)).collect();
            } else {
                margin = margin.min((z[0].abs() - m).abs());
            }
        }
    }
    margin
}

/// Compares the analytic gradient with central differences at step `h`; returns coordinates checked.
pub fn compare_gradient(case: &GradientCase, h: f64, rel_tol: f64) -> std::result::Result<usize, String> {
    let analytic = stringify(case.model.grad(&case.features, &case.targets, &case.reg))?;
    let mut model = case.model.clone();
    let loss = |m: &FastNnModel| stringify(m.loss(&case.features, &case.targets, &case.reg));
    let mut checked = 0;
    for (block, grads) in analytic.slices().iter().enumerate() {
        for (idx, &ga) in grads.iter().enumerate() {
            let orig = model.param_slices()[block][idx];
            model.param_slices_mut()[block][idx] = orig + h;
            let up = loss(&model)?;
            model.param_slices_mut()[block][idx] = orig - h;
            let down = loss(&model)?;
            model.param_slices_mut()[block][idx] = orig;
            let gn = (up - down) / (2.0 * h);
            if (ga - gn).abs() > rel_tol * ga.abs().max(gn.abs()).max(1e-5) {
                return Err(format!("block {block} index {idx}: analytic {ga:.12e}, numeric {gn:.12e}"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// `count` random finite-difference gradient checks at relative tolerance `rel_tol`.
pub fn check_gradients(count: usize, rel_tol: f64) -> CheckResult {
    CheckResult::timed("gradient_finite_diff", || {
        for k in 0..count {
            let case = gradient_case(derive_seed(0x6ad, k as u64), 1e-3);
            compare_gradient(&case, 1e-6, rel_tol).map_err(|e| format!("case {k}: {e}"))?;
        }
        Ok(count)
    })
}

/// Largest eigenvalue and eigenvector discrepancies between the Gram route and the dense route.
pub fn gram_discrepancy(x: &Matrix) -> Result<(f64, f64)> {
    let k = x.rows().min(x.cols());
    let gram = gram_topk(x, k)?;
    let dense = dense_covariance_topk(x, k)?;
    let scale = dense.values[0].abs().max(1.0);
    let mut val_err: f64 = 0.0;
    let mut vec_err: f64 = 0.0;
    for j in 0..k {
        val_err = val_err.max((gram.values[j] - dense.values[j]).abs() / scale);
        // eigenvectors are only identified for simple, nonzero eigenvalues
        let gap = [j.checked_sub(1), Some(j + 1)]
            .into_iter()
            .flatten()
            .filter(|&i| i < k)
            .map(|i| (dense.values[i] - dense.values[j]).abs())
            .fold(f64::INFINITY, f64::min);
        if dense.values[j] <= 1e-8 * scale || gap <= 1e-6 * scale {
            continue;
        }
        let (a, b) = (gram.vector(j), dense.vector(j));
        let dot: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
        let sign = if dot < 0.0 { -1.0 } else { 1.0 };
        for (u, v) in a.iter().zip(&b) {
            vec_err = vec_err.max((u - sign * v).abs());
        }
    }
    Ok((val_err, vec_err))
}

/// `count` random matrices with `m, p ≤ 20`: eigenvalues within 1e-8, eigenvectors within 1e-6.
pub fn check_gram(count: usize) -> CheckResult {
    CheckResult::timed("gram_equivalence", || {
        for k in 0..count {
            let mut rng = SeededRng::new(derive_seed(0x67a, k as u64));
            let m = 1 + (rng.next_u64() % 20) as usize;
            let p = 1 + (rng.next_u64() % 20) as usize;
            let x = Matrix::from_fn(m, p, |_, _| rng.normal(0.0, 1.0).expect("sd > 0"));
            let (ve, we) = stringify(gram_discrepancy(&x))?;
            if ve > 1e-8 || we > 1e-6 {
                return Err(format!("case {k} ({m}x{p}): eigenvalue error {ve:e}, eigenvector error {we:e}"));
            }
        }
        Ok(count)
    })
}

/// With noiseless outcomes and exact outcome nuisances, the AIPW estimate equals the sample
/// mean of `μ₁* − μ₀*` for any propensity vector.
pub fn check_doubly_robust(count: usize, combiner: AipwFn) -> CheckResult {
    CheckResult::timed("doubly_robust_identity", || {
        let spec = DgpSpec {
            noise_sd: 0.0,
            ..DgpSpec::new(500, 20, 0xd0)
        };
        let data = stringify(generate(&spec))?;
        let target = data.sample_ate();
        let mut rng = SeededRng::new(0xd1);
        for k in 0..count {
            let pi: Vec<f64> = (0..data.n()).map(|_| rng.uniform_unchecked(0.05, 0.95)).collect();
            let est = stringify(combiner(&data.y, &data.treatment, &data.mu0_star, &data.mu1_star, &pi))?;
            if (est - target).abs() > 1e-10 * target.abs() {
                return Err(format!("draw {k}: estimate {est}, mean effect {target}"));
            }
        }
        Ok(count)
    })
}

/// Everything the `selftest` subcommand runs.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check_formulas(),
        check_gradients(100, 1e-4),
        check_gram(50),
        check_doubly_robust(20, aipw),
    ]
}

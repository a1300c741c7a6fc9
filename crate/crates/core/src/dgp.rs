//! Synthetic factor-model benchmark with full oracle access.
//!
//! `x = Bf + u` with `bᵢⱼ ~ U(−√3, √3)`, `f, u ~ U(−1, 1)`, `r = 4` factors, and
//!
//! ```text
//! π*(f, u) = trun(σ(sin f₁ + tan f₂ + f₃ + f₄ + u₁ + … + u₅))
//! μ*(f, u) = 10 + f₁ + f₂f₃ + sin f₄ + log(5 + u₁ + u₂u₃) + tan u₄ + u₅
//! τ*(f, u) = 5 + f₁ + f₂ + sin f₃ + tan f₄ + u₁ + u₂ + sin(u₃ + u₄) + tan u₅
//! y = μ* + T·τ* + ε,  ε ~ N(0, 1/4)
//! ```
//!
//! with `σ` the logistic function and `trun(z) = 0.8z + 0.1`. The ATE is `E[τ*] = 5`.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, OracleColumns};
use crate::error::{FiddleError, Result};
use crate::numerics::{matmul_t, Matrix, SeededRng};

pub const TRUE_ATE: f64 = 5.0;

/// Number of idiosyncratic coordinates the response functions depend on.
pub const ACTIVE_IDIOSYNCRATIC: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_r() -> usize {
    4
}

fn default_noise_sd() -> f64 {
    0.5
}

impl DgpSpec {
    pub fn new(n: usize, p: usize, seed: u64) -> Self {
        Self {
            n,
            p,
            r: default_r(),
            noise_sd: default_noise_sd(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(FiddleError::InvalidArgument("n must be >= 1".into()));
        }
        if self.r < 4 {
            return Err(FiddleError::InvalidArgument(format!(
                "the response functions use 4 factors, got r = {}",
                self.r
            )));
        }
        if self.p < self.r || self.p < ACTIVE_IDIOSYNCRATIC {
            return Err(FiddleError::InvalidArgument(format!(
                "p = {} must be at least r = {} and at least {ACTIVE_IDIOSYNCRATIC}",
                self.p, self.r
            )));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(FiddleError::InvalidArgument("noise_sd must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `trun(z) = 0.8z + 0.1`, mapping `(0, 1)` into `(0.1, 0.9)`.
pub fn trun(z: f64) -> f64 {
    0.8 * z + 0.1
}

/// Response and propensity functions of a simulation design, in terms of the latent factors
/// `f` and the leading idiosyncratic coordinates `u`.
pub trait Scenario: Sync {
    fn propensity(&self, f: &[f64], u: &[f64]) -> f64;
    /// Control response `μ₀*`.
    fn baseline(&self, f: &[f64], u: &[f64]) -> f64;
    /// Treatment effect `τ* = μ₁* − μ₀*`.
    fn effect(&self, f: &[f64], u: &[f64]) -> f64;
    fn true_ate(&self) -> f64;
}

/// The nonlinear factor design above.
#[derive(Debug, Clone, Copy, Default)]
pub struct FactorScenario;

impl Scenario for FactorScenario {
    fn propensity(&self, f: &[f64], u: &[f64]) -> f64 {
        let s: f64 = u[..ACTIVE_IDIOSYNCRATIC].iter().sum();
        trun(sigmoid(f[0].sin() + f[1].tan() + f[2] + f[3] + s))
    }

    fn baseline(&self, f: &[f64], u: &[f64]) -> f64 {
        10.0 + f[0] + f[1] * f[2] + f[3].sin() + (5.0 + u[0] + u[1] * u[2]).ln() + u[3].tan() + u[4]
    }

    fn effect(&self, f: &[f64], u: &[f64]) -> f64 {
        5.0 + f[0] + f[1] + f[2].sin() + f[3].tan() + u[0] + u[1] + (u[2] + u[3]).sin() + u[4].tan()
    }

    fn true_ate(&self) -> f64 {
        TRUE_ATE
    }
}

/// Constant nuisance functions; handy for checking the Monte Carlo helpers.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScenario {
    pub baseline: f64,
    pub effect: f64,
    pub propensity: f64,
}

impl Scenario for ConstantScenario {
    fn propensity(&self, _: &[f64], _: &[f64]) -> f64 {
        self.propensity
    }

    fn baseline(&self, _: &[f64], _: &[f64]) -> f64 {
        self.baseline
    }

    fn effect(&self, _: &[f64], _: &[f64]) -> f64 {
        self.effect
    }

    fn true_ate(&self) -> f64 {
        self.effect
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub spec: DgpSpec,
    pub x: Matrix,
    pub treatment: Vec<u8>,
    pub y: Vec<f64>,
    pub f_true: Matrix,
    pub u_true: Matrix,
    pub b_true: Matrix,
    pub mu0_star: Vec<f64>,
    pub mu1_star: Vec<f64>,
    pub pi_star: Vec<f64>,
    pub tau_star: Vec<f64>,
}

impl SyntheticDataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Observable data plus oracle columns.
    pub fn to_dataset(&self) -> Dataset {
        Dataset {
            y: self.y.clone(),
            treatment: self.treatment.clone(),
            x: self.x.clone(),
            oracle: Some(OracleColumns {
                pi_star: self.pi_star.clone(),
                mu0_star: Some(self.mu0_star.clone()),
                mu1_star: Some(self.mu1_star.clone()),
            }),
        }
    }

    /// Sample mean of `τ*(xᵢ)`.
    pub fn sample_ate(&self) -> f64 {
        self.tau_star.iter().sum::<f64>() / self.n() as f64
    }
}

pub fn generate(spec: &DgpSpec) -> Result<SyntheticDataset> {
    generate_with(spec, &FactorScenario)
}

/// Draws a fresh dataset (including a fresh loading matrix `B`) from `spec.seed`.
pub fn generate_with(spec: &DgpSpec, scenario: &dyn Scenario) -> Result<SyntheticDataset> {
    spec.validate()?;
    let DgpSpec { n, p, r, noise_sd, .. } = *spec;
    let mut rng = SeededRng::new(spec.seed);
    let bound = 3f64.sqrt();
    let b_true = Matrix::from_fn(p, r, |_, _| rng.uniform_unchecked(-bound, bound));

    let mut f_true = Matrix::zeros(n, r);
    let mut u_true = Matrix::zeros(n, p);
    let mut treatment = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut mu0_star = Vec::with_capacity(n);
    let mut mu1_star = Vec::with_capacity(n);
    let mut pi_star = Vec::with_capacity(n);
    let mut tau_star = Vec::with_capacity(n);
    for i in 0..n {
        f_true.row_mut(i).iter_mut().for_each(|v| *v = rng.uniform_unchecked(-1.0, 1.0));
        u_true.row_mut(i).iter_mut().for_each(|v| *v = rng.uniform_unchecked(-1.0, 1.0));
        let f = f_true.row(i);
        let u = u_true.row(i);
        // tan is only ever evaluated on [-1, 1]
        debug_assert!(f.iter().chain(u).all(|v| v.abs() <= 1.0));
        let pi = scenario.propensity(f, u);
        let mu0 = scenario.baseline(f, u);
        let tau = scenario.effect(f, u);
        let t = rng.bernoulli(pi);
        let eps = rng.normal(0.0, noise_sd)?;
        treatment.push(u8::from(t));
        y.push(mu0 + if t { tau } else { 0.0 } + eps);
        mu0_star.push(mu0);
        mu1_star.push(mu0 + tau);
        pi_star.push(pi);
        tau_star.push(tau);
    }

    let mut x = matmul_t(&f_true, &b_true)?;
    x.axpy(1.0, &u_true)?;
    Ok(SyntheticDataset {
        spec: *spec,
        x,
        treatment,
        y,
        f_true,
        u_true,
        b_true,
        mu0_star,
        mu1_star,
        pi_star,
        tau_star,
    })
}

fn mc_average(spec: &DgpSpec, draws: usize, mut term: impl FnMut(&[f64], &[f64]) -> f64) -> Result<f64> {
    if draws < 1 {
        return Err(FiddleError::InvalidArgument("draws must be >= 1".into()));
    }
    let mut rng = SeededRng::new(spec.seed);
    let mut f = vec![0.0; spec.r.max(4)];
    let mut u = vec![0.0; ACTIVE_IDIOSYNCRATIC];
    let mut total = 0.0;
    for _ in 0..draws {
        f.iter_mut().for_each(|v| *v = rng.uniform_unchecked(-1.0, 1.0));
        u.iter_mut().for_each(|v| *v = rng.uniform_unchecked(-1.0, 1.0));
        total += term(&f, &u);
    }
    Ok(total / draws as f64)
}

/// Monte Carlo estimate of `E[τ*(f, u)]`.
pub fn true_ate_mc(spec: &DgpSpec, draws: usize) -> Result<f64> {
    true_ate_mc_with(spec, draws, &FactorScenario)
}

pub fn true_ate_mc_with(spec: &DgpSpec, draws: usize, scenario: &dyn Scenario) -> Result<f64> {
    mc_average(spec, draws, |f, u| scenario.effect(f, u))
}

/// Monte Carlo estimate of the efficiency bound
/// `σ² = E[(τ* − μ)² + Var(ε)/π* + Var(ε)/(1 − π*)]`.
pub fn efficiency_bound_mc(spec: &DgpSpec, draws: usize) -> Result<f64> {
    efficiency_bound_mc_with(spec, draws, &FactorScenario)
}

pub fn efficiency_bound_mc_with(spec: &DgpSpec, draws: usize, scenario: &dyn Scenario) -> Result<f64> {
    let ate = scenario.true_ate();
    let var = spec.noise_sd * spec.noise_sd;
    mc_average(spec, draws, |f, u| {
        let pi = scenario.propensity(f, u);
        let d = scenario.effect(f, u) - ate;
        d * d + var / pi + var / (1.0 - pi)
    })
}

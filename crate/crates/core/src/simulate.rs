//! Replication benchmark over an `(n, p)` grid.
//!
//! Every replication draws one synthetic dataset and runs all requested methods on it, so
//! methods are compared on identical data. Replication `k` uses seed `derive_seed(base, k)`
//! for both data generation and network initialization.
//!
//! `rmse = √(mean eₖ²)` with `eₖ = estimate − 5`; `se = sd(eₖ²) / (2·rmse·√reps)` (delta method).

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ate::estimate;
use crate::config::{Method, PipelineConfig};
use crate::dgp::{generate, DgpSpec, TRUE_ATE};
use crate::error::{FiddleError, Result};
use crate::numerics::derive_seed;

/// Environment variable capping replication parallelism.
pub const THREADS_ENV: &str = "FIDDLE_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub rmse: f64,
    pub se: f64,
    pub reps: usize,
    /// Summed fit time over replications, seconds.
    pub wallclock: f64,
}

/// One method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub rep: usize,
    pub seed: u64,
    pub estimate: f64,
    pub ci: [f64; 2],
    pub seconds: f64,
}

impl RepOutcome {
    pub fn error(&self) -> f64 {
        self.estimate - TRUE_ATE
    }

    pub fn covers_truth(&self) -> bool {
        self.ci[0] <= TRUE_ATE && TRUE_ATE <= self.ci[1]
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub grid: Vec<(usize, usize)>,
    pub methods: Vec<Method>,
    pub reps: usize,
    /// First replication index; lets disjoint seed ranges be run separately and pooled.
    pub first_rep: usize,
    pub base_seed: u64,
    /// Template for the generator; `n`, `p` and `seed` are overwritten per cell and replication.
    pub dgp: DgpSpec,
    /// Method-independent settings; `method` and `seed` are overwritten per run.
    pub config: PipelineConfig,
    /// `None` reads `FIDDLE_THREADS`, falling back to rayon's default.
    pub threads: Option<usize>,
}

impl BenchmarkSpec {
    pub fn new(config: PipelineConfig, grid: Vec<(usize, usize)>, methods: Vec<Method>) -> Self {
        let dgp = config.dgp.unwrap_or_else(|| DgpSpec::new(1, 1, 0));
        Self {
            grid,
            methods,
            reps: config.reps,
            first_rep: 0,
            base_seed: config.seed,
            dgp,
            config,
            threads: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.methods.is_empty() || self.reps == 0 {
            return Err(FiddleError::InvalidArgument(
                "benchmark needs a non-empty grid, at least one method and reps >= 1".into(),
            ));
        }
        for &(n, p) in &self.grid {
            DgpSpec { n, p, ..self.dgp }.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub outcomes: Vec<RepOutcome>,
    pub config_digest: String,
}

/// `(rmse, se)` of the errors under the delta-method convention above.
pub fn rmse_and_se(errors: &[f64]) -> (f64, f64) {
    let k = errors.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let mse = sq.iter().sum::<f64>() / k as f64;
    let rmse = mse.sqrt();
    if k < 2 || rmse == 0.0 {
        return (rmse, 0.0);
    }
    let var = sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (k - 1) as f64;
    (rmse, var.sqrt() / (2.0 * rmse * (k as f64).sqrt()))
}

fn thread_count(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| std::env::var(THREADS_ENV).ok()?.trim().parse().ok()).filter(|&t| t > 0)
}

fn run_replication(spec: &BenchmarkSpec, n: usize, p: usize, rep: usize) -> Result<Vec<RepOutcome>> {
    let seed = derive_seed(spec.base_seed, rep as u64);
    let data = generate(&DgpSpec { n, p, seed, ..spec.dgp })?.to_dataset();
    spec.methods
        .iter()
        .map(|&method| {
            let config = PipelineConfig {
                method,
                seed,
                ..spec.config.clone()
            };
            let start = Instant::now();
            let result = estimate(&data, &config)?;
            Ok(RepOutcome {
                method,
                n,
                p,
                rep,
                seed,
                estimate: result.estimate,
                ci: result.ci,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Runs every `(n, p, rep)` job, in parallel up to the configured thread count.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkReport> {
    spec.validate()?;
    let jobs: Vec<(usize, usize, usize)> = spec
        .grid
        .iter()
        .flat_map(|&(n, p)| (spec.first_rep..spec.first_rep + spec.reps).map(move |r| (n, p, r)))
        .collect();
    let run = || -> Result<Vec<Vec<RepOutcome>>> {
        jobs.par_iter().map(|&(n, p, r)| run_replication(spec, n, p, r)).collect()
    };
    let nested = match thread_count(spec.threads) {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| FiddleError::InvalidArgument(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let outcomes: Vec<RepOutcome> = nested.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &(n, p) in &spec.grid {
        for &method in &spec.methods {
            let cell: Vec<&RepOutcome> = outcomes
                .iter()
                .filter(|o| o.n == n && o.p == p && o.method == method)
                .collect();
            let errors: Vec<f64> = cell.iter().map(|o| o.error()).collect();
            let (rmse, se) = rmse_and_se(&errors);
            rows.push(BenchmarkRow {
                method,
                n,
                p,
                rmse,
                se,
                reps: cell.len(),
                wallclock: cell.iter().map(|o| o.seconds).sum(),
            });
        }
    }
    Ok(BenchmarkReport {
        rows,
        outcomes,
        config_digest: spec.config.digest(),
    })
}

pub fn write_rows_csv<W: Write>(rows: &[BenchmarkRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "n", "p", "rmse", "se", "reps", "wallclock"])
        .map_err(|e| FiddleError::CsvFormat(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.n.to_string(),
            r.p.to_string(),
            format!("{:.6}", r.rmse),
            format!("{:.6}", r.se),
            r.reps.to_string(),
            format!("{:.3}", r.wallclock),
        ])
        .map_err(|e| FiddleError::CsvFormat(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `"n=2000,5000;p=10,500"` into the Cartesian product of sizes.
pub fn parse_grid(text: &str) -> Result<Vec<(usize, usize)>> {
    let bad = |m: String| FiddleError::InvalidArgument(format!("grid {text:?}: {m}"));
    let (mut ns, mut ps) = (None, None);
    for part in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, values) = part.split_once('=').ok_or_else(|| bad(format!("expected key=values in {part:?}")))?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<usize>().map_err(|e| bad(format!("{v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        match key.trim() {
            "n" => ns = Some(values),
            "p" => ps = Some(values),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    let (ns, ps) = (ns.ok_or_else(|| bad("missing n".into()))?, ps.ok_or_else(|| bad("missing p".into()))?);
    Ok(ns.iter().flat_map(|&n| ps.iter().map(move |&p| (n, p))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_of_single_error_is_its_magnitude() {
        let (rmse, se) = rmse_and_se(&[-0.3]);
        assert!((rmse - 0.3).abs() < 1e-15);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn delta_method_se() {
        let e = [1.0, -1.0, 2.0, 0.0];
        let (rmse, se) = rmse_and_se(&e);
        // squared errors 1, 1, 4, 0: mean 1.5, sample sd √3
        assert!((rmse - 1.5f64.sqrt()).abs() < 1e-15);
        assert!((se - 3f64.sqrt() / (2.0 * 1.5f64.sqrt() * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("n=100,200;p=10").unwrap(), vec![(100, 10), (200, 10)]);
        assert_eq!(parse_grid(" p=5 ; n=7 ").unwrap(), vec![(7, 5)]);
        assert!(parse_grid("n=100").is_err());
        assert!(parse_grid("n=1;p=x").is_err());
        assert!(parse_grid("n=1;q=2").is_err());
    }

    fn oracle_spec(reps: usize, noise: f64) -> BenchmarkSpec {
        let mut spec = BenchmarkSpec::new(
            PipelineConfig::default(),
            vec![(300, 20)],
            vec![Method::OracleAipw, Method::OracleIpw],
        );
        spec.reps = reps;
        spec.dgp.noise_sd = noise;
        spec.threads = Some(1);
        spec
    }

    #[test]
    fn single_rep_rmse_equals_error() {
        let report = run_benchmark(&oracle_spec(1, 0.0)).unwrap();
        for row in &report.rows {
            let o = report.outcomes.iter().find(|o| o.method == row.method).unwrap();
            assert!((row.rmse - o.error().abs()).abs() < 1e-14);
            assert_eq!(row.reps, 1);
        }
    }

    #[test]
    fn pooled_disjoint_runs_match_combined_run() {
        let full = run_benchmark(&oracle_spec(6, 0.5)).unwrap();
        let mut first = oracle_spec(3, 0.5);
        let mut second = oracle_spec(3, 0.5);
        second.first_rep = 3;
        first.threads = Some(2);
        let (a, b) = (run_benchmark(&first).unwrap(), run_benchmark(&second).unwrap());
        let pooled: Vec<f64> = a
            .outcomes
            .iter()
            .chain(&b.outcomes)
            .filter(|o| o.method == Method::OracleAipw)
            .map(RepOutcome::error)
            .collect();
        let combined = full.rows.iter().find(|r| r.method == Method::OracleAipw).unwrap();
        assert!((rmse_and_se(&pooled).0 - combined.rmse).abs() < 1e-14);
    }

    #[test]
    fn csv_columns() {
        let report = run_benchmark(&oracle_spec(2, 0.5)).unwrap();
        let mut buf = Vec::new();
        write_rows_csv(&report.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,n,p,rmse,se,reps,wallclock\n"));
        assert_eq!(text.lines().count(), 3);
    }
}

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fiddle_core::data::export_csv;
use fiddle_core::dgp::generate;
use fiddle_core::simulate::{parse_grid, run_benchmark, write_rows_csv, BenchmarkSpec};
use fiddle_core::{estimate, load_csv, selftest, DgpSpec, Method, PipelineConfig, Preset};

#[derive(Parser)]
#[command(name = "fiddle", version, about = "Average treatment effects with factor-augmented sparse networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replication benchmark on synthetic data over an (n, p) grid.
    Simulate(SimulateArgs),
    /// Estimate the ATE on a CSV dataset and print the result as JSON.
    Fit(FitArgs),
    /// Write one synthetic dataset (with oracle columns) to CSV.
    ExportDgp(ExportArgs),
    /// Run the fast invariant suite.
    Selftest,
}

/// Configuration sources shared by `fit` and `simulate`. Flags override file values.
#[derive(Args)]
struct ConfigArgs {
    /// JSON document mirroring the pipeline configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named hyperparameter set: `paper` (default values) or `desk` (N=128, 60 epochs, 20 reps).
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Fixed penalty weight instead of the log(p)/n rule.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    m_pretrain: Option<usize>,
    #[arg(long)]
    rbar: Option<usize>,
    /// Fit raw-covariate networks without the factor step.
    #[arg(long)]
    low_dimensional: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match (&self.config, self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                PipelineConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            (None, Some(p)) => PipelineConfig::preset(p),
            (None, None) => PipelineConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag {
                    $field = v;
                }
            };
        }
        set!(c.seed, self.seed);
        set!(c.net.depth, self.depth);
        set!(c.net.width, self.width);
        set!(c.net.epochs, self.epochs);
        set!(c.net.batch_size, self.batch_size);
        set!(c.net.learning_rate, self.learning_rate);
        set!(c.m_pretrain, self.m_pretrain);
        set!(c.rbar, self.rbar);
        if self.lambda.is_some() {
            c.net.lambda = self.lambda;
        }
        c.low_dimensional |= self.low_dimensional;
        Ok(c)
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    method: Option<Method>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Sizes as `n=2000,5000;p=10,500`; defaults to the config's dgp, else `n=2000;p=500`.
    #[arg(long)]
    grid: Option<String>,
    /// Methods to compare (comma separated); defaults to all four.
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long)]
    reps: Option<usize>,
    /// Results CSV; a JSON file with per-replication outcomes is written alongside.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    noise_sd: f64,
    #[arg(long)]
    out: PathBuf,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run_fit(args: &FitArgs) -> Result<()> {
    let mut config = args.cfg.resolve()?;
    if let Some(m) = args.method {
        config.method = m;
    }
    config.validate()?;
    let data = load_csv(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    let result = estimate(&data, &config).with_context(|| format!("{} fit failed", config.method))?;
    write_output(args.out.as_deref(), &(result.to_json()? + "\n"))
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let mut config = args.cfg.resolve()?;
    if let Some(r) = args.reps {
        config.reps = r;
    }
    config.validate()?;
    let grid = match (&args.grid, &config.dgp) {
        (Some(g), _) => parse_grid(g)?,
        (None, Some(d)) => vec![(d.n, d.p)],
        (None, None) => vec![(2000, 500)],
    };
    let methods = if args.method.is_empty() { Method::ALL.to_vec() } else { args.method.clone() };
    let spec = BenchmarkSpec::new(config, grid, methods);
    let report = run_benchmark(&spec)?;

    let mut table = Vec::new();
    write_rows_csv(&report.rows, &mut table)?;
    let table = String::from_utf8(table)?;
    match &args.out {
        Some(path) => {
            fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?;
            let json_path = path.with_extension("json");
            fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")
                .with_context(|| format!("writing {}", json_path.display()))?;
            eprintln!("wrote {} and {}", path.display(), json_path.display());
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn run_export(args: &ExportArgs) -> Result<()> {
    let spec = DgpSpec {
        noise_sd: args.noise_sd,
        ..DgpSpec::new(args.n, args.p, args.seed)
    };
    let data = generate(&spec)?;
    export_csv(&data.to_dataset(), &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn run_selftest() -> Result<bool> {
    let results = selftest::run_all();
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        Ok(true)
    } else {
        eprintln!("failed: {}", failed.join(", "));
        Ok(false)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Fit(a) => run_fit(a).map(|_| true),
        Command::Simulate(a) => run_simulate(a).map(|_| true),
        Command::ExportDgp(a) => run_export(a).map(|_| true),
        Command::Selftest => run_selftest(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

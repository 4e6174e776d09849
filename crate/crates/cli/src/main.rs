//! `oscnorm`: evaluate oscillation norms of grid functions and run the
//! verification suites.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use oscnorm::rearrange::{llogl, weak_lp};
use oscnorm::verify::{load_function, run_suite, save_json, Generator, Suite, SuiteConfig, SuiteReport};
use oscnorm::{
    fractional_maximal, garo_norm, packing_sup_norm, sparse_norm_bounds, sparse_sup_exhaustive, Grid, Params,
};

#[derive(Parser)]
#[command(name = "oscnorm", version, about = "Dyadic oscillation norms on grid functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one functional of a grid function and print a JSON report.
    Compute(ComputeArgs),
    /// Run a verification suite and write its report.
    Verify(VerifyArgs),
    /// Print the dyadic fractional maximal function of a grid function.
    Maximal(MaximalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    Jn,
    Sjn,
    V,
    Sv,
    Svt,
    Garo,
    Bmo,
    Weaklp,
    Llogl,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Mode {
    /// Exact supremum; sparse norms enumerate families and need a small grid.
    Exact,
    /// Certified interval for sparse norms at any size.
    Bounds,
}

#[derive(clap::Args)]
struct ComputeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    norm: Norm,
    /// Outer exponent; `inf` is accepted.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Polynomials of degree at most k - 1.
    #[arg(long, default_value_t = 1)]
    k: u32,
    #[arg(long, default_value_t = 1)]
    q: u32,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long)]
    suite: String,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated outer exponents.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    q: Option<u32>,
    /// Comma-separated fractional orders.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// uniform-iid, step, log-singularity, indicator or custom-file:PATH.
    #[arg(long)]
    generator: Option<String>,
    /// JSON report path.
    #[arg(long)]
    out: PathBuf,
    /// Also write per-trial values as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(clap::Args)]
struct MaximalArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
}

fn load(path: &Path) -> Result<Grid> {
    load_function(path).with_context(|| format!("reading {}", path.display()))
}

fn compute(args: &ComputeArgs) -> Result<serde_json::Value> {
    let f = load(&args.input)?;
    let (p, k, q, lambda) = (args.p, args.k, args.q, args.lambda);
    let sparse = |params: Params| match args.mode {
        Mode::Exact => sparse_sup_exhaustive(&f, &params),
        Mode::Bounds => sparse_norm_bounds(&f, &params),
    };
    let report = match args.norm {
        Norm::Jn => packing_sup_norm(&f, &Params::jn(p))?,
        Norm::Bmo => packing_sup_norm(&f, &Params::bmo())?,
        Norm::V => packing_sup_norm(&f, &Params::v(k, q, lambda, p))?,
        Norm::Sjn => sparse(Params::sjn(p))?,
        Norm::Sv => sparse(Params::sv(k, q, lambda, p))?,
        Norm::Svt => sparse(Params::svt(f.dim(), k, q, lambda, p))?,
        Norm::Garo => garo_norm(&f, p)?,
        Norm::Weaklp => return Ok(json!({ "norm": "weaklp", "p": p, "value": weak_lp(&f, p)? })),
        Norm::Llogl => return Ok(json!({ "norm": "llogl", "value": llogl(&f) })),
    };
    Ok(serde_json::to_value(&report)?)
}

fn write_csv(report: &SuiteReport, path: &Path) -> Result<()> {
    let mut keys: Vec<&String> = report.rows.iter().flat_map(|r| r.values.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["trial".to_string(), "seed".to_string()];
    header.extend(keys.iter().map(|k| k.to_string()));
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec = vec![row.trial.to_string(), row.seed.to_string()];
        rec.extend(
            keys.iter()
                .map(|k| row.values.get(*k).map_or(String::new(), |v| format!("{v:e}"))),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let suite: Suite = args.suite.parse()?;
    let mut cfg = SuiteConfig::new(suite);
    if let Some(v) = args.dim {
        cfg.dimension = v;
    }
    if let Some(v) = args.depth {
        cfg.depth = v;
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.p {
        cfg.p = v.clone();
    }
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if let Some(v) = args.q {
        cfg.q = v;
    }
    if let Some(v) = &args.lambda {
        cfg.lambda = v.clone();
    }
    if let Some(g) = &args.generator {
        cfg.generator = g.parse::<Generator>()?;
    }
    let report = run_suite(&cfg)?;
    save_json(&report, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.csv {
        write_csv(&report, path).with_context(|| format!("writing {}", path.display()))?;
    }
    for c in &report.checks {
        let ratio = match (c.min_ratio, c.max_ratio) {
            (Some(lo), Some(hi)) => format!(" ratio [{lo:.6}, {hi:.6}]"),
            _ => String::new(),
        };
        println!(
            "{} {}: {}/{} violations{ratio}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.violations,
            c.samples
        );
    }
    println!("{}: {}", report.suite, if report.passed { "passed" } else { "FAILED" });
    Ok(report.passed)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Compute(args) => {
            println!("{}", serde_json::to_string_pretty(&compute(&args)?)?);
            Ok(true)
        }
        Command::Verify(args) => verify(&args),
        Command::Maximal(args) => {
            let f = load(&args.input)?;
            let m = fractional_maximal(&f, args.q, args.lambda)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

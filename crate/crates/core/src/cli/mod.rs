//! Command-line front end.

pub mod config;
pub mod emit;
pub mod preset;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use crate::sampling::default_workers;
use config::{load_config, Method};
use emit::Format;

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "firstpass", version, about = "First-passage failure probabilities and sensitivities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Failure probability by importance sampling over the component union.
    Reliability(RunArgs),
    /// Sensitivities of the failure probability by surface decomposition.
    Sensitivity(RunArgs),
    /// Finite-difference reference sensitivities.
    Reference(RunArgs),
    /// Write a built-in configuration.
    Preset {
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 1)]
        case: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub nmax: Option<usize>,
    /// Defaults to FIRSTPASS_WORKERS or the available cores.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: Format,
}

fn execute(method: Method, args: &RunArgs) -> Result<bool> {
    let mut cfg = load_config(&args.config)?;
    let e = &mut cfg.estimator;
    e.method = method;
    if let Some(s) = args.seed {
        e.seed = s;
    }
    if let Some(t) = args.tol {
        e.tol = t;
    }
    if let Some(n) = args.nmax {
        e.n_max = n;
    }
    let workers = args.workers.filter(|&w| w > 0).unwrap_or_else(default_workers);
    let report = run::run(&cfg, workers)?;
    let files = emit::emit(&report, args.format, &args.out_dir)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for r in &report.estimates {
        println!(
            "{:<12} {:>14.6e}  cov {:.4}  evals {:>8}  {}",
            r.parameter,
            r.value,
            r.cov,
            r.n_evals,
            if r.converged { "converged" } else { "NOT converged" }
        );
    }
    println!("wrote {}", files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "));
    Ok(report.converged())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_CONVERGED };
        }
    };
    let outcome = match &cli.command {
        Command::Reliability(a) => execute(Method::Isee, a),
        Command::Sensitivity(a) => execute(Method::Sdm, a),
        Command::Reference(a) => execute(Method::Fdmis, a),
        Command::Preset { name, case, out } => preset::preset(name, *case)
            .and_then(|c| c.to_json())
            .and_then(|j| Ok(std::fs::write(out, j + "\n")?))
            .map(|_| true),
    };
    match outcome {
        Ok(true) => EXIT_CONVERGED,
        Ok(false) => EXIT_NOT_CONVERGED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible budget,
//! 4 numerical failure.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::baseline::{run_mc, BaselineError};
use crate::ensemble::{EnsembleError, SyntheticEnsemble};
use crate::harness::{oracle_report, run_trials, write_oracle_csv, write_report, HarnessError, TrialSpec};
use crate::losscalc::LossError;
use crate::policy::{run_aetc, PolicyError};

#[derive(Debug, Parser)]
#[command(name = "aetc", version, about = "Budget-limited multifidelity mean estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run AETC once and print the result as JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides aetcConfig.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        recycle: bool,
    },
    /// Repeated trials over the budget grid; writes report.csv and manifest.json.
    Trials {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oracle loss table of every subset at aetcConfig.budget, as CSV.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        max_card: Option<usize>,
    },
    /// Classical Monte Carlo estimate as JSON.
    Mc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        budget: f64,
        /// Defaults to aetcConfig.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Config = 2,
    Budget = 3,
    Numerical = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            kind: Failure::Config,
            message: message.into(),
        }
    }
}

fn classify_ensemble(e: &EnsembleError) -> Failure {
    match e {
        EnsembleError::InvalidSpec(_) | EnsembleError::Subset(_) => Failure::Config,
        _ => Failure::Numerical,
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        let kind = match &e {
            PolicyError::InvalidConfig(_) => Failure::Config,
            PolicyError::InsufficientBudget { .. } | PolicyError::NoExploitationBudget { .. } => Failure::Budget,
            PolicyError::Ensemble(inner) => classify_ensemble(inner),
            _ => Failure::Numerical,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        let kind = match &e {
            BaselineError::InsufficientBudget { .. } => Failure::Budget,
            BaselineError::Ensemble(inner) => classify_ensemble(inner),
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        let kind = match e {
            HarnessError::Policy(p) => return p.into(),
            HarnessError::Ensemble(ref inner) => classify_ensemble(inner),
            HarnessError::Loss(LossError::Domain(_)) | HarnessError::Loss(LossError::DimensionMismatch(_)) => {
                Failure::Config
            }
            HarnessError::Loss(_) => Failure::Numerical,
            _ => Failure::Config,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

fn load(path: &PathBuf) -> Result<TrialSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    TrialSpec::from_json(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn json_line<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn ensemble(spec: &TrialSpec) -> Result<SyntheticEnsemble, CliError> {
    SyntheticEnsemble::new(spec.ensemble.clone()).map_err(|e| CliError::config(e.to_string()))
}

/// Executes one command, writing its primary output to `out`.
pub fn execute<W: Write>(command: &Command, out: &mut W) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::config(e.to_string());
    match command {
        Command::Run { config, seed, recycle } => {
            let spec = load(config)?;
            let ens = ensemble(&spec)?;
            let mut cfg = spec.aetc.clone();
            if let Some(seed) = seed {
                cfg.seed = *seed;
            }
            cfg.recycle |= *recycle;
            let result = run_aetc(&ens, &cfg)?;
            out.write_all(json_line(&result)?.as_bytes()).map_err(io)?;
        }
        Command::Trials { config, out: dir } => {
            let spec = load(config)?;
            let report = run_trials(&spec)?;
            write_report(dir, &spec, &report)?;
            let failures: usize = report.cells.iter().map(|c| c.failures).sum();
            writeln!(
                out,
                "wrote {} ({} cells, {} failed trials)",
                dir.join("report.csv").display(),
                report.cells.len(),
                failures
            )
            .map_err(io)?;
        }
        Command::Oracle { config, max_card } => {
            let spec = load(config)?;
            let k0 = spec.ensemble.beta.len();
            let q = spec.aetc.q_matrix(k0)?;
            let selection = oracle_report(&spec.ensemble, spec.aetc.budget, q.as_ref(), max_card.or(spec.aetc.max_card))?;
            write_oracle_csv(&selection, &mut *out).map_err(|e| CliError::config(e.to_string()))?;
            match &selection.best {
                Some(s) => eprintln!("S* = {s}"),
                None => eprintln!("S* = none (no feasible subset)"),
            }
        }
        Command::Mc { config, budget, seed } => {
            let spec = load(config)?;
            let ens = ensemble(&spec)?;
            let estimate = run_mc(&ens, *budget, seed.unwrap_or(spec.aetc.seed))?;
            out.write_all(json_line(&estimate)?.as_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli.command, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.kind as u8)
        }
    }
}

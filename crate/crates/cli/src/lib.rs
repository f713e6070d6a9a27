//! `surrogate-compiler`: ingest a model, then inspect it, propagate bounds,
//! formulate, emit, solve, verify or search for adversarial inputs.
//!
//! Everything runs through [`run`], which takes the argument list and the two
//! output streams and returns the process exit code, so tests drive the tool
//! in-process.

mod commands;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use surrogate_core::emit::EmitError;
use surrogate_core::formulations::{FormulationError, FormulationKind, DEFAULT_EPSILON};
use surrogate_core::problem::ObjectiveSense;
use surrogate_core::solver::SolverError;

/// Environment variable overriding the branch-and-bound node limit.
pub const NODE_LIMIT_ENV: &str = "SURROGATE_COMPILER_NODE_LIMIT";

/// Margins at or below this count as UNSAT in `adversarial`.
pub const SAT_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Failure = 1,
    Usage = 2,
    Parse = 3,
    Formulation = 4,
    Solver = 5,
}

/// A failure with its exit code and the tag printed as `error[tag]:`.
#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub tag: &'static str,
    pub message: String,
}

impl CliError {
    fn new(code: ExitCode, tag: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            tag,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Usage, "usage", message)
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Parse, "parse", message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Failure, "io", message)
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Solver, "solver", message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.tag, self.message)
    }
}

impl From<FormulationError> for CliError {
    fn from(e: FormulationError) -> Self {
        use FormulationError::*;
        match e {
            ZeroPartitions
            | Objective(_)
            | UnknownName(_)
            | LabelOutOfRange { .. }
            | SameLabel(_)
            | BadRadius(_)
            | BadEpsilon(_)
            | OutsideBounds { .. } => CliError::usage(e.to_string()),
            _ => CliError::new(ExitCode::Formulation, "formulation", e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::solver(e.to_string())
    }
}

impl From<EmitError> for CliError {
    fn from(e: EmitError) -> Self {
        CliError::new(ExitCode::Formulation, "format", e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "surrogate-compiler",
    version,
    about = "Compile trained neural networks and tree ensembles into optimization problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sense {
    #[value(alias = "maximize")]
    Max,
    #[value(alias = "minimize")]
    Min,
}

impl From<Sense> for ObjectiveSense {
    fn from(s: Sense) -> Self {
        match s {
            Sense::Max => ObjectiveSense::Maximize,
            Sense::Min => ObjectiveSense::Minimize,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct KindArgs {
    /// Formulation kind.
    #[arg(long, value_parser = ["fullspace", "reducedspace", "bigm", "complementarity", "partition", "gbt"])]
    kind: String,
    /// Number of partition classes for `--kind partition`.
    #[arg(long, default_value_t = 2)]
    partitions: usize,
    /// Gap for the strict side of tree splits.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

impl KindArgs {
    fn kind(&self) -> FormulationKind {
        FormulationKind::from_cli(&self.kind, self.partitions).expect("clap restricts the kind names")
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a model and summarize its layers or trees.
    Inspect {
        model: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print interval bounds for every neuron.
    Bounds {
        model: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Build a formulation and print its size.
    Formulate {
        model: PathBuf,
        #[command(flatten)]
        kind: KindArgs,
        #[arg(long)]
        json: bool,
    },
    /// Write a formulation as an LP, MPS or algebraic listing file.
    Emit {
        model: PathBuf,
        #[command(flatten)]
        kind: KindArgs,
        #[arg(long, value_parser = ["lp", "mps", "nlp"])]
        format: String,
        #[arg(long)]
        out: PathBuf,
        /// Objective sense; without it the file has a zero objective.
        #[arg(long)]
        sense: Option<Sense>,
        /// Linear objective over `x[i]` and `y[j]`, e.g. `y[1] - y[0]`.
        #[arg(long, default_value = "y[0]", allow_hyphen_values = true)]
        objective: String,
    },
    /// Solve a formulation with the built-in exact solver.
    Solve {
        model: PathBuf,
        #[command(flatten)]
        kind: KindArgs,
        #[arg(long)]
        sense: Sense,
        #[arg(long, default_value = "y[0]", allow_hyphen_values = true)]
        objective: String,
        #[arg(long)]
        json: bool,
    },
    /// Check that forward-evaluated assignments satisfy the formulation.
    Verify {
        model: PathBuf,
        #[command(flatten)]
        kind: KindArgs,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long)]
        json: bool,
    },
    /// Search an l-infinity ball for an input scored higher for TARGET than
    /// for TRUE.
    Adversarial {
        model: PathBuf,
        /// JSON array with the reference input.
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "true")]
        true_label: usize,
        #[arg(long)]
        target: usize,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        json: bool,
    },
    /// Brute-force optimum: activation patterns for ReLU networks, threshold
    /// cells for ensembles.
    Oracle {
        model: PathBuf,
        #[arg(long)]
        sense: Sense,
        #[arg(long, default_value = "y[0]", allow_hyphen_values = true)]
        objective: String,
        #[arg(long)]
        json: bool,
    },
}

/// Runs the tool; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return ExitCode::Ok as i32;
            }
            let text = e.to_string();
            let text = text.strip_prefix("error: ").unwrap_or(&text);
            let _ = write!(err, "error[usage]: {text}");
            return ExitCode::Usage as i32;
        }
    };
    let mut ctx = commands::Context { out, err };
    match commands::dispatch(cli.command, &mut ctx) {
        Ok(code) => code as i32,
        Err(e) => {
            let _ = writeln!(ctx.err, "{e}");
            e.code as i32
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

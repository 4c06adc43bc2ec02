//! ssmshrink: synthesize, reduce, bound, and check deep LQO state-space
//! stacks from the command line.
//!
//! A model is a stack of discrete-time linear systems with quadratic
//! output terms, glued together by LayerNorm. The subcommands cover the
//! whole workflow: `synth` writes a random stable model, `reduce` shrinks
//! every layer's state dimension by gradient descent on a time-limited h2
//! error objective, `bound` evaluates the a-priori output-error bound for
//! a full/reduced pair, `eval` measures the actual output error, and
//! `gradcheck` validates the analytic gradients against central finite
//! differences.
//!
//! Exit codes: 0 success; 1 gradcheck found gradients over threshold;
//! 2 usage or validation failure (bad flags, malformed files, shape
//! mismatches); 3 numerical or I/O failure (unstable model,
//! near-singular solve, stalled line search, stdout write error).

mod commands;
mod model_io;
mod signal_io;

use std::io::{ErrorKind, Write};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Write to stdout without panicking when the reader has gone away.
///
/// Piping into a pager or `head` closes stdout early; the conventional
/// behavior is to stop quietly. Any other write failure (a full disk
/// behind a redirect, for example) is a real error.
pub(crate) fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let res = out.write_all(text.as_bytes()).and_then(|()| out.flush());
    if let Err(e) = res {
        if e.kind() == ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: writing stdout: {e}");
        std::process::exit(3);
    }
}

/// Command-level failures, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed files, impossible shapes. Exit code 2.
    Usage(String),
    /// The math failed: instability, near-singular solves. Exit code 3.
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => m,
        }
    }

    /// Map a core error onto an exit class, with a location prefix.
    pub fn from_core(context: &str, e: ssmshrink_core::Error) -> Self {
        use ssmshrink_core::Error as E;
        let msg = if context.is_empty() {
            e.to_string()
        } else {
            format!("{context}: {e}")
        };
        match e {
            E::Unstable { .. } | E::NearSingular { .. } => CliError::Numerical(msg),
            E::Shape(_) | E::Domain(_) => CliError::Usage(msg),
        }
    }
}

impl From<ssmshrink_core::Error> for CliError {
    fn from(e: ssmshrink_core::Error) -> Self {
        CliError::from_core("", e)
    }
}

#[derive(Parser)]
#[command(
    name = "ssmshrink",
    version,
    about = "Time-limited h2 reduction of deep LQO state-space stacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random stable model file.
    Synth(commands::SynthArgs),
    /// Reduce every layer's state dimension by gradient descent.
    Reduce(commands::ReduceArgs),
    /// A-priori output-error bound for a full/reduced pair on an input.
    Bound(commands::BoundArgs),
    /// Measured output error and per-layer input norms.
    Eval(commands::EvalArgs),
    /// Finite-difference validation of the analytic gradients.
    Gradcheck(commands::GradcheckArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Reduce(a) => commands::reduce(a),
        Command::Bound(a) => commands::bound(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

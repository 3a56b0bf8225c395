//! Argument parsing and dispatch.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, Suite};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "shufflelab", version, about = "Without-replacement SGD experiments and bound checks")]
pub struct Cli {
    /// TOML config; defaults apply when omitted.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads, 0 for one per core (overrides the config).
    #[arg(short = 'j', long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the configured problem and write problem.json.
    Gen,
    /// One run of the configured method; writes trajectory.csv.
    Run,
    /// Sweep the (n, K) grid; writes sweep.csv and sweep_runs.csv.
    Sweep,
    /// Fit log-log exponents to a sweep table; writes fits.csv.
    Fit {
        /// Sweep table (overrides `fit.input`).
        #[arg(long)]
        input: Option<PathBuf>,
        /// `K` or `n` (overrides `fit.axis`).
        #[arg(long)]
        axis: Option<String>,
        /// Value of the other variable; repeatable (overrides `fit.fixed`).
        #[arg(long)]
        fixed: Vec<usize>,
    },
    /// Compare sweep tables at equal budget; writes comparison.csv.
    Report {
        /// Sweep tables; the first is the reference.
        inputs: Vec<PathBuf>,
    },
    /// Run a verification suite: all, contraction, concentration, chung or progress.
    Verify {
        suite: String,
        /// Probe step sizes beyond the contraction thresholds (never fails).
        #[arg(long)]
        eta_beyond_threshold: bool,
    },
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    if let Command::Verify { suite, .. } = &cli.command {
        suite.parse::<Suite>()?;
    }
    let mut ctx = commands::load_context(cli.config.as_deref(), cli.output, cli.threads)?;
    match cli.command {
        Command::Gen => commands::gen(&ctx, out),
        Command::Run => commands::run(&ctx, out),
        Command::Sweep => commands::sweep_cmd(&ctx, out).map(|_| ()),
        Command::Fit { input, axis, fixed } => {
            if let Some(i) = input {
                ctx.cfg.fit.input = i;
            }
            if let Some(a) = axis {
                ctx.cfg.fit.axis = a;
            }
            if !fixed.is_empty() {
                ctx.cfg.fit.fixed = fixed;
            }
            commands::fit(&ctx, out).map(|_| ())
        }
        Command::Report { inputs } => commands::report(&ctx, &inputs, out),
        Command::Verify {
            suite,
            eta_beyond_threshold,
        } => commands::verify(&ctx, suite.parse()?, eta_beyond_threshold, out).map(|_| ()),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Errors go to `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

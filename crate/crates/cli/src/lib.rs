//! Command-line front end for powerjsr scenarios.
//!
//! Commands: `estimate`, `simulate`, `check`. Exit codes are listed in
//! [`error::exit`].

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

use clap::{Args, Parser, Subcommand};
use commands::{cmd_check, cmd_estimate, cmd_simulate, RunReport};
use error::{exit, CliError};
use powerjsr::NormKind;
use scenario::{Overrides, Scenario};
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "powerjsr", version, about = "JSR bounds and boundedness verdicts for switched power control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bracket the joint spectral radius and report witness and certificate.
    Estimate(CommonArgs),
    /// Estimate, run the trajectory ensemble and write CSV output.
    Simulate(CommonArgs),
    /// Check both boundedness hypotheses without simulating.
    Check(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory. `simulate` defaults to the current directory;
    /// the other commands write a report only when given.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// one | inf | two | fro
    #[arg(long)]
    pub norm: Option<NormKind>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub budget: Option<u64>,
}

impl CommonArgs {
    pub fn overrides(&self) -> Result<Overrides, CliError> {
        if self.steps == Some(0) {
            return Err(CliError::Usage("--steps must be >= 1".into()));
        }
        if self.depth == Some(0) {
            return Err(CliError::Usage("--depth must be >= 1".into()));
        }
        if self.budget == Some(0) {
            return Err(CliError::Usage("--budget must be >= 1".into()));
        }
        if let Some(d) = self.delta.filter(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(CliError::Usage(format!("--delta must be > 0, got {d}")));
        }
        Ok(Overrides {
            seed: self.seed,
            steps: self.steps,
            delta: self.delta,
            norm: self.norm,
            depth: self.depth,
            budget: self.budget,
        })
    }
}

pub fn execute(command: &Command) -> Result<RunReport, CliError> {
    let (Command::Estimate(args) | Command::Simulate(args) | Command::Check(args)) = command;
    let scenario = Scenario::load(&args.scenario, &args.overrides()?)?;
    match command {
        Command::Estimate(_) => cmd_estimate(&scenario, args.out.as_deref()),
        Command::Check(_) => cmd_check(&scenario, args.out.as_deref()),
        Command::Simulate(_) => cmd_simulate(&scenario, args.out.as_deref().unwrap_or(std::path::Path::new("."))),
    }
}

/// Parses `args`, runs the command, prints the summary, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::BOUNDED };
        }
    };
    match execute(&cli.command) {
        Ok(report) => {
            print!("{}", report.render());
            for (phase, secs) in &report.wall_times {
                eprintln!("time {phase}: {secs:.3}s");
            }
            report.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

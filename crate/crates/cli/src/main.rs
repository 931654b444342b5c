mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Core(exactz::Error),
    /// The detectors found this many violations.
    Violations(usize),
    /// A post-correction invariant does not hold.
    Breach(String),
    Other(String),
}

impl From<exactz::Error> for CliError {
    fn from(e: exactz::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        use exactz::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::BadMagic { .. }
                | E::UnsupportedVersion(_)
                | E::HeaderMismatch(_)
                | E::Truncated { .. }
                | E::Corrupt(_)
                | E::EditCorruption(_)
                | E::DimMismatch { .. }
                | E::InvalidDims(_)
                | E::NonFinite { .. } => 2,
                E::BoundViolated { .. } => 3,
                E::NonConvergence { .. } | E::Escalation { .. } | E::Cycle => 4,
                E::Unsupported(_) => 5,
                _ => 1,
            },
            CliError::Violations(_) | CliError::Breach(_) | CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::Violations(n) => format!("{n} constraint violations"),
            CliError::Breach(m) | CliError::Other(m) => m.clone(),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("EXACTZ_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Other(format!("EXACTZ_THREADS={raw:?} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Other(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Compress(a) => commands::compress(a),
        Command::Decompress(a) => commands::decompress(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Correct(a) => commands::correct(a),
        Command::Verify(a) => commands::verify(a),
        Command::Bound(a) => commands::bound(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Report(a) => commands::report(a),
        Command::Pipeline(c) => commands::pipeline(c),
        Command::Topo(a) => commands::topo(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

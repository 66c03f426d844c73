//! Batch front end: ingestion, resolution, evaluation, loss checks and the
//! synthetic benchmark.
//!
//! Exit codes: 0 success, 1 validation or constraint failure, 2 I/O, format
//! or usage failure.

pub mod args;
pub mod commands;
pub mod error;
pub mod report;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult, EXIT_IO, EXIT_OK, EXIT_VALIDATION};

/// Executes a parsed command, writing human-readable output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Convert(a) => commands::cmd_convert(a, out).map(drop),
        Command::Merge(a) => commands::cmd_merge(a, out).map(drop),
        Command::Presample(a) => commands::cmd_presample(a, out).map(drop),
        Command::Resolve(a) => commands::cmd_resolve(a, out).map(drop),
        Command::Eval(a) => commands::cmd_eval(a, out).map(drop),
        Command::Losscheck(a) => commands::cmd_losscheck(a, out).map(drop),
        Command::Bench(a) => commands::cmd_bench(a, out).map(drop),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_IO
                }
            };
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

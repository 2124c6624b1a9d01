//! Command-line front end for the `wishart_sum` library.

pub mod commands;
pub mod csv;
pub mod spec;
pub mod validate;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use commands::{execute, thread_count, Cli};

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 2 when the result carries warnings, 1 on error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match thread_count(cli.threads) {
        Ok(Some(n)) => {
            // a pool may already exist when called more than once in-process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    }
    let outcome = match execute(cli.command) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    let written = match &outcome.out {
        Some(path) => std::fs::write(path, &outcome.output).map_err(|e| format!("writing {}: {e}", path.display())),
        None => std::io::stdout().write_all(outcome.output.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return 1;
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    outcome.code
}

//! Command-line and HTTP front door for the search engine and benchmark
//! harness.

pub mod args;
pub mod commands;
pub mod serve;

use clap::Parser;
use std::ffi::OsString;
use std::io::Write;

/// Parse arguments and run. Returns the process exit code; diagnostics go
/// to `stderr` as one JSON object per error.
pub fn run<I, T, K, V>(argv: I, env: impl IntoIterator<Item = (K, V)>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    K: AsRef<str>,
    V: Into<String>,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { commands::EXIT_USAGE } else { commands::EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
                let _ = writeln!(stderr, "{}", commands::Failure::usage(rendered.lines().next().unwrap_or("")).to_json_line());
            } else {
                let _ = write!(stdout, "{rendered}");
            }
            return code;
        }
    };
    match commands::dispatch(cli, env, stdout) {
        Ok(()) => commands::EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "{}", f.to_json_line());
            f.code
        }
    }
}

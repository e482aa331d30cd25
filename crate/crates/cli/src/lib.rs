//! Command-line client for a fhirchain node.

pub mod cli;
pub mod client;
mod commands;
pub mod error;
pub mod keyfile;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::Parser;

pub use cli::Cli;
pub use error::CliError;

fn default_home() -> PathBuf {
    match std::env::var_os("HOME") {
        Some(home) => PathBuf::from(home).join(".fhirchain"),
        None => PathBuf::from(".fhirchain"),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Results go to `out` as JSON lines, errors to `err` as one JSON line.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { error::EXIT_USER } else { 0 };
        }
    };
    let mut ctx = commands::Context {
        server: cli.server.clone(),
        home: cli.home.clone().unwrap_or_else(default_home),
        passphrase: cli.passphrase.clone(),
        config: cli.config.clone(),
        out,
    };
    match commands::execute(cli, &mut ctx) {
        Ok(()) => 0,
        Err(e) => {
            let line = serde_json::json!({"error": e.code(), "message": e.to_string()});
            let _ = writeln!(err, "{line}");
            e.exit_code()
        }
    }
}

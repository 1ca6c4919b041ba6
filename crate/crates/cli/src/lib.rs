//! Command-line front end: argument parsing, corpora, sweeps and reports.

pub mod args;
pub mod commands;
pub mod corpus;
pub mod engine;
pub mod report;
pub mod sweep;

use clap::Parser;

/// Parse `args` (including the program name) and run the command.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match args::Cli::try_parse_from(args) {
        Ok(cli) => commands::run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                report::EXIT_ERROR
            } else {
                0
            }
        }
    }
}

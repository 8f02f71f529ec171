#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod run;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, RunConfig};
use crate::run::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let config = resolve_config(cli.config.as_deref(), cli.command, cli.output)?;
    if cli.dump_config {
        let config = run::inline_inputs(config)?;
        println!("{}", serde_json::to_string_pretty(&config).map_err(|e| CliError::Internal(e.to_string()))?);
        return Ok(());
    }
    run::run(config)
}

/// Command-line output flags override those stored in a config file.
fn resolve_config(
    path: Option<&std::path::Path>,
    command: Option<args::Command>,
    output: args::OutputArgs,
) -> Result<RunConfig, CliError> {
    match (path, command) {
        (Some(_), Some(_)) => Err(CliError::Usage("--config cannot be combined with a subcommand".into())),
        (None, None) => Err(CliError::Usage("a subcommand or --config is required (see --help)".into())),
        (None, Some(command)) => Ok(RunConfig { command, output }),
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
            let mut cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
            if output.out.is_some() {
                cfg.output.out = output.out;
            }
            if output.format.is_some() {
                cfg.output.format = output.format;
            }
            if output.threads.is_some() {
                cfg.output.threads = output.threads;
            }
            Ok(cfg)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use yada_cli::{
    cmd_compile, cmd_ingest, cmd_query, cmd_report, cmd_simulate, cmd_validate, CliError,
    LoadedConfig, Overrides,
};

/// Schema compilation, path queries, dataset replay and twin
/// synchronization experiments.
#[derive(Debug, Parser)]
#[command(name = "yada", version)]
struct Cli {
    /// Harness configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set sim.monitor_poll_ms=200`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a schema and print its canonical form.
    Compile { schema: PathBuf },
    /// Check a schema and optional JSON instance documents.
    Validate { schema: PathBuf, data: Vec<PathBuf> },
    /// Print the leaves an instance document has under a path.
    Query {
        schema: PathBuf,
        data: PathBuf,
        path: String,
    },
    /// Build the replay corpus and write `replay.csv`.
    Ingest,
    /// Run the node-count sweep in both modes and write result files.
    Simulate,
    /// Print `comparison.csv` from an output directory as a table.
    Report { dir: Option<PathBuf> },
}

fn load(cli: &Cli) -> Result<LoadedConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <file> is required for this command".into()))?;
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        set: cli.set.clone(),
    };
    LoadedConfig::load(path, &overrides)
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Compile { schema } => cmd_compile(schema),
        Command::Validate { schema, data } => cmd_validate(schema, data),
        Command::Query { schema, data, path } => cmd_query(schema, data, path),
        Command::Ingest => cmd_ingest(&load(cli)?).map(|o| o.describe()),
        Command::Simulate => {
            let outcome = cmd_simulate(&load(cli)?)?;
            let table = cmd_report(&outcome.dir)?;
            Ok(format!("{table}results written to {}\n", outcome.dir.display()))
        }
        Command::Report { dir } => {
            let dir = match (dir, &cli.out) {
                (Some(d), _) | (None, Some(d)) => d.clone(),
                (None, None) => load(cli)?.config.output.dir,
            };
            cmd_report(&dir)
        }
    }
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(text) => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .context("writing to stdout")?;
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(e.exit_code() as u8))
        }
    }
}

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hisecagg_cli::commands::{self, Input, RunRequest};
use hisecagg_cli::{CliError, Output, Overrides};
use hisecagg_core::reference::FIXTURE_MODULUS;

/// Build, simulate and audit hierarchical secure aggregation schemes.
///
/// Every global flag can also be set through an environment variable with
/// the `HISECAGG_` prefix, e.g. `HISECAGG_SEED=3`.
#[derive(Parser)]
#[command(name = "hisecagg", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Field modulus (prime below 2^32).
    #[arg(long, global = true, env = "HISECAGG_Q")]
    q: Option<u64>,
    #[arg(long, global = true, env = "HISECAGG_SEED")]
    seed: Option<u64>,
    /// Symbols per piece in simulated rounds.
    #[arg(long, global = true, env = "HISECAGG_LPRIME")]
    lprime: Option<usize>,
    /// Largest sweep enumerated exhaustively before sampling.
    #[arg(long, global = true, env = "HISECAGG_EXHAUSTIVE_CAPS")]
    exhaustive_caps: Option<u64>,
    /// Cross-check every leakage value by exhaustive counting.
    #[arg(long, global = true, env = "HISECAGG_ORACLE")]
    oracle: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text, env = "HISECAGG_FORMAT")]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print link and key rates for a configuration.
    Rates { config: PathBuf },
    /// Build and audit a scheme, writing its dump.
    Build {
        config: PathBuf,
        #[arg(long, env = "HISECAGG_OUT")]
        out: PathBuf,
    },
    /// Simulate one round (or every dropout pattern) from a config or dump.
    Run {
        input: PathBuf,
        /// Drop user V of cluster U (one-based); repeatable.
        #[arg(long = "drop", value_name = "U:V")]
        drops: Vec<String>,
        #[arg(long)]
        all_patterns: bool,
    },
    /// Audit a scheme dump (or a config, built first).
    Audit { input: PathBuf },
    /// Check the embedded worked example.
    FixtureVerify,
}

fn dispatch(cli: &Cli) -> Result<Output, CliError> {
    let ov = Overrides {
        q: cli.q,
        seed: cli.seed,
        lprime: cli.lprime,
        exhaustive_caps: cli.exhaustive_caps,
        oracle: cli.oracle,
    };
    match &cli.cmd {
        Cmd::Rates { config } => commands::rates(&commands::load_config(config, &ov)?),
        Cmd::Build { config, out } => commands::build_cmd(&commands::load_config(config, &ov)?, out),
        Cmd::Run { input, drops, all_patterns } => {
            let input = commands::load_input(input, &ov)?;
            let clusters = match &input {
                Input::Config(c) => c.clusters.len(),
                Input::Dump { scheme, .. } => scheme.params.clusters(),
            };
            let dropouts = if drops.is_empty() { None } else { Some(commands::parse_drops(drops, clusters)?) };
            commands::run_cmd(input, &ov, &RunRequest { dropouts, all_patterns: *all_patterns })
        }
        Cmd::Audit { input } => commands::audit_cmd(commands::load_input(input, &ov)?, &ov),
        Cmd::FixtureVerify => Ok(commands::fixture_cmd(cli.q.unwrap_or(FIXTURE_MODULUS))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(out) => {
            let body = match cli.format {
                Format::Text => out.text.clone(),
                Format::Structured => serde_json::to_string_pretty(&out.structured).expect("json value") + "\n",
            };
            // a closed pipe (e.g. `| head`) is not an error
            let _ = std::io::stdout().write_all(body.as_bytes());
            for n in &out.notes {
                eprintln!("{n}");
            }
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

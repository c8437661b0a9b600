use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use leafwise_cli::config::{env_overrides, ExperimentConfig};
use leafwise_cli::run::{self, Summary};
use leafwise_cli::CliError;

#[derive(Parser)]
#[command(name = "leafwise", version, about = "Drift, entropy and their derivatives for leafwise diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `simulation.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// `section.key=value`, repeatable; applied after environment overrides.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run(Common),
    /// Run one experiment per value of a configuration key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Key to vary, e.g. `simulation.paths`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Run the geometric property checks.
    Validate(Common),
}

fn prepare(c: &Common, validate: bool) -> Result<(String, Vec<String>), CliError> {
    if let Some(w) = c.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let text = match &c.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None if validate => String::new(),
        None => return Err(CliError::Config("--config is required".into())),
    };
    let mut overrides = env_overrides(std::env::vars());
    if validate {
        overrides.push("kind=validate".into());
    }
    overrides.extend(c.overrides.iter().cloned());
    if let Some(s) = c.seed {
        overrides.push(format!("simulation.seed={s}"));
    }
    Ok((text, overrides))
}

fn report(s: &Summary) {
    for c in &s.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        let target = c.target.map(|t| format!(" target {t}")).unwrap_or_default();
        println!("{status} {}: {:.6} ± {:.6}{target} ({})", c.name, c.value, c.stderr, c.criterion);
    }
}

fn run_one(c: &Common, validate: bool) -> Result<bool, CliError> {
    let (text, overrides) = prepare(c, validate)?;
    let cfg = ExperimentConfig::parse(&text, &overrides)?;
    let s = run::run(&cfg, &c.out)?;
    report(&s);
    Ok(s.passed)
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run(c) => run_one(&c, false),
        Command::Validate(c) => run_one(&c, true),
        Command::Sweep { common, axis, values } => {
            let (text, overrides) = prepare(&common, false)?;
            let summaries = run::sweep(&text, &overrides, &axis, &values, &common.out)?;
            for (v, s) in values.iter().zip(&summaries) {
                println!("{axis}={v}");
                report(s);
            }
            Ok(summaries.iter().all(|s| s.passed))
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

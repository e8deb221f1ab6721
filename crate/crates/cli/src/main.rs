//! `openness` command line.
//!
//! Exit status: 0 on success, 1 when the data is invalid or a run fails,
//! 2 on a usage error.

mod args;
mod bundle;
mod commands;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command};
use bundle::{emit, ReportBundle, Timings};

fn config_echo(command: &Command) -> serde_json::Result<serde_json::Value> {
    match command {
        Command::EvalClosed(a) | Command::RepeBuild(a) | Command::Validate(a) => {
            serde_json::to_value(a)
        }
        Command::EvalExtensibility(a) => serde_json::to_value(a),
        Command::EvalStability(a) => serde_json::to_value(a),
        Command::Adversarial(a) => serde_json::to_value(a),
        Command::Geometry(a) => serde_json::to_value(a),
        Command::RepeEnhance(a) => serde_json::to_value(a),
    }
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    if let Some(out) = &cli.out {
        let parent = out.parent().filter(|p| !p.as_os_str().is_empty());
        if let Some(p) = parent.filter(|p| !p.is_dir()) {
            anyhow::bail!("output directory {} does not exist", p.display());
        }
    }
    let mut t = Timings::default();
    let outcome = match &cli.command {
        Command::EvalClosed(a) => commands::eval_closed(a, &mut t),
        Command::EvalExtensibility(a) => commands::eval_extensibility(a, &mut t),
        Command::EvalStability(a) => commands::eval_stability(a, &mut t),
        Command::Adversarial(a) => commands::adversarial(a, &mut t),
        Command::Geometry(a) => commands::geometry(a, &mut t),
        Command::RepeBuild(a) => commands::repe_build(a, &mut t),
        Command::RepeEnhance(a) => commands::repe_enhance(a, &mut t),
        Command::Validate(a) => commands::validate(a, &mut t),
    }?;
    let bundle = ReportBundle {
        tool: "openness",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        config: config_echo(&cli.command)?,
        payload: outcome.payload,
        timings_ms: cli.record_timings.then(|| t.into_map()),
    };
    emit(&bundle, &outcome.csv, cli.format, cli.out.as_deref())?;
    Ok(!outcome.failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: the dataset has violations");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

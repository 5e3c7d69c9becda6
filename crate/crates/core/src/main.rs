use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nlneumann::cli_io::{parse_config, run, Command};
use nlneumann::Error;

/// Fractional p-Laplacian with nonlocal Neumann conditions on an interval.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    /// verify | eigen | heat | poisson | mountainpass
    command: String,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return config_error(format!("{}: {e}", cli.config.display())),
    };
    // the positional command fills in a missing `command` field
    let mut json: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return config_error(e),
    };
    let positional: Command = match serde_json::from_value(serde_json::Value::String(cli.command.clone())) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Some(obj) = json.as_object_mut() {
        obj.entry("command").or_insert_with(|| serde_json::Value::String(cli.command.clone()));
    }
    let config = match parse_config(&json.to_string()) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if config.command != positional {
        return config_error(format!(
            "command `{}` does not match the config's `{}`",
            positional.name(),
            config.command.name()
        ));
    }
    let out = cli
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("out_{}", config.command.name())));
    match run(&config, &out) {
        Ok(manifest) => {
            for inv in &manifest.invariants {
                let verdict = if inv.pass { "pass" } else { "FAIL" };
                println!("{verdict}  {}: {:.3e} (threshold {:.3e})", inv.name, inv.value, inv.threshold);
            }
            if let Some(err) = &manifest.error {
                eprintln!("error: {err}");
            }
            println!("wrote {} files to {}", manifest.files.len(), out.display());
            ExitCode::from(manifest.exit_code() as u8)
        }
        Err(e @ Error::Config(_)) => config_error(e),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

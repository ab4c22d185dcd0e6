//! Command-line driver: every experiment as a seeded, file-emitting command.
//!
//! Commands implement [`Command`] and are looked up by name in
//! [`command_registry`]. Each returns a JSON result, a CSV table and a
//! one-line summary; [`execute`] wraps them into a versioned report.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;
use sk_tap::registry::{Named, Registry};
use sk_tap::report::{to_json, CsvTable, Envelope};

pub use config::{Cli, Format, RunConfig, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Module(#[from] sk_tap::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Module(e) if e.is_usage() => 2,
            _ => 3,
        }
    }
}

/// What a command produces before it is wrapped for output.
#[derive(Debug, Clone)]
pub struct Output {
    pub inputs: serde_json::Value,
    pub result: serde_json::Value,
    pub table: CsvTable,
    pub summary: String,
}

pub trait Command: Named + Send + Sync {
    fn about(&self) -> &'static str;
    fn run(&self, cfg: &RunConfig) -> Result<Output, CliError>;
}

pub fn command_registry() -> Registry<dyn Command> {
    let mut r: Registry<dyn Command> = Registry::new();
    r.register(Box::new(commands::SolveQ))
        .register(Box::new(commands::SeTable))
        .register(Box::new(commands::PhaseScan))
        .register(Box::new(commands::TapRun))
        .register(Box::new(commands::Moments))
        .register(Box::new(commands::FreeEnergy))
        .register(Box::new(commands::LowerBound))
        .register(Box::new(commands::DecompCheck));
    r
}

/// Renders a command's output in the requested format.
pub fn render(cfg: &RunConfig, out: &Output) -> Result<String, CliError> {
    Ok(match cfg.format() {
        Format::Json => to_json(&Envelope::new(
            &cfg.command,
            out.inputs.clone(),
            &out.result,
        ))?,
        Format::Csv => {
            let mut t = out.table.clone();
            let mut meta = vec![
                (
                    "schema_version".to_string(),
                    sk_tap::report::SCHEMA_VERSION.to_string(),
                ),
                ("tool".to_string(), "sk-tap".to_string()),
                ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
                ("command".to_string(), cfg.command.clone()),
                ("inputs".to_string(), out.inputs.to_string()),
            ];
            meta.append(&mut t.meta);
            t.meta = meta;
            t.to_csv()?
        }
    })
}

/// Runs the configured command and writes its report.
/// Returns the one-line summary.
pub fn execute(cfg: &RunConfig) -> Result<String, CliError> {
    let registry = command_registry();
    let cmd = registry.get(&cfg.command).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown command '{}'; expected one of:\n{}",
            cfg.command,
            registry
                .iter()
                .map(|c| format!("  {:<13} {}", c.name(), c.about()))
                .collect::<Vec<_>>()
                .join("\n")
        ))
    })?;
    let output = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {t} threads: {e}")))?
            .install(|| cmd.run(cfg))?,
        None => cmd.run(cfg)?,
    };
    let text = render(cfg, &output)?;
    match &cfg.out_path {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(output.summary)
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let to_stdout = cli.out.is_some();
    match RunConfig::from_cli(cli).and_then(|cfg| execute(&cfg)) {
        Ok(summary) => {
            if to_stdout {
                println!("{summary}");
            } else {
                eprintln!("{summary}");
            }
            0
        }
        Err(e) => {
            eprintln!("sktap: {e}");
            e.exit_code()
        }
    }
}

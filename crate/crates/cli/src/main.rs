//! `kinedecay`: run the spectral, Lyapunov and decay experiments from a JSON config.
//!
//! Failures exit nonzero with a single JSON object on stderr:
//! `{"error": <kind>, "message": <text>, ...}`.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "kinedecay", version, about = "Spectral decay experiments for linearized kinetic plasma models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search the functional constants on the wave-vector grid.
    Tune(Overrides),
    /// Check the Lyapunov inequality, equivalence and trajectory residuals per wave vector.
    Verify(Overrides),
    /// Fit the spectral gap against the reference kernel on the radial grid.
    Spectrum(Overrides),
    /// Whole-space norm decay series and fitted exponents.
    Decay(Overrides),
    /// Cross-model table of fitted against expected decay exponents.
    Compare(Overrides),
    /// Single-mode trajectory diagnostics and moment-equation residuals.
    Moments(Overrides),
}

#[derive(clap::Args)]
struct Overrides {
    /// JSON experiment configuration; defaults apply to absent fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model ids (be, vpb1, vmb1, vmb2-rate); repeatable or comma-separated.
    #[arg(long = "model", value_delimiter = ',')]
    models: Vec<String>,
    #[arg(long)]
    degree_cap: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if !self.models.is_empty() {
            cfg.models = self.models.clone();
        }
        if let Some(d) = self.degree_cap {
            cfg.degree_cap = d;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        Ok(cfg)
    }
}

pub enum CliError {
    Core(kinedecay::Error),
    Usage(String),
    Verification { message: String, offending_k: Vec<[f64; 3]> },
    RateMismatch { models: Vec<String>, message: String },
}

impl From<kinedecay::Error> for CliError {
    fn from(e: kinedecay::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn json(&self) -> serde_json::Value {
        match self {
            CliError::Core(e) => {
                let mut v = json!({ "error": e.kind(), "message": e.to_string() });
                match e {
                    kinedecay::Error::TuningExhausted { worst_k, violation, iterations, eigenvector } => {
                        v["worst_k"] = json!(worst_k);
                        v["violation"] = json!(violation);
                        v["iterations"] = json!(iterations);
                        v["eigenvector"] = json!(eigenvector);
                    }
                    kinedecay::Error::NonDecaying { k_norm, abscissa } => {
                        v["k_norm"] = json!(k_norm);
                        v["abscissa"] = json!(abscissa);
                    }
                    _ => {}
                }
                v
            }
            CliError::Usage(m) => json!({ "error": "usage", "message": m }),
            CliError::Verification { message, offending_k } => {
                json!({ "error": "verification_failed", "message": message, "offending_k": offending_k })
            }
            CliError::RateMismatch { models, message } => {
                json!({ "error": "rate_mismatch", "message": message, "models": models })
            }
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Worker pool size from `KINEDECAY_THREADS`; rayon's default otherwise.
fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("KINEDECAY_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("KINEDECAY_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot build worker pool: {e}")))
}

fn run() -> Result<String, CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string().trim().to_string())),
    };
    init_threads()?;
    match &cli.command {
        Command::Tune(o) => commands::tune(&o.resolve()?),
        Command::Verify(o) => commands::verify(&o.resolve()?),
        Command::Spectrum(o) => commands::spectrum(&o.resolve()?),
        Command::Decay(o) => commands::decay(&o.resolve()?),
        Command::Compare(o) => commands::compare(&o.resolve()?),
        Command::Moments(o) => commands::moments(&o.resolve()?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", output::to_json(&e.json()));
            ExitCode::from(e.exit_code())
        }
    }
}

//! `jmgt`: experiment runner for the memory-damped third-order wave model.
//!
//! Every subcommand reads one TOML configuration, writes a JSON report (and
//! CSV series) to the output directory, prints the report to stdout and
//! exits with a documented code.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::ExperimentConfig;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Internal numerical failure (no convergence, resolution, overflow).
    pub const INTERNAL: i32 = 1;
    /// A kernel assumption fails or the kernel is outside its domain.
    pub const KERNEL: i32 = 2;
    /// The simulation blew up; partial outputs were written.
    pub const BLOW_UP: i32 = 3;
    /// A verified inequality or identity is violated.
    pub const VIOLATION: i32 = 4;
    /// A decay fit is not a power law or misses its target.
    pub const FIT: i32 = 5;
    /// Bad command line, configuration or input file.
    pub const USAGE: i32 = 64;
}

/// JSON report layout version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(jmgt::Error),
}

impl From<jmgt::Error> for CliError {
    fn from(e: jmgt::Error) -> Self {
        CliError::Lib(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn code(&self) -> i32 {
        use jmgt::Error::*;
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Lib(e) => match e {
                Config(_) | InvalidParams(_) | UnsupportedRepresentation(_) | Io(_) | Index(_) | InsufficientData(_) => {
                    exit::USAGE
                }
                InvalidKernel(_) | Domain(_) => exit::KERNEL,
                BlowUp { .. } => exit::BLOW_UP,
                Fit(_) => exit::FIT,
                DegenerateMode(_) | NumericOverflow(_) | NoConvergence(_) | Resolution(_)
                | NoAdmissibleCoefficients(_) => exit::INTERNAL,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "jmgt", version, about = "Experiments for the memory-damped third-order wave model")]
struct Cli {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration field, e.g. `--set medium.b=1.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (overrides the config and $JMGT_OUTPUT_DIR).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Seed for randomized checks and data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Omit the timestamp so that repeated runs produce identical files.
    #[arg(long, global = true)]
    reproducible: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the kernel assumptions for the configured medium.
    ValidateKernel,
    /// Spectral abscissa sweep and regime classification.
    Symbol,
    /// Time integration on the periodic grid with energy diagnostics.
    Simulate,
    /// Radial decay-rate experiments.
    Decay,
    /// Energy residuals, auxiliary inequalities and oracle cross-checks.
    Verify {
        /// Flip the sign of F3 and F4 to exercise the failure path.
        #[arg(long, hide = true)]
        inject_mis_signed_f3: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ValidateKernel => "validate-kernel",
            Command::Symbol => "symbol",
            Command::Simulate => "simulate",
            Command::Decay => "decay",
            Command::Verify { .. } => "verify",
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.output {
        cfg.output.directory = Some(o.clone());
    }
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let name = cli.command.name();
    let outcome = match &cli.command {
        Command::ValidateKernel => commands::validate_kernel(&cfg)?,
        Command::Symbol => commands::symbol(&cfg, &dir)?,
        Command::Simulate => commands::simulate(&cfg, &dir)?,
        Command::Decay => commands::decay(&cfg, &dir)?,
        Command::Verify { inject_mis_signed_f3 } => commands::verify(&cfg, &dir, *inject_mis_signed_f3)?,
    };
    let json_path = dir.join(format!("{name}.json"));
    let mut files: Vec<String> = outcome.files.iter().map(|p| p.display().to_string()).collect();
    files.push(json_path.display().to_string());
    let mut report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": name,
        "exit_code": outcome.code,
        "config": cfg,
        "result": outcome.report,
        "files": files,
    });
    if !cli.reproducible {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        report["generated_at_unix"] = json!(now);
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&json_path, &text).map_err(|e| CliError::Usage(format!("{}: {e}", json_path.display())))?;
    println!("{text}");
    Ok(outcome.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = execute(&cli).unwrap_or_else(|e| {
        eprintln!("jmgt: {e}");
        e.code()
    });
    ExitCode::from(code as u8)
}

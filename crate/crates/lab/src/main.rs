use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cavity_lab::config::{DOMAIN_PRESETS, PERMITTIVITY_PRESETS};
use cavity_lab::{load, run, LabError, LabResult};

/// Maxwell cavity eigenvalue experiments driven by JSON configs.
#[derive(Debug, Parser)]
#[command(name = "cavity-spectra", version, about)]
struct Cli {
    /// Experiment config (used by `run` when no positional path is given).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: CAVITY_SPECTRA_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { path: Option<PathBuf> },
    /// Check a config and print it with defaults filled in.
    ValidateConfig { file: Option<PathBuf> },
    /// List domain and permittivity presets.
    Presets,
    /// Print the version.
    Version,
}

const DEFAULT_OUT: &str = "results";

fn config_path(positional: Option<PathBuf>, flag: Option<PathBuf>) -> LabResult<PathBuf> {
    positional.or(flag).ok_or_else(|| LabError::config("/", "no config file given (pass a path or --config)"))
}

fn init_threads(flag: Option<usize>) -> LabResult<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("CAVITY_SPECTRA_THREADS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                LabError::config("/", format!("CAVITY_SPECTRA_THREADS must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(LabError::config("/", "thread count must be positive"));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn execute(cli: Cli) -> LabResult<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Presets => {
            println!("domains:");
            for (name, what) in DOMAIN_PRESETS {
                println!("  {name:<18} {what}");
            }
            println!("permittivities:");
            for (name, what) in PERMITTIVITY_PRESETS {
                println!("  {name:<18} {what}");
            }
        }
        Command::Version => println!("cavity-spectra {}", env!("CARGO_PKG_VERSION")),
        Command::ValidateConfig { file } => {
            let path = config_path(file, cli.config)?;
            let resolved = load(&path)?;
            if !cli.quiet {
                println!("{}", serde_json::to_string_pretty(&resolved.config).expect("config serializes"));
            }
        }
        Command::Run { path } => {
            let path = config_path(path, cli.config)?;
            let resolved = load(&path)?;
            let out = cli.out.or_else(|| resolved.config.output.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            if !cli.quiet {
                eprintln!("running {} from {}", resolved.config.kind.as_str(), path.display());
            }
            let (outcome, report) = run(&resolved, &out)?;
            if let Some(false) = report.json["results"]["search"]["complete"].as_bool() {
                eprintln!("warning: genericity search did not reach its target; see report.json");
            }
            if !cli.quiet {
                for line in &outcome.summary {
                    println!("{line}");
                }
                println!("wrote {} files to {}", report.files.len(), out.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

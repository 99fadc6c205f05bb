use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fastdiff::cli::{exit_code, run_file, verify};

#[derive(Parser)]
#[command(
    name = "fastdiff",
    version,
    about = "Particle solver for the fast diffusion equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file, with optional `key=value` overrides.
    Run { config: PathBuf, overrides: Vec<String> },
    /// Re-check the artifacts of a run directory.
    Verify { dir: PathBuf },
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("FASTDIFF_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("FASTDIFF_THREADS must be a positive integer, got `{value}`"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: config: {msg}");
        return ExitCode::from(2);
    }
    match cli.command {
        Command::Run { config, overrides } => match run_file(&config, &overrides) {
            Ok(outcome) => {
                let summary = serde_json::to_string_pretty(&outcome.manifest.summary).unwrap_or_default();
                let _ = writeln!(std::io::stdout(), "wrote {}\n{summary}", outcome.dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e) as u8)
            }
        },
        Command::Verify { dir } => {
            let report = verify(&dir);
            for c in &report.checks {
                println!("ok   {c}");
            }
            for f in &report.failures {
                println!("FAIL {f}");
            }
            if report.passed() {
                println!("verify: pass");
                ExitCode::SUCCESS
            } else {
                println!("verify: fail ({} problems)", report.failures.len());
                ExitCode::from(1)
            }
        }
    }
}

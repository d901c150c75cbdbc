use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use latwave_cli::config::{parse_config, ConfigError};
use latwave_cli::pipeline::{run_pipeline, PipelineError, Stage};
use latwave_cli::report::emit_report;

#[derive(Parser)]
#[command(name = "latwave", version, about = "Periodic traveling waves of lattice systems: profiles, spectra, modulation and ring runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory; overrides `output_dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Additional stage to run (repeatable).
    #[arg(long = "stage", global = true, value_parser = parse_stage)]
    stages: Vec<Stage>,
    /// Worker threads for the Floquet-exponent sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the wave profile.
    Profile,
    /// Continue the wave family through the configured parameter values.
    Continue,
    /// Track the critical Floquet branches.
    Spectrum,
    /// Assemble the modulation system.
    Whitham,
    /// Run all spectral and modulation checks.
    Validate,
    /// Integrate the nonlinear ring.
    Simulate,
    /// Summarize an existing run directory.
    Report,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    Stage::parse(s).ok_or_else(|| format!("unknown stage {s:?}; expected one of profile, continue, whitham, spectrum, validate, simulate"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(cli) as u8)
}

fn run(cli: Cli) -> i32 {
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("error: {e}");
            return 1;
        }
    }
    let stage = match cli.command {
        Command::Profile => Stage::Profile,
        Command::Continue => Stage::Continue,
        Command::Spectrum => Stage::Spectrum,
        Command::Whitham => Stage::Whitham,
        Command::Validate => Stage::Validate,
        Command::Simulate => Stage::Simulate,
        Command::Report => {
            let Some(dir) = cli.out.or_else(|| cli.config.as_deref().and_then(|p| parse_config(p).ok()).map(|c| c.output_dir)) else {
                eprintln!("error: report needs --out or --config");
                return 1;
            };
            return match emit_report(&dir) {
                Ok((text, _)) => {
                    print!("{text}");
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            };
        }
    };
    let Some(path) = cli.config else {
        eprintln!("error: --config is required");
        return 1;
    };
    let mut cfg = match parse_config(&path) {
        Ok(c) => c,
        Err(e @ (ConfigError::Schema(_) | ConfigError::Io { .. })) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.unwrap_or_else(|| cfg.output_dir.clone());
    let mut requested = vec![stage];
    requested.extend(cli.stages);
    let manifest = match run_pipeline(&cfg, &requested, &out) {
        Ok(m) => m,
        Err(e @ PipelineError::MissingContinuation) => {
            eprintln!("error: {e}");
            return 1;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match emit_report(&out) {
        Ok((text, _)) => print!("{text}"),
        Err(e) => eprintln!("warning: report not written: {e}"),
    }
    manifest.exit_code()
}

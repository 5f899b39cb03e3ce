use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spdc_spatial::acceptance;
use spdc_spatial::config::ExperimentConfig;
use spdc_spatial::harness::{self, Mode};
use spdc_spatial::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Pump-angle sweep of the SPDC signal direction on a SPAD array")]
struct Cli {
    /// TOML configuration; defaults are used for missing keys or without a file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override acquisition.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trim the cut angle to the target signal angle and print the resulting config.
    Calibrate,
    /// Run the pump-angle sweep and write profiles, summary, fit report and acceptance lines.
    Sweep {
        #[arg(long, default_value = "analytic")]
        mode: Mode,
    },
    /// Run every acceptance criterion; exit status 0 iff all pass.
    Check,
    /// Print the default configuration.
    EmitDefaults,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.acquisition.seed = seed;
    }
    Ok(cfg)
}

fn write_or_print(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            let path = harness::write_files(&[(name.to_string(), text.to_string())], dir)?;
            eprintln!("wrote {}", path[0].display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::EmitDefaults => {
            write_or_print(
                cli.out.as_deref(),
                "config.toml",
                &ExperimentConfig::default().to_toml(),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate => {
            let mut cfg = load(cli)?;
            let before = cfg.crystal.cut_angle_deg;
            let crystal = harness::calibrate(&cfg)?;
            cfg.crystal.cut_angle_deg = crystal.cut_angle.to_degrees();
            let achieved = crystal.signal_angle_deg(0.0, cfg.omega_p())?;
            eprintln!(
                "cut angle {before} deg -> {} deg; signal angle at alpha_p = 0: {achieved:.7} deg",
                cfg.crystal.cut_angle_deg
            );
            write_or_print(cli.out.as_deref(), "calibrated_config.toml", &cfg.to_toml())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { mode } => {
            let cfg = load(cli)?;
            let mode = *mode;
            let report = harness::with_threads(cli.threads, || harness::run_sweep(&cfg, mode))??;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let files = harness::emit(&report, &cfg, &dir)?;
            eprintln!(
                "{mode} sweep: slope {:.4} ± {:.4}, intercept {:.5} ± {:.5} deg; {} files in {}",
                report.line.slope,
                report.line.sigma_slope,
                report.line.intercept,
                report.line.sigma_intercept,
                files.len(),
                dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Check => {
            let cfg = load(cli)?;
            let results = harness::with_threads(cli.threads, || acceptance::run_all(&cfg))??;
            let text = acceptance::render(&results);
            print!("{text}");
            if let Some(dir) = &cli.out {
                harness::write_files(&[(harness::ACCEPTANCE_FILE.to_string(), text)], dir)?;
            }
            Ok(if results.iter().all(|r| r.passed()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(match e {
                Error::Config(_) | Error::InvalidInput(_) => 2,
                _ => 3,
            })
        }
    }
}

//! Command-line entry point: config-driven simulate/invert/evaluate runs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sarvel::analysis::{kspace_samples, resolution_bounds};
use sarvel::config::{load_preset, ExperimentConfig, PRESET_NAMES};
use sarvel::error::Error;
use sarvel::experiment::{oracle_study, run_experiment, validation_report};
use sarvel::forward::OperatorSpec;
use sarvel::output;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "sarvel",
    about = "Multi-static SAR simulation and sparse moving-target imaging",
    version
)]
struct Cli {
    /// Worker threads for the numeric kernels (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigSource {
    /// Path to an experiment config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a shipped preset (see `--preset help`).
    #[arg(long)]
    preset: Option<String>,
    /// Master seed override: replaces all config seeds deterministically.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, invert and evaluate one experiment; write the output set.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Validate a config (schema plus physics advisories); no side effects.
    Validate {
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Emit the spatial-frequency samples and resolution bounds of a config.
    Kspace {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Small-instance comparison of the l1 pipeline against the l0 oracle.
    Oracle {
        /// Number of randomized instances.
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Mutual-coherence cutoff below which an instance counts as
        /// well-conditioned.
        #[arg(long, default_value_t = 0.75)]
        coherence_cutoff: f64,
    },
}

fn load_config(source: &ConfigSource) -> Result<ExperimentConfig, Error> {
    let mut cfg = match (&source.config, &source.preset) {
        (Some(path), None) => ExperimentConfig::from_path(path)?,
        (None, Some(name)) => {
            if name == "help" {
                return Err(Error::Config(format!(
                    "available presets: {}",
                    PRESET_NAMES.join(", ")
                )));
            }
            load_preset(name)?
        }
        _ => {
            return Err(Error::Config(
                "give exactly one of --config PATH or --preset NAME".to_string(),
            ))
        }
    };
    if let Some(seed) = source.seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: could not size the thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run { source, out } => {
            let cfg = load_config(&source)?;
            let summary = run_experiment(&cfg, &out)?;
            for method in [&summary.execution.ocd, &summary.execution.baseline]
                .into_iter()
                .flatten()
            {
                println!(
                    "{}: pixel_error={:.6} precision={:.3} recall={:.3}",
                    method.label,
                    method.metrics.pixel_error,
                    method.metrics.detection.precision,
                    method.metrics.detection.recall
                );
            }
            println!("outputs: {}", summary.out_dir.display());
            if !summary.solver_converged {
                eprintln!("warning: solver did not converge; outputs were still written");
                return Ok(ExitCode::from(EXIT_SOLVER));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { source } => {
            let cfg = load_config(&source)?;
            let report = validation_report(&cfg)?;
            print!("{report}");
            if report.contains("error:") {
                Ok(ExitCode::from(EXIT_CONFIG))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Kspace { source, out } => {
            let cfg = load_config(&source)?;
            let setup = cfg.build()?;
            let spec = OperatorSpec::new(
                setup.geometry.clone(),
                setup.grid.clone(),
                setup.waveforms.clone(),
                setup.schedule.clone(),
                setup.vgrid.clone(),
            )?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            output::write_kspace_csv(&out.join("kspace.csv"), &kspace_samples(&spec))?;
            let (rho_x, rho_y) = resolution_bounds(
                cfg.waveform.f0_hz,
                cfg.waveform.bandwidth_hz,
                setup.geometry.cone_width,
                setup.geometry.wave_speed,
            )?;
            let text = format!("rho_x_m={rho_x}\nrho_y_m={rho_y}\n");
            output::write_text(&out.join("resolution_bounds.txt"), &text)?;
            print!("{text}");
            println!("samples: {}", spec.measurement_count());
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle {
            instances,
            seed,
            coherence_cutoff,
        } => {
            let report = oracle_study(instances, seed, coherence_cutoff)?;
            print!("{}", report.render());
            Ok(ExitCode::SUCCESS)
        }
    }
}

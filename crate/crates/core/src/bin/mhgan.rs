//! Command-line front end for the experiment pipeline.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 runtime
//! failure (I/O, numerical breakdown, exhausted sampling budgets).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mhgan::calibration::CalibratorKind;
use mhgan::config::{DiscriminatorSpec, ExperimentConfig, Selector};
use mhgan::error::Error;
use mhgan::runner::{build_models, run_experiment, sweep_k};

#[derive(Parser)]
#[command(name = "mhgan", version, about = "Discriminator-driven sample selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by all subcommands; each overrides the config file field
/// of the same name.
#[derive(Args)]
struct Overrides {
    /// Experiment configuration (JSON)
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// none | mh | drs
    #[arg(long)]
    selector: Option<Selector>,
    /// oracle | warped(a,b) | mlp
    #[arg(long)]
    discriminator: Option<DiscriminatorSpec>,
    /// identity | logistic | isotonic | beta
    #[arg(long)]
    calibrator: Option<CalibratorKind>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_pilot: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write per-chain acceptance traces (traces.csv)
    #[arg(long)]
    emit_traces: bool,
}

impl Overrides {
    fn apply(&self) -> mhgan::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.n_samples {
            cfg.n_samples = v;
        }
        if let Some(v) = self.selector {
            cfg.selector = v;
        }
        if let Some(v) = &self.discriminator {
            cfg.discriminator = v.clone();
        }
        if let Some(v) = self.calibrator {
            cfg.calibrator = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.n_pilot {
            cfg.n_pilot = v;
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        if self.emit_traces {
            cfg.emit_traces = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write samples/metrics/manifest
    Run(Overrides),
    /// Repeat sampling + metrics across several chain lengths
    SweepK {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated ascending chain lengths, e.g. 1,10,100,640
        #[arg(long, value_delimiter = ',', required = true)]
        k_values: Vec<usize>,
    },
    /// Fit the configured calibrator and report the Z diagnostic
    Calibrate(Overrides),
    /// Report the calibration Z statistic without sampling
    Diagnose(Overrides),
}

fn is_usage_error(e: &Error) -> bool {
    matches!(e, Error::Config { .. } | Error::InvalidParameter(_))
}

fn run(cli: Cli) -> mhgan::Result<()> {
    match cli.command {
        Command::Run(ov) => {
            let cfg = ov.apply()?;
            let manifest = run_experiment(&cfg)?;
            println!("wrote {}", cfg.out_dir.join("metrics.csv").display());
            for (name, digest) in &manifest.digests {
                println!("{name}  sha256:{digest}");
            }
        }
        Command::SweepK { overrides, k_values } => {
            let cfg = overrides.apply()?;
            let (rows, _) = sweep_k(&cfg, &k_values)?;
            println!("k,high_quality_rate,mode_jsd,acceptance_rate");
            for r in &rows {
                println!(
                    "{},{},{},{}",
                    r.k, r.high_quality_rate, r.mode_jsd, r.acceptance_rate
                );
            }
        }
        Command::Calibrate(ov) => {
            let cfg = ov.apply()?;
            let models = build_models(&cfg)?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("calibrator.json");
            std::fs::write(&path, serde_json::to_string_pretty(&models.calibrator)?)?;
            println!("z_raw: {:.4}", models.z_raw);
            println!("z_cal: {:.4}", models.z_cal);
            println!("wrote {}", path.display());
        }
        Command::Diagnose(ov) => {
            let cfg = ov.apply()?;
            let models = build_models(&cfg)?;
            println!("z_raw: {:.4}", models.z_raw);
            println!("z_cal: {:.4}", models.z_cal);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if is_usage_error(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

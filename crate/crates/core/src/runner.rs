//! Configuration-driven experiment pipeline: build models, train and
//! calibrate the discriminator, sample with the requested selector,
//! compute metrics, and write machine-readable outputs.
//!
//! Every stage draws from a fixed counter-based substream of the config
//! seed, so a (config, seed) pair fully determines every output byte of
//! the CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{
    fit_calibrator, make_calibration_set, z_statistic, Calibrator, CalibratorKind,
};
use crate::config::{DiscriminatorSpec, ExperimentConfig, ExperimentKind, Selector};
use crate::error::{Error, Result};
use crate::metrics::{assign_modes, high_quality_rate, mode_jsd, within_mode_std};
use crate::mixtures::{make_grid25, make_univariate4, GaussianMixture};
use crate::mlp::{mlp_train, MlpNet};
use crate::models::{imperfect_grid_generator, oracle_discriminator, warp_discriminator,
    Discriminator, Generator};
use crate::numeric::clamp_prob;
use crate::samplers::{
    drs_estimate_max, drs_sample_iid, mh_sample_iid, substream, DrsConfig, MhConfig,
};

// Auxiliary stream ids; chain substreams occupy 0..n_samples.
const AUX: u64 = 1 << 32;
const STREAM_TRAIN_REAL: u64 = AUX + 1;
const STREAM_TRAIN_FAKE: u64 = AUX + 2;
const STREAM_CAL: u64 = AUX + 3;
const STREAM_EVAL: u64 = AUX + 4;
const STREAM_REAL_POOL: u64 = AUX + 5;
const STREAM_PILOT: u64 = AUX + 6;
const STREAM_DIRECT: u64 = AUX + 7;

/// Echo of the run: config, library version, per-stage timings and
/// SHA-256 digests of every output file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub timings_ms: Vec<(String, u128)>,
    pub digests: BTreeMap<String, String>,
}

/// One metrics.csv row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub selector: String,
    pub calibrator: String,
    pub k: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub acceptance_rate: f64,
    pub restart_rate: f64,
    pub z_raw: f64,
    pub z_cal: f64,
    pub high_quality_rate: f64,
    pub mode_jsd: f64,
    pub within_mode_std: f64,
    pub m_hat: f64,
    pub total_draws: f64,
}

pub const METRICS_HEADER: &str = "experiment,selector,calibrator,k,seed,n_samples,\
acceptance_rate,restart_rate,z_raw,z_cal,high_quality_rate,mode_jsd,within_mode_std,\
m_hat,total_draws";

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

impl MetricsRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.selector,
            self.calibrator,
            self.k,
            self.seed,
            self.n_samples,
            fmt_opt(self.acceptance_rate),
            fmt_opt(self.restart_rate),
            fmt_opt(self.z_raw),
            fmt_opt(self.z_cal),
            fmt_opt(self.high_quality_rate),
            fmt_opt(self.mode_jsd),
            fmt_opt(self.within_mode_std),
            fmt_opt(self.m_hat),
            fmt_opt(self.total_draws),
        )
    }
}

fn experiment_name(e: ExperimentKind) -> &'static str {
    match e {
        ExperimentKind::Univariate4 => "univariate4",
        ExperimentKind::Grid25 => "grid25",
        ExperimentKind::CalibrationStudy => "calibration_study",
    }
}

fn selector_name(s: Selector) -> &'static str {
    match s {
        Selector::None => "none",
        Selector::Mh => "mh",
        Selector::Drs => "drs",
    }
}

fn calibrator_name(k: CalibratorKind) -> &'static str {
    match k {
        CalibratorKind::Identity => "identity",
        CalibratorKind::Logistic => "logistic",
        CalibratorKind::Isotonic => "isotonic",
        CalibratorKind::Beta => "beta",
    }
}

/// Models shared by all pipeline stages.
pub struct BuiltModels {
    pub p_data: GaussianMixture,
    pub generator: Generator,
    pub raw: Discriminator,
    pub calibrator: Calibrator,
    pub calibrated: Discriminator,
    pub z_raw: f64,
    pub z_cal: f64,
}

/// Build data/generator/discriminator and fit the configured calibrator.
pub fn build_models(cfg: &ExperimentConfig) -> Result<BuiltModels> {
    cfg.validate()?;
    let (p_data, generator) = match cfg.experiment {
        ExperimentKind::Univariate4 => {
            let p_data = make_univariate4(None)?;
            let generator = Generator::Mixture(make_univariate4(cfg.missing_mode)?);
            (p_data, generator)
        }
        ExperimentKind::Grid25 | ExperimentKind::CalibrationStudy => {
            let p_data = make_grid25();
            let generator = imperfect_grid_generator(&cfg.drop_modes, cfg.bridge_weight)?;
            (p_data, generator)
        }
    };

    let raw = match &cfg.discriminator {
        DiscriminatorSpec::Oracle | DiscriminatorSpec::Warped { .. } => {
            let p_gen = match &generator {
                Generator::Mixture(m) => m.clone(),
                Generator::GridBridge { .. } => {
                    return Err(Error::Config {
                        field: "discriminator".into(),
                        message:
                            "oracle/warped discriminators need an analytic generator \
                             (set bridge_weight = 0 or use the mlp discriminator)"
                                .into(),
                    })
                }
            };
            let oracle = oracle_discriminator(&p_data, &p_gen)?;
            match &cfg.discriminator {
                DiscriminatorSpec::Warped { a, b } => warp_discriminator(&oracle, *a, *b)?,
                _ => oracle,
            }
        }
        DiscriminatorSpec::Mlp { train, train_size } => {
            let real = p_data.sample(*train_size, &mut substream(cfg.seed, STREAM_TRAIN_REAL));
            let fake = generator.sample(*train_size, &mut substream(cfg.seed, STREAM_TRAIN_FAKE));
            let net = MlpNet::discriminator(p_data.dim(), cfg.seed ^ train.seed);
            let (trained, _) = mlp_train(&net, &real, &fake, train)?;
            Discriminator::Mlp(trained)
        }
    };

    // held-out calibration set, disjoint from any training draws
    let mut cal_rng = substream(cfg.seed, STREAM_CAL);
    let half = cfg.calibration_size / 2;
    let cal_real = p_data.sample(half, &mut cal_rng);
    let cal_fake = generator.sample(half, &mut cal_rng);
    let cal_set = make_calibration_set(&cal_real, &cal_fake, &raw, &mut cal_rng)?;
    let calibrator = fit_calibrator(cfg.calibrator, &cal_set)?;
    let calibrated = Discriminator::Calibrated {
        base: Box::new(raw.clone()),
        calibrator: calibrator.clone(),
    };

    // fresh evaluation set for the Z diagnostic
    let (z_raw, z_cal) = z_pair(cfg, &p_data, &generator, &raw, &calibrated)?;

    Ok(BuiltModels {
        p_data,
        generator,
        raw,
        calibrator,
        calibrated,
        z_raw,
        z_cal,
    })
}

fn z_pair(
    cfg: &ExperimentConfig,
    p_data: &GaussianMixture,
    generator: &Generator,
    raw: &Discriminator,
    calibrated: &Discriminator,
) -> Result<(f64, f64)> {
    let mut rng = substream(cfg.seed, STREAM_EVAL);
    let half = cfg.calibration_size / 2;
    let real = p_data.sample(half, &mut rng);
    let fake = generator.sample(half, &mut rng);
    let mut labels = vec![1u8; half];
    labels.extend(vec![0u8; half]);
    let mut points = real;
    points.extend(fake);
    let clamp_all =
        |d: &Discriminator| -> Vec<f64> { d.score_batch(&points).iter().map(|&s| clamp_prob(s)).collect() };
    let z_raw = z_statistic(&clamp_all(raw), &labels)?;
    let z_cal = z_statistic(&clamp_all(calibrated), &labels)?;
    Ok((z_raw, z_cal))
}

struct SampleOutcome {
    outputs: Vec<Vec<f64>>,
    acceptance_rate: f64,
    restart_rate: f64,
    m_hat: f64,
    total_draws: f64,
    traces: Option<String>,
}

fn run_selector(cfg: &ExperimentConfig, models: &BuiltModels, k: usize) -> Result<SampleOutcome> {
    match cfg.selector {
        Selector::None => {
            let outputs = models
                .generator
                .sample(cfg.n_samples, &mut substream(cfg.seed, STREAM_DIRECT));
            Ok(SampleOutcome {
                outputs,
                acceptance_rate: f64::NAN,
                restart_rate: f64::NAN,
                m_hat: f64::NAN,
                total_draws: cfg.n_samples as f64,
                traces: None,
            })
        }
        Selector::Mh => {
            let real_pool = models
                .p_data
                .sample(cfg.real_pool, &mut substream(cfg.seed, STREAM_REAL_POOL));
            let mh_cfg = MhConfig {
                k,
                restart_on_no_accept: cfg.restart_on_no_accept,
                seed: cfg.seed,
                collect_trace: cfg.emit_traces,
                record_steps: Vec::new(),
            };
            let (chains, stats) = mh_sample_iid(
                &models.generator,
                &models.calibrated,
                &real_pool,
                cfg.n_samples,
                &mh_cfg,
            )?;
            let traces = cfg.emit_traces.then(|| {
                let mut out = String::from("chain_id,step,d_current,d_proposal,alpha,accepted\n");
                for (i, c) in chains.iter().enumerate() {
                    for t in c.trace.iter().flatten() {
                        let _ = writeln!(
                            out,
                            "{i},{},{},{},{},{}",
                            t.step, t.d_current, t.d_proposal, t.alpha, t.accepted as u8
                        );
                    }
                }
                out
            });
            Ok(SampleOutcome {
                outputs: chains.into_iter().map(|c| c.output).collect(),
                acceptance_rate: stats.acceptance_rate,
                restart_rate: stats.restart_rate,
                m_hat: f64::NAN,
                total_draws: stats.total_draws as f64,
                traces,
            })
        }
        Selector::Drs => {
            let m_hat = drs_estimate_max(
                &models.generator,
                &models.calibrated,
                cfg.n_pilot,
                &mut substream(cfg.seed, STREAM_PILOT),
            )?;
            let drs_cfg = DrsConfig {
                n_pilot: cfg.n_pilot,
                gamma: cfg.gamma,
                max_draws: cfg.max_draws,
                seed: cfg.seed,
            };
            let (outputs, stats) = drs_sample_iid(
                &models.generator,
                &models.calibrated,
                m_hat,
                cfg.n_samples,
                &drs_cfg,
            )?;
            Ok(SampleOutcome {
                outputs,
                acceptance_rate: stats.acceptance_rate,
                restart_rate: f64::NAN,
                m_hat,
                total_draws: stats.total_draws as f64,
                traces: None,
            })
        }
    }
}

fn metrics_for(
    cfg: &ExperimentConfig,
    models: &BuiltModels,
    outcome: &SampleOutcome,
    k: usize,
) -> Result<MetricsRow> {
    let assignment = assign_modes(&outcome.outputs, &models.p_data)?;
    let hq = high_quality_rate(&assignment)?;
    let jsd = mode_jsd(&assignment);
    let std = within_mode_std(&outcome.outputs, &assignment, &models.p_data).unwrap_or(f64::NAN);
    Ok(MetricsRow {
        experiment: experiment_name(cfg.experiment).into(),
        selector: selector_name(cfg.selector).into(),
        calibrator: calibrator_name(cfg.calibrator).into(),
        k,
        seed: cfg.seed,
        n_samples: outcome.outputs.len(),
        acceptance_rate: outcome.acceptance_rate,
        restart_rate: outcome.restart_rate,
        z_raw: models.z_raw,
        z_cal: models.z_cal,
        high_quality_rate: hq,
        mode_jsd: jsd,
        within_mode_std: std,
        m_hat: outcome.m_hat,
        total_draws: outcome.total_draws,
    })
}

fn samples_csv(outputs: &[Vec<f64>]) -> String {
    let d = outputs.first().map_or(1, |x| x.len());
    let mut header = String::from("sample_id");
    for i in 0..d {
        let _ = write!(header, ",x{i}");
    }
    let mut out = header;
    out.push('\n');
    for (i, x) in outputs.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in x {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn write_and_digest(
    dir: &Path,
    name: &str,
    content: &str,
    digests: &mut BTreeMap<String, String>,
) -> Result<()> {
    std::fs::write(dir.join(name), content)?;
    let mut h = Sha256::new();
    h.update(content.as_bytes());
    digests.insert(name.to_string(), format!("{:x}", h.finalize()));
    Ok(())
}

/// Run the full configured pipeline and write samples.csv, metrics.csv,
/// optional traces.csv and manifest.json into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut timings = Vec::new();
    let mut digests = BTreeMap::new();

    let t0 = Instant::now();
    let models = build_models(cfg)?;
    timings.push(("build_models".to_string(), t0.elapsed().as_millis()));

    let mut rows = Vec::new();
    if cfg.experiment == ExperimentKind::CalibrationStudy {
        // one Z-diagnostic row per calibrator family; no sampling
        let t = Instant::now();
        let mut cal_rng = substream(cfg.seed, STREAM_CAL);
        let half = cfg.calibration_size / 2;
        let cal_real = models.p_data.sample(half, &mut cal_rng);
        let cal_fake = models.generator.sample(half, &mut cal_rng);
        let cal_set = make_calibration_set(&cal_real, &cal_fake, &models.raw, &mut cal_rng)?;
        for kind in [
            CalibratorKind::Identity,
            CalibratorKind::Logistic,
            CalibratorKind::Isotonic,
            CalibratorKind::Beta,
        ] {
            let calibrator = fit_calibrator(kind, &cal_set)?;
            let calibrated = Discriminator::Calibrated {
                base: Box::new(models.raw.clone()),
                calibrator,
            };
            let (z_raw, z_cal) =
                z_pair(cfg, &models.p_data, &models.generator, &models.raw, &calibrated)?;
            rows.push(MetricsRow {
                experiment: experiment_name(cfg.experiment).into(),
                selector: "none".into(),
                calibrator: calibrator_name(kind).into(),
                k: cfg.k,
                seed: cfg.seed,
                n_samples: cfg.calibration_size,
                acceptance_rate: f64::NAN,
                restart_rate: f64::NAN,
                z_raw,
                z_cal,
                high_quality_rate: f64::NAN,
                mode_jsd: f64::NAN,
                within_mode_std: f64::NAN,
                m_hat: f64::NAN,
                total_draws: f64::NAN,
            });
        }
        timings.push(("calibration_study".to_string(), t.elapsed().as_millis()));
    } else {
        let t = Instant::now();
        let outcome = run_selector(cfg, &models, cfg.k)?;
        timings.push(("sampling".to_string(), t.elapsed().as_millis()));

        let t = Instant::now();
        rows.push(metrics_for(cfg, &models, &outcome, cfg.k)?);
        timings.push(("metrics".to_string(), t.elapsed().as_millis()));

        write_and_digest(&cfg.out_dir, "samples.csv", &samples_csv(&outcome.outputs), &mut digests)?;
        if let Some(traces) = &outcome.traces {
            write_and_digest(&cfg.out_dir, "traces.csv", traces, &mut digests)?;
        }
    }

    let mut metrics = String::from(METRICS_HEADER);
    metrics.push('\n');
    for row in &rows {
        metrics.push_str(&row.to_csv());
        metrics.push('\n');
    }
    write_and_digest(&cfg.out_dir, "metrics.csv", &metrics, &mut digests)?;

    let manifest = RunManifest {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timings_ms: timings,
        digests,
    };
    std::fs::write(
        cfg.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Run the sampling + metrics stages once per chain length, sharing the
/// seed base and built models; emits one metrics row per k.
pub fn sweep_k(cfg: &ExperimentConfig, k_values: &[usize]) -> Result<(Vec<MetricsRow>, RunManifest)> {
    cfg.validate()?;
    if k_values.is_empty() {
        return Err(Error::Config {
            field: "k_values".into(),
            message: "must be non-empty".into(),
        });
    }
    if k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config {
            field: "k_values".into(),
            message: "must be strictly ascending".into(),
        });
    }
    if cfg.experiment == ExperimentKind::CalibrationStudy {
        return Err(Error::Config {
            field: "experiment".into(),
            message: "sweep-k needs a sampling experiment".into(),
        });
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut timings = Vec::new();
    let mut digests = BTreeMap::new();

    let t0 = Instant::now();
    let models = build_models(cfg)?;
    timings.push(("build_models".to_string(), t0.elapsed().as_millis()));

    let mut rows = Vec::new();
    for &k in k_values {
        let t = Instant::now();
        let outcome = run_selector(cfg, &models, k)?;
        rows.push(metrics_for(cfg, &models, &outcome, k)?);
        timings.push((format!("k={k}"), t.elapsed().as_millis()));
    }

    let mut metrics = String::from(METRICS_HEADER);
    metrics.push('\n');
    for row in &rows {
        metrics.push_str(&row.to_csv());
        metrics.push('\n');
    }
    write_and_digest(&cfg.out_dir, "metrics.csv", &metrics, &mut digests)?;

    let manifest = RunManifest {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timings_ms: timings,
        digests,
    };
    std::fs::write(
        cfg.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok((rows, manifest))
}

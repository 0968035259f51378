//! Experiment drivers behind the CLI subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ampsure_core::damp::{
    damp_run, estimate_sigma_image, estimate_sigma_measurement, residual_rms, DAmpConfig, DenoiserBank,
};
use ampsure_core::denoise::{Denoiser, HardThresholdBlockDct, Identity, Scale, SoftThreshold};
use ampsure_core::exec::Executor;
use ampsure_core::learn::{
    joint_loop, synthetic_pairs, train_with, Arch, JointReport, Objective, TrainConfig, TrainData, TrainReport,
    TrainableDenoiser,
};
use ampsure_core::measure::{make_cdp_op, make_gaussian_op, make_mri_op, Measurement, MeasurementOp, NoiseSpec, OperatorKind};
use ampsure_core::metrics::{psnr, residual_histogram, ResidualHistogram, DEFAULT_BINS};
use ampsure_core::phantom::corpus;
use ampsure_core::rng::derive_seed;
use ampsure_core::sure::{unbiasedness_report, UnbiasednessReport};
use ampsure_core::Image;

use crate::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::formats::{load_weights, save_weights};
use crate::imageio::{ingest_image, write_pgm, IngestOptions};
use crate::report::{histogram_tsv, write_metrics_csv, MetricsRow};

/// Method tag of the recoveries produced by the joint loop.
pub const JOINT_METHOD: &str = "ldamp-sure";

/// A ground-truth image with its identifier.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: String,
    pub image: Image,
}

/// Dataset images (PGM/PNG, sorted by file name) cropped to
/// `image_size`, or synthetic phantoms when no dataset is configured.
pub fn load_instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>> {
    let size = cfg.image_size;
    let Some(dir) = &cfg.dataset else {
        return Ok(corpus(cfg.num_images, size, size, derive_seed(cfg.seed, 4))
            .into_iter()
            .enumerate()
            .map(|(i, image)| Instance {
                id: format!("phantom_{i:03}"),
                image,
            })
            .collect());
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no .pgm or .png images in {}", dir.display())));
    }
    let opts = IngestOptions {
        subsample: cfg.subsample,
        crop: Some((size, size)),
    };
    paths
        .iter()
        .map(|p| {
            Ok(Instance {
                id: p.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string(),
                image: ingest_image(p, &opts)?,
            })
        })
        .collect()
}

/// Square `size × size` operator of the requested kind.
pub fn build_operator(kind: OperatorKind, size: usize, rate: f64, seed: u64) -> Result<MeasurementOp> {
    let n = size * size;
    Ok(match kind {
        OperatorKind::GaussianDense => {
            let m = ((rate * n as f64).floor() as usize).max(1);
            make_gaussian_op(m, n, seed)?.with_image_shape(size, size)?
        }
        OperatorKind::CodedDiffraction => make_cdp_op(size, size, rate, seed)?,
        OperatorKind::RadialFourierMri => make_mri_op(size, size, rate, seed)?,
    })
}

pub fn measure(op: &MeasurementOp, x: &Image, noise_sigma: f64, seed: u64) -> Result<Measurement> {
    if noise_sigma > 0.0 {
        Ok(op.measure_with_noise(x, NoiseSpec::new(noise_sigma, seed)?)?)
    } else {
        Ok(op.apply(x)?)
    }
}

fn damp_cfg_for(cfg: &DAmpConfig, index: usize) -> DAmpConfig {
    DAmpConfig {
        probe_seed: derive_seed(cfg.probe_seed, index as u64),
        ..cfg.clone()
    }
}

fn measurements(cfg: &ExperimentConfig, op: &MeasurementOp, instances: &[Instance]) -> Result<Vec<Measurement>> {
    instances
        .iter()
        .enumerate()
        .map(|(i, inst)| measure(op, &inst.image, cfg.noise_sigma, derive_seed(cfg.seed, 100 + i as u64)))
        .collect()
}

fn check_shapes(cfg: &ExperimentConfig, instances: &[Instance]) -> Result<()> {
    if instances.is_empty() {
        return Err(Error::Config("no images".into()));
    }
    for inst in instances {
        if (inst.image.width(), inst.image.height()) != (cfg.image_size, cfg.image_size) {
            return Err(Error::Config(format!(
                "image {} is {}x{}, expected {}x{}",
                inst.id,
                inst.image.width(),
                inst.image.height(),
                cfg.image_size,
                cfg.image_size
            )));
        }
    }
    Ok(())
}

/// One recovered image with its metrics.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub row: MetricsRow,
    pub image: Image,
    pub histogram: Option<ResidualHistogram>,
}

/// Recovers every instance with every configured method. `learned` is
/// required when [`Method::Learned`] is selected.
pub fn recover_all<E: Executor>(
    cfg: &ExperimentConfig,
    instances: &[Instance],
    learned: Option<&TrainableDenoiser>,
    exec: &E,
) -> Result<Vec<Recovery>> {
    cfg.validate()?;
    check_shapes(cfg, instances)?;
    if cfg.methods.contains(&Method::Learned) && learned.is_none() {
        return Err(Error::Config("method ldamp needs a weights file".into()));
    }
    let op = build_operator(cfg.operator, cfg.image_size, cfg.rate, cfg.operator_seed)?;
    let ys = measurements(cfg, &op, instances)?;
    let hard = HardThresholdBlockDct::default();
    let soft = SoftThreshold::dct();
    let jobs: Vec<(usize, Method)> = (0..instances.len())
        .flat_map(|i| cfg.methods.iter().map(move |&m| (i, m)))
        .collect();
    let results = exec.map(&jobs, |_, &(i, method)| -> Result<Recovery> {
        let bank = match method {
            Method::Hard => DenoiserBank::single(&hard),
            Method::Soft => DenoiserBank::single(&soft),
            Method::Learned => DenoiserBank::new(learned.expect("checked above"), &hard),
        };
        let truth = &instances[i].image;
        let damp_cfg = damp_cfg_for(&cfg.damp, i);
        let start = Instant::now();
        let out = match damp_run(&op, &ys[i], &bank, &damp_cfg, None) {
            // a learned run that blows up is redone with the fallback alone
            Err(ampsure_core::Error::Divergence { .. } | ampsure_core::Error::SigmaRange { .. })
                if method == Method::Learned =>
            {
                damp_run(&op, &ys[i], &DenoiserBank::single(&hard), &damp_cfg, None)?
            }
            r => r?,
        };
        let runtime = start.elapsed().as_secs_f64();
        let sigma_true = residual_rms(&out.state.pseudo_clean, truth);
        let histogram = if cfg.emit_histograms && out.state.sigma_hat > 0.0 {
            Some(residual_histogram(&out.state.pseudo_clean, truth, out.state.sigma_hat, DEFAULT_BINS)?)
        } else {
            None
        };
        Ok(Recovery {
            row: MetricsRow {
                image_id: instances[i].id.clone(),
                method: method.tag().to_string(),
                rate: cfg.rate,
                psnr_db: psnr(&out.image, truth)?,
                runtime_s: cfg.record_runtime.then_some(runtime),
                sigma_hat_final: out.state.sigma_hat,
                sigma_true_final: cfg.record_sigma_true.then_some(sigma_true),
            },
            image: out.image,
            histogram,
        })
    });
    results.into_iter().collect()
}

/// Writes `metrics.csv`, `images/<id>_<method>.pgm` and, when present,
/// `histograms/<id>_<method>.tsv` under `out`.
pub fn write_recoveries(recoveries: &[Recovery], out: &Path) -> Result<()> {
    let images = out.join("images");
    fs::create_dir_all(&images).map_err(Error::io(&images))?;
    for r in recoveries {
        write_pgm(&r.image, &images.join(format!("{}_{}.pgm", r.row.image_id, r.row.method)))?;
        if let Some(h) = &r.histogram {
            let dir = out.join("histograms");
            fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
            let path = dir.join(format!("{}_{}.tsv", r.row.image_id, r.row.method));
            fs::write(&path, histogram_tsv(h)).map_err(Error::io(&path))?;
        }
    }
    let rows: Vec<MetricsRow> = recoveries.iter().map(|r| r.row.clone()).collect();
    write_metrics_csv(&rows, &out.join("metrics.csv"))
}

/// Both noise-level estimates of one D-AMP run against the true residual.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRow {
    pub image_id: String,
    pub sigma_true: f64,
    /// `‖z‖/√M`.
    pub sigma_measurement: f64,
    /// `‖Re Aᴴz‖/√N`.
    pub sigma_image: f64,
    /// KS statistic of the residual normalized by each estimate.
    pub ks_measurement: f64,
    pub ks_image: f64,
}

impl EstimatorRow {
    pub fn error_measurement(&self) -> f64 {
        (self.sigma_measurement - self.sigma_true).abs()
    }

    pub fn error_image(&self) -> f64 {
        (self.sigma_image - self.sigma_true).abs()
    }

    /// The image-domain estimate is closer to the truth.
    pub fn image_wins(&self) -> bool {
        self.error_image() < self.error_measurement()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub rows: Vec<EstimatorRow>,
}

impl EstimatorReport {
    fn mean(&self, f: impl Fn(&EstimatorRow) -> f64) -> f64 {
        self.rows.iter().map(f).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mae_measurement(&self) -> f64 {
        self.mean(EstimatorRow::error_measurement)
    }

    pub fn mae_image(&self) -> f64 {
        self.mean(EstimatorRow::error_image)
    }

    pub fn mean_rel_measurement(&self) -> f64 {
        self.mean(|r| r.error_measurement() / r.sigma_true)
    }

    pub fn mean_rel_image(&self) -> f64 {
        self.mean(|r| r.error_image() / r.sigma_true)
    }

    /// Instances where the image-domain normalization gives the smaller
    /// KS statistic.
    pub fn ks_wins_image(&self) -> usize {
        self.rows.iter().filter(|r| r.ks_image < r.ks_measurement).count()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "image_id\tsigma_true\tsigma_measurement\tsigma_image\terr_measurement\terr_image\tks_measurement\tks_image\tcloser\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.5}\t{:.5}\t{}",
                r.image_id,
                r.sigma_true,
                r.sigma_measurement,
                r.sigma_image,
                r.error_measurement(),
                r.error_image(),
                r.ks_measurement,
                r.ks_image,
                if r.image_wins() { "image" } else { "measurement" }
            );
        }
        let _ = writeln!(
            out,
            "# mean_abs_error\tmeasurement {:.4}\timage {:.4}\tks_wins_image {}/{}",
            self.mae_measurement(),
            self.mae_image(),
            self.ks_wins_image(),
            self.rows.len()
        );
        out
    }
}

/// Runs D-AMP with the fallback denoiser on each instance, each with its
/// own operator drawn from `operator_seed`, and compares both estimators
/// on the final residual. The loop itself uses `cfg.damp.estimator`.
pub fn compare_estimators<E: Executor>(
    cfg: &ExperimentConfig,
    instances: &[Instance],
    exec: &E,
) -> Result<EstimatorReport> {
    cfg.validate()?;
    check_shapes(cfg, instances)?;
    let hard = HardThresholdBlockDct::default();
    let rows = exec.map(instances, |i, inst| -> Result<EstimatorRow> {
        let op = build_operator(cfg.operator, cfg.image_size, cfg.rate, derive_seed(cfg.operator_seed, i as u64))?;
        let y = measure(&op, &inst.image, cfg.noise_sigma, derive_seed(cfg.seed, 100 + i as u64))?;
        let out = damp_run(&op, &y, &DenoiserBank::single(&hard), &damp_cfg_for(&cfg.damp, i), None)?;
        let sigma_true = residual_rms(&out.state.pseudo_clean, &inst.image);
        let sigma_measurement = estimate_sigma_measurement(&out.state.z);
        let sigma_image = estimate_sigma_image(&op, &out.state.z)?;
        let ks = |s: f64| -> Result<f64> {
            Ok(residual_histogram(&out.state.pseudo_clean, &inst.image, s, DEFAULT_BINS)?.ks_statistic)
        };
        Ok(EstimatorRow {
            image_id: inst.id.clone(),
            sigma_true,
            sigma_measurement,
            sigma_image,
            ks_measurement: ks(sigma_measurement)?,
            ks_image: ks(sigma_image)?,
        })
    });
    Ok(EstimatorReport {
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SureCheckRow {
    pub denoiser: &'static str,
    pub sigma: f64,
    pub report: UnbiasednessReport,
}

/// Mean MC-SURE against mean true error for the analytic denoisers on a
/// synthetic hidden image, one row per denoiser and noise level.
pub fn sure_check<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Result<Vec<SureCheckRow>> {
    cfg.validate()?;
    let hidden = &corpus(1, cfg.image_size, cfg.image_size, derive_seed(cfg.seed, 5))[0];
    let denoisers: [(&'static str, Box<dyn Denoiser>); 3] = [
        ("identity", Box::new(Identity)),
        ("scale-0.5", Box::new(Scale::new(0.5))),
        ("soft-dct", Box::new(SoftThreshold::dct())),
    ];
    let jobs: Vec<(usize, f64)> = (0..denoisers.len())
        .flat_map(|d| cfg.sigmas.iter().map(move |&s| (d, s)))
        .collect();
    let rows = exec.map(&jobs, |j, &(d, sigma)| -> Result<SureCheckRow> {
        let (name, den) = &denoisers[d];
        Ok(SureCheckRow {
            denoiser: name,
            sigma,
            report: unbiasedness_report(den.as_ref(), hidden, sigma, cfg.trials, derive_seed(cfg.seed, 200 + j as u64))?,
        })
    });
    rows.into_iter().collect()
}

pub fn sure_check_tsv(rows: &[SureCheckRow]) -> String {
    let mut out = String::from("denoiser\tsigma\tmean_sure\tmean_mse\trel_gap\tstd_sure\tstd_mse\ttrials\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.3}\t{:.3}\t{}\t{:.3}\t{:.3}\t{}",
            r.denoiser,
            r.sigma,
            r.report.mean_sure,
            r.report.mean_mse,
            r.report.rel_gap.map(|g| format!("{g:.5}")).unwrap_or_else(|| "NA".into()),
            r.report.std_sure,
            r.report.std_mse,
            r.report.trials
        );
    }
    out
}

/// Untrained model of the configured architecture.
pub fn initial_model(cfg: &ExperimentConfig) -> Result<TrainableDenoiser> {
    let sigma_max = cfg.train.sigma_max;
    Ok(match cfg.arch {
        Arch::LearnedShrinkage => TrainableDenoiser::learned_shrinkage(1.0, sigma_max)?,
        Arch::SmallResidualCnn => TrainableDenoiser::small_cnn(derive_seed(cfg.seed, 6), sigma_max)?,
    })
}

/// Trains on two noisy copies per clean image, σ uniform in
/// `(0, sigma_max]`.
pub fn train_on_images<E: Executor>(
    cfg: &ExperimentConfig,
    init: &TrainableDenoiser,
    clean: &[Image],
    train_cfg: &TrainConfig,
    objective: Objective,
    exec: &E,
) -> Result<(TrainableDenoiser, TrainReport)> {
    let pairs = synthetic_pairs(clean, cfg.train.sigma_max, 2, derive_seed(cfg.seed, 7));
    Ok(train_with(init, TrainData::Pairs(&pairs), train_cfg, objective, exec)?)
}

/// MSE pre-training on fallback D-AMP recoveries of the measurements, so
/// no ground truth enters.
pub fn pretrain<E: Executor>(
    cfg: &ExperimentConfig,
    op: &MeasurementOp,
    ys: &[Measurement],
    exec: &E,
) -> Result<(TrainableDenoiser, TrainReport)> {
    let hard = HardThresholdBlockDct::default();
    let recovered = exec.map(ys, |i, y| {
        damp_run(op, y, &DenoiserBank::single(&hard), &damp_cfg_for(&cfg.damp, i), None).map(|o| o.image)
    });
    let recovered = recovered.into_iter().collect::<Result<Vec<_>, _>>()?;
    let train_cfg = TrainConfig {
        epochs: cfg.pretrain_epochs,
        learning_rate: cfg.pretrain_learning_rate,
        lr_drop_epoch: cfg.pretrain_epochs * 3 / 4,
        ..cfg.train_config()
    };
    train_on_images(cfg, &initial_model(cfg)?, &recovered, &train_cfg, Objective::Mse, exec)
}

#[derive(Debug, Clone)]
pub struct JointRun {
    pub recoveries: Vec<Recovery>,
    pub trained: TrainableDenoiser,
    pub report: JointReport,
    pub training_seconds: f64,
}

/// The joint loop on measurements of `instances`. Starts from
/// `cfg.weights` when set, otherwise from [`pretrain`].
pub fn run_joint<E: Executor>(cfg: &ExperimentConfig, instances: &[Instance], exec: &E) -> Result<JointRun> {
    cfg.validate()?;
    check_shapes(cfg, instances)?;
    let op = build_operator(cfg.operator, cfg.image_size, cfg.rate, cfg.operator_seed)?;
    let ys = measurements(cfg, &op, instances)?;
    let start = Instant::now();
    let init = match &cfg.weights {
        Some(p) => load_weights(p)?,
        None => pretrain(cfg, &op, &ys, exec)?.0,
    };
    let hard = HardThresholdBlockDct::default();
    let truth: Vec<Image> = instances.iter().map(|i| i.image.clone()).collect();
    let out = joint_loop(&ys, &op, &init, &hard, &cfg.train_config(), &cfg.damp, Some(&truth), exec)?;
    let training_seconds = start.elapsed().as_secs_f64();
    // Rerun the final recoveries for timing and noise levels; probe seeds
    // match the loop's last harvest, so the images are the same.
    let final_cfg = ExperimentConfig {
        methods: vec![Method::Learned],
        ..cfg.clone()
    };
    let mut recoveries = recover_all(&final_cfg, instances, Some(&out.trained), exec)?;
    for r in &mut recoveries {
        r.row.method = JOINT_METHOD.into();
    }
    Ok(JointRun {
        recoveries,
        trained: out.trained,
        report: out.report,
        training_seconds,
    })
}

pub fn joint_report_tsv(report: &JointReport) -> String {
    let psnr = |p: Option<f64>| p.map(|v| format!("{v:.4}")).unwrap_or_else(|| "NA".into());
    let mut out = String::from("round\tmean_sigma_hat\tmean_psnr\tharvested\tsubstituted\tskipped\n");
    let _ = writeln!(out, "0\t{:.4}\t{}\t\t\t", report.initial_mean_sigma_hat, psnr(report.initial_mean_psnr));
    for r in &report.rounds {
        let _ = writeln!(
            out,
            "{}\t{:.4}\t{}\t{}\t{}\t{}",
            r.round,
            r.mean_sigma_hat,
            psnr(r.mean_psnr),
            r.harvested,
            r.substituted,
            r.skipped
        );
    }
    out
}

pub fn losses_tsv(report: &TrainReport) -> String {
    let mut out = String::from("epoch\tloss\n");
    for (i, l) in report.epoch_losses.iter().enumerate() {
        let _ = writeln!(out, "{}\t{l:.6}", i + 1);
    }
    out
}

pub const TRAINING_TIMES: &str = "training_times.tsv";

/// Adds or replaces `method`'s entry in `out/training_times.tsv`.
pub fn record_training_time(out: &Path, method: &str, seconds: f64) -> Result<()> {
    let path = out.join(TRAINING_TIMES);
    let mut times = read_training_times(out)?;
    times.insert(method.to_string(), format!("{seconds:.1} s"));
    let mut text = String::new();
    for (m, t) in &times {
        let _ = writeln!(text, "{m}\t{t}");
    }
    fs::write(&path, text).map_err(Error::io(&path))
}

pub fn read_training_times(dir: &Path) -> Result<BTreeMap<String, String>> {
    let path = dir.join(TRAINING_TIMES);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(m, t)| (m.to_string(), t.to_string()))
        .collect())
}

pub fn save_model(d: &TrainableDenoiser, out: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(out).map_err(Error::io(out))?;
    let path = out.join(name);
    save_weights(d, &path)?;
    Ok(path)
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ampsure::config::{ExperimentConfig, Method, Profile};
use ampsure::error::{Error, Result};
use ampsure::experiment::{
    compare_estimators, joint_report_tsv, load_instances, losses_tsv, read_training_times, record_training_time,
    recover_all, run_joint, save_model, sure_check, sure_check_tsv, train_on_images, write_recoveries,
    JOINT_METHOD,
};
use ampsure::formats::load_weights;
use ampsure::parallel::RayonExecutor;
use ampsure::report::{read_metrics_csv, summarize, write_metrics_csv};
use ampsure_core::learn::Objective;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ampsure", version, about = "D-AMP recovery and MC-SURE denoiser training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Key-value config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; replaces every derived seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sets the σ switch and outer-round defaults.
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Gaussian,
    Cdp,
    Mri,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Gaussian => Profile::Gaussian,
            ProfileArg::Cdp => Profile::Cdp,
            ProfileArg::Mri => Profile::Mri,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Mse,
    Sure,
}

#[derive(Subcommand)]
enum Command {
    /// Recover every image with each configured method.
    Recover(Common),
    /// Train a denoiser on noisy copies of the images.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "sure")]
        objective: ObjectiveArg,
    },
    /// Joint recovery and MC-SURE training from measurements only.
    Joint(Common),
    /// Compare the measurement- and image-domain noise estimators.
    CompareEstimators(Common),
    /// Mean MC-SURE against mean true error for the analytic denoisers.
    SureCheck(Common),
    /// Summarize metrics CSVs into a PSNR/runtime table per method and rate.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Metrics CSV files or directories holding `metrics.csv`.
        inputs: Vec<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let profile = c.profile.map(Profile::from);
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(p, profile)?,
        None => ExperimentConfig::new(profile.unwrap_or(Profile::Gaussian)),
    };
    if let Some(s) = c.seed {
        cfg.set_seed(s);
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_out(cfg: &ExperimentConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).map_err(|source| Error::Io {
        path: cfg.out.clone(),
        source,
    })?;
    Ok(&cfg.out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> Result<()> {
    let exec = RayonExecutor::from_env()?;
    match cli.command {
        Command::Recover(c) => {
            let cfg = load_config(&c)?;
            let learned = match (&cfg.weights, cfg.methods.contains(&Method::Learned)) {
                (Some(p), true) => Some(load_weights(p)?),
                _ => None,
            };
            let instances = load_instances(&cfg)?;
            let recoveries = recover_all(&cfg, &instances, learned.as_ref(), &exec)?;
            let out = create_out(&cfg)?;
            write_recoveries(&recoveries, out)?;
            for r in &recoveries {
                println!("{}\t{}\t{:.2} dB", r.row.image_id, r.row.method, r.row.psnr_db);
            }
        }
        Command::Train { common, objective } => {
            let cfg = load_config(&common)?;
            let instances = load_instances(&cfg)?;
            let clean: Vec<_> = instances.into_iter().map(|i| i.image).collect();
            let (obj, method) = match objective {
                ObjectiveArg::Mse => (Objective::Mse, "ldamp-mse"),
                ObjectiveArg::Sure => (Objective::McSure, "ldamp-sure-synthetic"),
            };
            let init = ampsure::experiment::initial_model(&cfg)?;
            let start = Instant::now();
            let (trained, report) = train_on_images(&cfg, &init, &clean, &cfg.train_config(), obj, &exec)?;
            let secs = start.elapsed().as_secs_f64();
            let out = create_out(&cfg)?;
            let path = save_model(&trained, out, "weights.ampw")?;
            write(&out.join("losses.tsv"), &losses_tsv(&report))?;
            record_training_time(out, method, secs)?;
            println!("weights written to {}", path.display());
        }
        Command::Joint(c) => {
            let cfg = load_config(&c)?;
            let instances = load_instances(&cfg)?;
            let run = run_joint(&cfg, &instances, &exec)?;
            let out = create_out(&cfg)?;
            save_model(&run.trained, out, "weights.ampw")?;
            write_recoveries(&run.recoveries, out)?;
            write(&out.join("joint_report.tsv"), &joint_report_tsv(&run.report))?;
            record_training_time(out, JOINT_METHOD, run.training_seconds)?;
            print!("{}", joint_report_tsv(&run.report));
        }
        Command::CompareEstimators(c) => {
            let cfg = load_config(&c)?;
            let instances = load_instances(&cfg)?;
            let report = compare_estimators(&cfg, &instances, &exec)?;
            let out = create_out(&cfg)?;
            let text = report.to_tsv();
            write(&out.join("estimators.tsv"), &text)?;
            print!("{text}");
        }
        Command::SureCheck(c) => {
            let cfg = load_config(&c)?;
            let rows = sure_check(&cfg, &exec)?;
            let out = create_out(&cfg)?;
            let text = sure_check_tsv(&rows);
            write(&out.join("sure_check.tsv"), &text)?;
            print!("{text}");
        }
        Command::Eval { common, inputs } => {
            let cfg = load_config(&common)?;
            let inputs = if inputs.is_empty() { vec![cfg.out.clone()] } else { inputs };
            let mut rows = Vec::new();
            let mut times = std::collections::BTreeMap::new();
            for input in &inputs {
                let (csv, dir) = if input.is_dir() {
                    (input.join("metrics.csv"), input.clone())
                } else {
                    (input.clone(), input.parent().map(Path::to_path_buf).unwrap_or_default())
                };
                rows.extend(read_metrics_csv(&csv)?);
                times.extend(read_training_times(&dir)?);
            }
            if rows.is_empty() {
                return Err(Error::Config("no metrics rows to summarize".into()));
            }
            let table = summarize(&rows, &times);
            let out = create_out(&cfg)?;
            write(&out.join("table.tsv"), &table.to_tsv())?;
            write_metrics_csv(&rows, &out.join("combined_metrics.csv"))?;
            print!("{}", table.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

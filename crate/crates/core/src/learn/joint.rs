use alloc::vec::Vec;

use rand::Rng;

use super::train::{train_with, Objective, SampleSource, TrainConfig, TrainData, TrainReport, TrainingSample};
use super::Model;
use crate::damp::{damp_run, estimate_sigma_image, DAmpConfig, DenoiserBank};
use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::image::Image;
use crate::measure::{Measurement, MeasurementOp};
use crate::metrics::{mean, psnr};
use crate::rng::{derive_seed, seeded, standard_normal_vec, stream};

/// Harvested noise levels at or below this are treated as noiseless and
/// kept out of the training set.
pub const SIGMA_FLOOR: f64 = 1e-3;

/// One successful D-AMP run.
#[derive(Debug, Clone)]
pub struct Harvested {
    /// Position in the measurement list.
    pub index: usize,
    /// Final estimate `x_T`.
    pub recovered: Image,
    /// Image-domain σ̂ of the final residual.
    pub sigma_hat: f64,
    /// `None` when `sigma_hat` is below [`SIGMA_FLOOR`].
    pub sample: Option<TrainingSample>,
}

#[derive(Debug)]
pub struct HarvestOutcome {
    pub instances: Vec<Harvested>,
    /// Runs that failed, typically with [`Error::Divergence`].
    pub skipped: Vec<(usize, Error)>,
}

impl HarvestOutcome {
    pub fn samples(&self) -> Vec<TrainingSample> {
        self.instances.iter().filter_map(|h| h.sample.clone()).collect()
    }

    pub fn below_floor(&self) -> Vec<usize> {
        self.instances
            .iter()
            .filter(|h| h.sample.is_none())
            .map(|h| h.index)
            .collect()
    }

    pub fn mean_sigma_hat(&self) -> f64 {
        mean(&self.instances.iter().map(|h| h.sigma_hat).collect::<Vec<_>>())
    }
}

/// Runs D-AMP on every measurement and keeps each final pseudo-clean image
/// with its image-domain noise estimate.
pub fn harvest<E: Executor>(
    op: &MeasurementOp,
    measurements: &[Measurement],
    bank: &DenoiserBank<'_>,
    damp_cfg: &DAmpConfig,
    exec: &E,
) -> Result<HarvestOutcome> {
    damp_cfg.validate()?;
    let runs = exec.map(measurements, |i, y| -> Result<Harvested> {
        let cfg = DAmpConfig {
            probe_seed: derive_seed(damp_cfg.probe_seed, i as u64),
            ..damp_cfg.clone()
        };
        let out = damp_run(op, y, bank, &cfg, None)?;
        let sigma_hat = estimate_sigma_image(op, &out.state.z)?;
        let sample = (sigma_hat > SIGMA_FLOOR).then(|| TrainingSample {
            image: out.state.pseudo_clean.clone(),
            sigma: sigma_hat,
            source: SampleSource::Harvested,
        });
        Ok(Harvested {
            index: i,
            recovered: out.image,
            sigma_hat,
            sample,
        })
    });
    let mut outcome = HarvestOutcome {
        instances: Vec::new(),
        skipped: Vec::new(),
    };
    for (i, r) in runs.into_iter().enumerate() {
        match r {
            Ok(h) => outcome.instances.push(h),
            Err(e @ (Error::Divergence { .. } | Error::SigmaRange { .. })) => outcome.skipped.push((i, e)),
            Err(e) => return Err(e),
        }
    }
    Ok(outcome)
}

/// Keeps samples with `σ ≤ sigma_max` and replaces every other one by
/// `substitutes[p % len] + N(0, σ²)` with σ uniform in `(0, sigma_max]`,
/// where `p` is the sample's position.
pub fn curate(samples: &[TrainingSample], sigma_max: f64, substitutes: &[Image], seed: u64) -> Result<Vec<TrainingSample>> {
    if !(sigma_max > 0.0) {
        return Err(Error::Parameter("sigma_max must be positive".into()));
    }
    let mut out = Vec::with_capacity(samples.len());
    for (p, s) in samples.iter().enumerate() {
        if s.sigma <= sigma_max {
            out.push(TrainingSample {
                source: SampleSource::Harvested,
                ..s.clone()
            });
            continue;
        }
        if substitutes.is_empty() {
            return Err(Error::Curation("outliers present but no substitute images".into()));
        }
        let base = &substitutes[p % substitutes.len()];
        let mut rng = seeded(derive_seed(seed, p as u64), stream::CURATE);
        let sigma = sigma_max * (1.0 - rng.random::<f64>());
        let w = standard_normal_vec(&mut rng, base.len());
        out.push(TrainingSample {
            image: base.with_pixels(base.pixels().iter().zip(&w).map(|(a, b)| a + sigma * b).collect())?,
            sigma,
            source: SampleSource::OutlierSubstitute,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    /// Samples kept as harvested.
    pub harvested: usize,
    /// Outliers replaced by substitutes.
    pub substituted: usize,
    /// D-AMP runs that failed in this round's harvest.
    pub skipped: usize,
    pub train: TrainReport,
    /// Mean image-domain σ̂ of D-AMP with the weights after this round.
    pub mean_sigma_hat: f64,
    /// Mean PSNR of those recoveries when ground truth was supplied.
    pub mean_psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointReport {
    /// D-AMP with the initial weights.
    pub initial_mean_sigma_hat: f64,
    pub initial_mean_psnr: Option<f64>,
    pub rounds: Vec<RoundReport>,
}

#[derive(Debug, Clone)]
pub struct JointOutcome<M> {
    /// Final recovery per measurement.
    pub recovered: Vec<Image>,
    pub trained: M,
    pub report: JointReport,
}

fn mean_psnr(recovered: &[Image], truth: Option<&[Image]>) -> Result<Option<f64>> {
    let Some(truth) = truth else { return Ok(None) };
    let mut v = Vec::with_capacity(recovered.len());
    for (r, t) in recovered.iter().zip(truth) {
        v.push(psnr(r, t)?);
    }
    Ok(Some(mean(&v)))
}

/// Recoveries in measurement order; failed runs fall back to D-AMP with the
/// fallback denoiser alone.
fn complete<E: Executor>(
    h: &HarvestOutcome,
    op: &MeasurementOp,
    measurements: &[Measurement],
    fallback: &dyn Denoiser,
    damp_cfg: &DAmpConfig,
    exec: &E,
) -> Result<Vec<Image>> {
    let mut out: Vec<Option<Image>> = (0..measurements.len()).map(|_| None).collect();
    for inst in &h.instances {
        out[inst.index] = Some(inst.recovered.clone());
    }
    let missing: Vec<usize> = h.skipped.iter().map(|(i, _)| *i).collect();
    let bank = DenoiserBank::single(fallback);
    let redo = exec.map(&missing, |_, &i| damp_run(op, &measurements[i], &bank, damp_cfg, None));
    for (i, r) in missing.iter().zip(redo) {
        out[*i] = Some(r?.image);
    }
    Ok(out.into_iter().map(|o| o.expect("every index filled")).collect())
}

/// The joint recovery and training loop. Each outer round harvests
/// pseudo-clean images with the current blind denoiser, replaces outliers
/// above `cfg.sigma_max` by noisy fallback recoveries, and continues
/// training the denoiser with MC-SURE from its current weights.
///
/// `truth` is only used for the report.
#[allow(clippy::too_many_arguments)]
pub fn joint_loop<M, E>(
    measurements: &[Measurement],
    op: &MeasurementOp,
    init: &M,
    fallback: &dyn Denoiser,
    cfg: &TrainConfig,
    damp_cfg: &DAmpConfig,
    truth: Option<&[Image]>,
    exec: &E,
) -> Result<JointOutcome<M>>
where
    M: Model + Denoiser,
    E: Executor,
{
    if measurements.is_empty() {
        return Err(Error::Parameter("no measurements".into()));
    }
    if let Some(t) = truth {
        crate::error::check_len("ground-truth list", measurements.len(), t.len())?;
    }
    cfg.validate()?;
    let mut current = init.clone();
    let mut h = harvest(op, measurements, &DenoiserBank::new(&current, fallback), damp_cfg, exec)?;
    let mut recovered = complete(&h, op, measurements, fallback, damp_cfg, exec)?;
    let mut report = JointReport {
        initial_mean_sigma_hat: h.mean_sigma_hat(),
        initial_mean_psnr: mean_psnr(&recovered, truth)?,
        rounds: Vec::new(),
    };
    let mut substitutes: Option<Vec<Option<Image>>> = None;

    for round in 1..=cfg.outer_rounds {
        let kept: Vec<&Harvested> = h.instances.iter().filter(|x| x.sample.is_some()).collect();
        let samples: Vec<TrainingSample> = kept.iter().map(|x| x.sample.clone().expect("filtered")).collect();
        let outliers: Vec<usize> = kept
            .iter()
            .filter(|x| x.sample.as_ref().is_some_and(|s| s.sigma > cfg.sigma_max))
            .map(|x| x.index)
            .collect();
        let mut subs = Vec::new();
        if !outliers.is_empty() {
            let cache = substitutes.get_or_insert_with(|| (0..measurements.len()).map(|_| None).collect());
            let todo: Vec<usize> = outliers.iter().copied().filter(|&i| cache[i].is_none()).collect();
            let bank = DenoiserBank::single(fallback);
            let runs = exec.map(&todo, |_, &i| damp_run(op, &measurements[i], &bank, damp_cfg, None));
            for (&i, r) in todo.iter().zip(runs) {
                cache[i] = Some(r?.image);
            }
            // Substitute list aligned with sample positions.
            subs = kept
                .iter()
                .map(|x| cache[x.index].clone().unwrap_or_else(|| x.recovered.clone()))
                .collect();
        }
        let curated = curate(&samples, cfg.sigma_max, &subs, derive_seed(cfg.seed, round as u64))?;
        if curated.is_empty() {
            return Err(Error::Curation(alloc::format!("round {round} has no usable samples")));
        }
        let round_cfg = TrainConfig {
            seed: derive_seed(cfg.seed, 1000 + round as u64),
            ..cfg.clone()
        };
        let (next, train_report) = train_with(&current, TrainData::Samples(&curated), &round_cfg, Objective::McSure, exec)?;
        current = next;
        let skipped_before = h.skipped.len();
        h = harvest(op, measurements, &DenoiserBank::new(&current, fallback), damp_cfg, exec)?;
        recovered = complete(&h, op, measurements, fallback, damp_cfg, exec)?;
        report.rounds.push(RoundReport {
            round,
            harvested: curated.iter().filter(|s| s.source == SampleSource::Harvested).count(),
            substituted: curated.iter().filter(|s| s.source == SampleSource::OutlierSubstitute).count(),
            skipped: skipped_before,
            train: train_report,
            mean_sigma_hat: h.mean_sigma_hat(),
            mean_psnr: mean_psnr(&recovered, truth)?,
        });
    }
    Ok(JointOutcome {
        recovered,
        trained: current,
        report,
    })
}

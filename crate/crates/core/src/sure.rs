//! Supervised (MSE) and unsupervised (Monte-Carlo SURE) denoising losses.
//!
//! For `z = x + w` with `w ~ N(0, σ² I)` the per-image SURE
//!
//! ```text
//! ‖z − D(z)‖² − N σ² + 2 σ² div D(z)
//! ```
//!
//! has the same expectation as `‖D(z) − x‖²` without using `x`. The
//! divergence is replaced by its one-probe Monte-Carlo estimate.

use alloc::vec::Vec;

use crate::denoise::{analytic_divergence, denoise, mc_divergence_from, Denoiser, DenoiserInput, DivergenceProbe};
use crate::error::{check_len, Error, Result};
use crate::image::Image;
use crate::math::{norm_sq, Float};
use crate::rng::{derive_seed, seeded, standard_normal_vec, stream};

/// Probe step for SURE, `ε = factor · σ`.
pub const SURE_EPSILON_FACTOR: f64 = 1e-3;

/// How the divergence term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DivergenceMode {
    /// One probe per image, as given.
    #[default]
    MonteCarlo,
    /// Mean over this many probes per image. The first is the given probe,
    /// the rest are derived from its seed.
    Averaged(usize),
    /// Closed-form divergence; analytic denoisers only. Meant for tests
    /// that separate Monte-Carlo error from the SURE identity itself.
    Exact,
}

/// Batch-mean SURE with its three terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SureLossValue {
    pub total: f64,
    /// Mean `‖z − D(z)‖²`.
    pub fidelity: f64,
    /// Mean `−N σ²`.
    pub penalty: f64,
    /// Mean `2 σ² div D(z)`.
    pub divergence_term: f64,
    /// Pixels per image (of the first image when sizes differ).
    pub n: usize,
    /// Root-mean-square σ over the batch.
    pub sigma: f64,
}

/// Mean over the batch of `‖D(noisy) − clean‖²`.
pub fn mse_loss<D: Denoiser + ?Sized>(d: &D, pairs: &[(DenoiserInput, Image)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let mut total = 0.0;
    for (input, clean) in pairs {
        check_len("clean image", input.image.len(), clean.len())?;
        let out = denoise(d, &input.image, input.sigma)?;
        check_len("denoiser output", clean.len(), out.len())?;
        total += out
            .pixels()
            .iter()
            .zip(clean.pixels())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / pairs.len() as f64)
}

pub fn sure_loss<D: Denoiser + ?Sized>(
    d: &D,
    batch: &[DenoiserInput],
    probes: &[DivergenceProbe],
) -> Result<SureLossValue> {
    sure_loss_with(d, batch, probes, DivergenceMode::MonteCarlo)
}

pub fn sure_loss_with<D: Denoiser + ?Sized>(
    d: &D,
    batch: &[DenoiserInput],
    probes: &[DivergenceProbe],
    mode: DivergenceMode,
) -> Result<SureLossValue> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    check_len("probe list", batch.len(), probes.len())?;
    let (mut fid, mut pen, mut div, mut s2) = (0.0, 0.0, 0.0, 0.0);
    for (input, probe) in batch.iter().zip(probes) {
        let ([f, p, v], _) = sure_terms(d, input, probe, mode)?;
        fid += f;
        pen += p;
        div += v;
        s2 += input.sigma * input.sigma;
    }
    let k = batch.len() as f64;
    let (fidelity, penalty, divergence_term) = (fid / k, pen / k, div / k);
    Ok(SureLossValue {
        total: fidelity + penalty + divergence_term,
        fidelity,
        penalty,
        divergence_term,
        n: batch[0].image.len(),
        sigma: Float::sqrt(s2 / k),
    })
}

/// `[fidelity, penalty, divergence term]` of one image, and `D(z)`.
fn sure_terms<D: Denoiser + ?Sized>(
    d: &D,
    input: &DenoiserInput,
    probe: &DivergenceProbe,
    mode: DivergenceMode,
) -> Result<([f64; 3], Image)> {
    let sigma = input.sigma;
    if !(sigma > 0.0) {
        return Err(Error::DegenerateSigma);
    }
    let z = &input.image;
    check_len("divergence probe", z.len(), probe.len())?;
    let out = denoise(d, z, sigma)?;
    check_len("denoiser output", z.len(), out.len())?;
    let fidelity: f64 = z
        .pixels()
        .iter()
        .zip(out.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let divergence = match mode {
        DivergenceMode::MonteCarlo => mc_divergence_from(d, z, sigma, &out, probe)?,
        DivergenceMode::Averaged(count) => {
            if count == 0 {
                return Err(Error::Parameter("probe count must be positive".into()));
            }
            let mut acc = mc_divergence_from(d, z, sigma, &out, probe)?;
            for j in 1..count {
                let extra = DivergenceProbe::indexed(probe.epsilon(), probe.seed(), j as u64, z.len())?;
                acc += mc_divergence_from(d, z, sigma, &out, &extra)?;
            }
            acc / count as f64
        }
        DivergenceMode::Exact => analytic_divergence(d, z, sigma)?,
    };
    let terms = [fidelity, -(z.len() as f64) * sigma * sigma, 2.0 * sigma * sigma * divergence];
    Ok((terms, out))
}

/// Monte-Carlo comparison of mean SURE against mean true MSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnbiasednessReport {
    pub mean_sure: f64,
    pub mean_mse: f64,
    /// `|mean_sure − mean_mse| / mean_mse`; `None` when `mean_mse = 0`.
    pub rel_gap: Option<f64>,
    pub std_sure: f64,
    pub std_mse: f64,
    pub trials: usize,
}

pub fn unbiasedness_report<D: Denoiser + ?Sized>(
    d: &D,
    x_hidden: &Image,
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<UnbiasednessReport> {
    unbiasedness_report_with(d, x_hidden, sigma, trials, seed, DivergenceMode::MonteCarlo)
}

/// Draws `trials` noisy copies of `x_hidden`, each with its own probe, and
/// compares per-image SURE with the true squared error.
pub fn unbiasedness_report_with<D: Denoiser + ?Sized>(
    d: &D,
    x_hidden: &Image,
    sigma: f64,
    trials: usize,
    seed: u64,
    mode: DivergenceMode,
) -> Result<UnbiasednessReport> {
    if trials < 2 {
        return Err(Error::Parameter("need at least two trials".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::DegenerateSigma);
    }
    let n = x_hidden.len();
    let mut sure = Vec::with_capacity(trials);
    let mut mse = Vec::with_capacity(trials);
    for i in 0..trials as u64 {
        let noise = standard_normal_vec(&mut seeded(derive_seed(seed, i), stream::NOISE), n);
        let z = x_hidden.with_pixels(
            x_hidden
                .pixels()
                .iter()
                .zip(&noise)
                .map(|(x, w)| x + sigma * w)
                .collect(),
        )?;
        let probe = DivergenceProbe::indexed(SURE_EPSILON_FACTOR * sigma, seed, i, n)?;
        let input = DenoiserInput::new(z, sigma)?;
        let ([f, p, v], out) = sure_terms(d, &input, &probe, mode)?;
        sure.push(f + p + v);
        let err: Vec<f64> = out
            .pixels()
            .iter()
            .zip(x_hidden.pixels())
            .map(|(a, b)| a - b)
            .collect();
        mse.push(norm_sq(&err));
    }
    let mean_sure = crate::metrics::mean(&sure);
    let mean_mse = crate::metrics::mean(&mse);
    Ok(UnbiasednessReport {
        mean_sure,
        mean_mse,
        rel_gap: (mean_mse > 0.0).then(|| (mean_sure - mean_mse).abs() / mean_mse),
        std_sure: crate::metrics::std_dev(&sure),
        std_mse: crate::metrics::std_dev(&mse),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::{Identity, Oracle, Scale, SoftThreshold};
    use crate::phantom::piecewise_smooth;
    use alloc::vec;

    fn noisy(x: &Image, sigma: f64, seed: u64) -> DenoiserInput {
        let w = standard_normal_vec(&mut seeded(seed, stream::NOISE), x.len());
        let z = x.with_pixels(x.pixels().iter().zip(&w).map(|(a, b)| a + sigma * b).collect()).unwrap();
        DenoiserInput::new(z, sigma).unwrap()
    }

    #[test]
    fn mse_reference_values() {
        let clean = Image::new(2, 1, vec![3.0, 4.0]).unwrap();
        let same = DenoiserInput::new(clean.clone(), 1.0).unwrap();
        assert_eq!(mse_loss(&Identity, &[(same.clone(), clean.clone())]).unwrap(), 0.0);
        assert_eq!(mse_loss(&Scale::zero(), &[(same, clean)]).unwrap(), 25.0);
    }

    #[test]
    fn identity_sure_is_exact_with_analytic_divergence() {
        let z = Image::from_fn(10, 10, |x, y| (x * y) as f64);
        let input = DenoiserInput::new(z, 10.0).unwrap();
        let probe = DivergenceProbe::new(0.01, 1, 100).unwrap();
        let v = sure_loss_with(&Identity, &[input.clone()], &[probe.clone()], DivergenceMode::Exact).unwrap();
        assert_eq!(v.total, 10_000.0);
        let mc = sure_loss(&Identity, &[input], &[probe.clone()]).unwrap();
        let expected = -100.0 * 100.0 + 2.0 * 100.0 * norm_sq(probe.vector());
        assert!((mc.total - expected).abs() < 1e-6 * expected.abs());
        assert_eq!(mc.fidelity, 0.0);
    }

    #[test]
    fn zero_denoiser_sure_is_energy_minus_noise() {
        let input = noisy(&piecewise_smooth(8, 8, 1), 5.0, 2);
        let probe = DivergenceProbe::new(0.005, 3, 64).unwrap();
        let v = sure_loss(&Scale::zero(), &[input.clone()], &[probe]).unwrap();
        let expected = norm_sq(input.image.pixels()) - 64.0 * 25.0;
        assert!((v.total - expected).abs() < 1e-9 * expected.abs());
        assert_eq!(v.divergence_term, 0.0);
    }

    #[test]
    fn decomposition_holds() {
        let x = piecewise_smooth(16, 16, 4);
        let batch: Vec<_> = (0..3).map(|i| noisy(&x, 10.0 + i as f64, 10 + i)).collect();
        let probes: Vec<_> = (0..3).map(|i| DivergenceProbe::new(0.01, i, 256).unwrap()).collect();
        let v = sure_loss(&SoftThreshold::dct(), &batch, &probes).unwrap();
        let sum = v.fidelity + v.penalty + v.divergence_term;
        assert!((v.total - sum).abs() <= 1e-9 * v.total.abs().max(1.0));
        assert_eq!(v.n, 256);
    }

    #[test]
    fn zero_sigma_is_degenerate() {
        let input = DenoiserInput::new(Image::zeros(2, 2), 0.0).unwrap();
        let probe = DivergenceProbe::new(0.01, 0, 4).unwrap();
        assert!(matches!(sure_loss(&Identity, &[input], &[probe]), Err(Error::DegenerateSigma)));
    }

    #[test]
    fn probe_count_must_match_batch() {
        let input = DenoiserInput::new(Image::zeros(2, 2), 1.0).unwrap();
        assert!(matches!(sure_loss(&Identity, &[input], &[]), Err(Error::Shape { .. })));
    }

    #[test]
    fn scale_sure_tracks_mse() {
        let x = piecewise_smooth(32, 32, 5);
        let r = unbiasedness_report(&Scale::new(0.5), &x, 20.0, 2000, 7).unwrap();
        assert!(r.rel_gap.unwrap() < 0.015, "{r:?}");
    }

    #[test]
    fn identity_report_matches_noise_energy() {
        let x = piecewise_smooth(64, 64, 6);
        let r = unbiasedness_report(&Identity, &x, 10.0, 2000, 8).unwrap();
        assert!((r.mean_mse / (4096.0 * 100.0) - 1.0).abs() < 0.01);
        assert!(r.rel_gap.unwrap() <= 0.02);
    }

    #[test]
    fn two_trials_and_perfect_denoiser() {
        let x = piecewise_smooth(8, 8, 9);
        let r = unbiasedness_report(&Identity, &x, 5.0, 2, 1).unwrap();
        assert_eq!(r.trials, 2);
        assert!(r.std_sure.is_finite());
        let oracle = Oracle::new(x.clone());
        let r = unbiasedness_report(&oracle, &x, 5.0, 4, 1).unwrap();
        assert_eq!(r.mean_mse, 0.0);
        assert!(r.rel_gap.is_none());
        assert!(unbiasedness_report(&Identity, &x, 5.0, 1, 1).is_err());
    }

    #[test]
    fn averaged_probes_reduce_spread() {
        let x = piecewise_smooth(16, 16, 10);
        let input = noisy(&x, 15.0, 3);
        let single: Vec<f64> = (0..40)
            .map(|s| {
                let p = DivergenceProbe::new(0.015, s, 256).unwrap();
                sure_loss(&Identity, &[input.clone()], &[p]).unwrap().total
            })
            .collect();
        let averaged: Vec<f64> = (0..40)
            .map(|s| {
                let p = DivergenceProbe::new(0.015, s, 256).unwrap();
                sure_loss_with(&Identity, &[input.clone()], &[p], DivergenceMode::Averaged(16)).unwrap().total
            })
            .collect();
        assert!(crate::metrics::std_dev(&averaged) < 0.5 * crate::metrics::std_dev(&single));
    }

    #[test]
    fn scaling_covariance_for_linear_denoiser() {
        let x = piecewise_smooth(16, 16, 11);
        let input = noisy(&x, 8.0, 4);
        let probe = DivergenceProbe::new(0.008, 5, 256).unwrap();
        let s = 3.0;
        let scaled = DenoiserInput::new(
            input.image.with_pixels(input.image.pixels().iter().map(|v| v * s).collect()).unwrap(),
            8.0 * s,
        )
        .unwrap();
        let probe_s = DivergenceProbe::from_parts(0.008 * s, 5, probe.vector().to_vec()).unwrap();
        let d = Scale::new(0.7);
        let a = sure_loss(&d, &[input], &[probe]).unwrap();
        let b = sure_loss(&d, &[scaled], &[probe_s]).unwrap();
        for (u, v) in [(a.fidelity, b.fidelity), (a.penalty, b.penalty), (a.divergence_term, b.divergence_term)] {
            assert!((v - s * s * u).abs() <= 1e-9 * v.abs().max(1.0), "{u} {v}");
        }
    }

    #[test]
    fn probe_seed_change_keeps_mean() {
        let x = piecewise_smooth(16, 16, 12);
        let d = SoftThreshold::dct();
        let a = unbiasedness_report(&d, &x, 12.0, 400, 100).unwrap();
        let b = unbiasedness_report(&d, &x, 12.0, 400, 200).unwrap();
        let tol = 2.0 * (a.std_sure.max(b.std_sure) / 20.0) * 3.0;
        assert!((a.mean_sure - b.mean_sure).abs() <= tol);
    }
}

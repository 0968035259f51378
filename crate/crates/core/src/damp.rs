//! Denoiser-based approximate message passing.
//!
//! Starting from `x = 0, z = y`, each iteration computes
//!
//! ```text
//! b  = z_prev · div D(pc_prev) / M'         (Onsager term, 0 on the first step)
//! z  = y − A x + b
//! σ̂  = ‖z‖/√M  or  ‖Re(Aᴴ z)‖/√N
//! pc = x + Re(Aᴴ z)                          (pseudo-clean image)
//! x  = D(pc; σ̂)
//! ```
//!
//! where `D` is the blind denoiser while `σ̂ ≤ sigma_switch` and the fallback
//! denoiser above it. `M'` is `M` for real operators and `2M` for complex
//! ones (see [`onsager_rows`]). The Onsager term keeps `pc − x_true` close to i.i.d.
//! Gaussian noise of standard deviation σ̂.

use alloc::vec;
use alloc::vec::Vec;

use crate::denoise::{denoise, mc_divergence_from, Denoiser, DivergenceProbe};
use crate::error::{check_len, Error, Result};
use crate::image::Image;
use crate::math::{rms, Float};
use crate::measure::{Field, FieldVec, Measurement, MeasurementOp};

/// Blind-denoiser switch used for Gaussian and CDP operators.
pub const SIGMA_SWITCH: f64 = 55.0;
/// Blind-denoiser switch used for radial MRI.
pub const SIGMA_SWITCH_MRI: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// `‖z‖₂ / √M`.
    MeasurementDomain,
    /// `‖Re(Aᴴ z)‖₂ / √N`.
    ImageDomainReal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DAmpConfig {
    pub iterations: usize,
    pub estimator: Estimator,
    pub sigma_switch: f64,
    /// Probe step `ε = factor · max(σ̂, 1)`. The default is large enough to
    /// see the jumps of a hard-threshold denoiser.
    pub probe_epsilon_factor: f64,
    pub probe_seed: u64,
    /// Clamp the returned image to [0, 255]. Iterates are never clamped.
    pub clamp: bool,
}

impl Default for DAmpConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            estimator: Estimator::MeasurementDomain,
            sigma_switch: SIGMA_SWITCH,
            probe_epsilon_factor: 0.1,
            probe_seed: 0,
            clamp: false,
        }
    }
}

impl DAmpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Parameter("D-AMP needs at least one iteration".into()));
        }
        if !(self.probe_epsilon_factor > 0.0) {
            return Err(Error::Parameter("probe epsilon factor must be positive".into()));
        }
        if !(self.sigma_switch >= 0.0) {
            return Err(Error::Parameter("sigma switch must be >= 0".into()));
        }
        Ok(())
    }
}

/// The denoisers available to D-AMP.
#[derive(Clone, Copy)]
pub struct DenoiserBank<'a> {
    pub blind: &'a dyn Denoiser,
    pub fallback: &'a dyn Denoiser,
}

impl<'a> DenoiserBank<'a> {
    pub fn new(blind: &'a dyn Denoiser, fallback: &'a dyn Denoiser) -> Self {
        Self { blind, fallback }
    }

    /// The same denoiser at every noise level.
    pub fn single(d: &'a dyn Denoiser) -> Self {
        Self {
            blind: d,
            fallback: d,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DAmpState {
    /// Current estimate.
    pub x: Image,
    /// Residual of the last completed step (`y` after init).
    pub z: Measurement,
    /// Onsager term folded into `z`.
    pub b: Measurement,
    pub sigma_hat: f64,
    /// Completed iterations.
    pub t: usize,
    /// Input of the last denoiser call, `x + Re(Aᴴ z)`.
    pub pseudo_clean: Image,
    /// Monte-Carlo divergence of the last denoiser call; `None` after init.
    pub divergence: Option<f64>,
    pub used_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub t: usize,
    pub sigma_hat: f64,
    /// RMS of `pseudo_clean − x_true` when ground truth was supplied.
    pub sigma_true: Option<f64>,
    pub used_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct DAmpOutput {
    pub image: Image,
    pub state: DAmpState,
    pub trace: Vec<TraceEntry>,
}

pub fn estimate_sigma_measurement(z: &Measurement) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    Float::sqrt(z.norm_sq() / z.len() as f64)
}

pub fn estimate_sigma_image(op: &MeasurementOp, z: &Measurement) -> Result<f64> {
    Ok(rms(&op.adjoint_real(z)?))
}

pub fn estimate_sigma(op: &MeasurementOp, z: &Measurement, estimator: Estimator) -> Result<f64> {
    match estimator {
        Estimator::MeasurementDomain => Ok(estimate_sigma_measurement(z)),
        Estimator::ImageDomainReal => estimate_sigma_image(op, z),
    }
}

fn check_measurement(op: &MeasurementOp, y: &Measurement) -> Result<()> {
    check_len("measurement", op.m(), y.len())?;
    if op.field() == Field::Real && y.field() == Field::Complex {
        return Err(Error::Parameter("complex measurement for a real operator".into()));
    }
    Ok(())
}

pub fn damp_init(op: &MeasurementOp, y: &Measurement, estimator: Estimator) -> Result<DAmpState> {
    check_measurement(op, y)?;
    let back = op.adjoint_real(y)?;
    Ok(DAmpState {
        x: Image::zeros(op.width(), op.height()),
        z: y.clone(),
        b: FieldVec::zeros(y.field(), y.len()),
        sigma_hat: estimate_sigma(op, y, estimator)?,
        t: 0,
        pseudo_clean: Image::new(op.width(), op.height(), back)?,
        divergence: None,
        used_fallback: false,
    })
}

fn finite_image(pixels: Vec<f64>, like: &Image, iteration: usize) -> Result<Image> {
    if pixels.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { iteration });
    }
    like.with_pixels(pixels)
}

/// Applies the bank's denoiser for noise level `sigma`; a range error from
/// the blind denoiser hands over to the fallback.
fn bank_denoise<'a>(
    bank: &DenoiserBank<'a>,
    image: &Image,
    sigma: f64,
    switch: f64,
) -> Result<(Image, &'a dyn Denoiser, bool)> {
    if sigma <= switch {
        match denoise(bank.blind, image, sigma) {
            Ok(out) => return Ok((out, bank.blind, false)),
            Err(Error::SigmaRange { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((denoise(bank.fallback, image, sigma)?, bank.fallback, true))
}

/// Real degrees of freedom in the measurement. A complex measurement of a
/// real image carries two per row, and dividing by `M` alone overcorrects.
pub fn onsager_rows(op: &MeasurementOp) -> f64 {
    match op.field() {
        Field::Real => op.m() as f64,
        Field::Complex => 2.0 * op.m() as f64,
    }
}

pub fn damp_step(
    state: DAmpState,
    op: &MeasurementOp,
    y: &Measurement,
    bank: &DenoiserBank<'_>,
    cfg: &DAmpConfig,
) -> Result<DAmpState> {
    check_measurement(op, y)?;
    check_len("state estimate", op.n(), state.x.len())?;
    let t = state.t + 1;
    let m = onsager_rows(op);

    let b = match state.divergence {
        Some(div) => state.z.scaled(div / m),
        None => FieldVec::zeros(state.z.field(), state.z.len()),
    };
    let ax = op.apply(&state.x)?;
    let z = y.axpy(-1.0, &ax).axpy(1.0, &b);
    if !z.is_finite() {
        return Err(Error::Divergence { iteration: t });
    }
    let back = op.adjoint_real(&z)?;
    let sigma_hat = match cfg.estimator {
        Estimator::MeasurementDomain => estimate_sigma_measurement(&z),
        Estimator::ImageDomainReal => rms(&back),
    };
    if !sigma_hat.is_finite() {
        return Err(Error::Divergence { iteration: t });
    }
    let pc: Vec<f64> = state
        .x
        .pixels()
        .iter()
        .zip(&back)
        .map(|(x, r)| x + r)
        .collect();
    let pseudo_clean = finite_image(pc, &state.x, t)?;

    let (x_next, used, used_fallback) =
        bank_denoise(bank, &pseudo_clean, sigma_hat, cfg.sigma_switch)?;
    let x_next = finite_image(x_next.into_pixels(), &state.x, t)?;
    let epsilon = sigma_hat.max(1.0) * cfg.probe_epsilon_factor;
    let probe = DivergenceProbe::indexed(epsilon, cfg.probe_seed, t as u64, op.n())?;
    let divergence = mc_divergence_from(used, &pseudo_clean, sigma_hat, &x_next, &probe)?;
    if !divergence.is_finite() {
        return Err(Error::Divergence { iteration: t });
    }

    Ok(DAmpState {
        x: x_next,
        z,
        b,
        sigma_hat,
        t,
        pseudo_clean,
        divergence: Some(divergence),
        used_fallback,
    })
}

/// Runs `cfg.iterations` D-AMP steps. `truth`, when given, only feeds the
/// trace's `sigma_true` column.
pub fn damp_run(
    op: &MeasurementOp,
    y: &Measurement,
    bank: &DenoiserBank<'_>,
    cfg: &DAmpConfig,
    truth: Option<&Image>,
) -> Result<DAmpOutput> {
    cfg.validate()?;
    if let Some(t) = truth {
        check_len("ground truth", op.n(), t.len())?;
    }
    let mut state = damp_init(op, y, cfg.estimator)?;
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        state = damp_step(state, op, y, bank, cfg)?;
        trace.push(TraceEntry {
            t: state.t,
            sigma_hat: state.sigma_hat,
            sigma_true: truth.map(|x| residual_rms(&state.pseudo_clean, x)),
            used_fallback: state.used_fallback,
        });
    }
    let image = if cfg.clamp {
        state.x.clamped(0.0, 255.0)
    } else {
        state.x.clone()
    };
    Ok(DAmpOutput {
        image,
        state,
        trace,
    })
}

/// RMS of `a − b`, the true effective noise level of a pseudo-clean image.
pub fn residual_rms(a: &Image, b: &Image) -> f64 {
    let d: Vec<f64> = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| x - y)
        .collect();
    rms(&d)
}

/// `pseudo_clean − x_true`.
pub fn effective_noise(state: &DAmpState, truth: &Image) -> Vec<f64> {
    let mut out = vec![0.0; truth.len()];
    for ((o, p), t) in out.iter_mut().zip(state.pseudo_clean.pixels()).zip(truth.pixels()) {
        *o = p - t;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::{Oracle, Scale};
    use crate::measure::{make_cdp_op, make_gaussian_op, make_mri_op, NoiseSpec};
    use crate::phantom::piecewise_smooth;

    fn gaussian_problem(size: usize, rate: f64, seed: u64) -> (MeasurementOp, Image, Measurement) {
        let n = size * size;
        let m = (rate * n as f64) as usize;
        let op = make_gaussian_op(m, n, seed)
            .unwrap()
            .with_image_shape(size, size)
            .unwrap();
        let x = piecewise_smooth(size, size, seed);
        let y = op.apply(&x).unwrap();
        (op, x, y)
    }

    #[test]
    fn init_state() {
        let (op, _, y) = gaussian_problem(8, 0.5, 1);
        let s = damp_init(&op, &y, Estimator::MeasurementDomain).unwrap();
        assert!(s.x.pixels().iter().all(|&v| v == 0.0));
        assert_eq!(s.z, y);
        assert_eq!(s.b.norm(), 0.0);
        assert_eq!(s.t, 0);
        let zero = FieldVec::Real(vec![0.0; op.m()]);
        assert_eq!(damp_init(&op, &zero, Estimator::ImageDomainReal).unwrap().sigma_hat, 0.0);
    }

    #[test]
    fn measurement_estimator_arithmetic() {
        assert_eq!(estimate_sigma_measurement(&FieldVec::Real(vec![3.0; 4])), 3.0);
        assert_eq!(estimate_sigma_measurement(&FieldVec::Real(vec![0.0; 4])), 0.0);
    }

    #[test]
    fn measurement_estimator_on_pure_noise() {
        let (op, x, _) = gaussian_problem(90, 1.0, 2);
        let y = op.measure_with_noise(&x, NoiseSpec::new(12.0, 3).unwrap()).unwrap();
        let z = y.axpy(-1.0, &op.apply(&x).unwrap());
        let s = estimate_sigma_measurement(&z);
        assert!((s / 12.0 - 1.0).abs() < 0.03, "{s}");
    }

    #[test]
    fn estimators_agree_for_unitary_operator() {
        let op = make_mri_op(16, 16, 1.0, 0).unwrap();
        let x = piecewise_smooth(16, 16, 3);
        let z = op.apply(&x).unwrap();
        let a = estimate_sigma_measurement(&z);
        let b = estimate_sigma_image(&op, &z).unwrap();
        assert!((a - b).abs() < 1e-10 * a);
        assert_eq!(estimate_sigma_image(&op, &FieldVec::zeros(Field::Complex, op.m())).unwrap(), 0.0);
    }

    #[test]
    fn oracle_denoiser_recovers_in_one_step() {
        let (op, x, y) = gaussian_problem(8, 0.25, 4);
        let oracle = Oracle::new(x.clone());
        let cfg = DAmpConfig {
            iterations: 1,
            ..DAmpConfig::default()
        };
        let out = damp_run(&op, &y, &DenoiserBank::single(&oracle), &cfg, None).unwrap();
        assert_eq!(out.image, x);
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn zero_denoiser_keeps_initial_state() {
        let op = make_cdp_op(8, 8, 0.5, 1).unwrap();
        let x = piecewise_smooth(8, 8, 1);
        let y = op.apply(&x).unwrap();
        let zero = Scale::zero();
        let bank = DenoiserBank::single(&zero);
        let cfg = DAmpConfig::default();
        let mut s = damp_init(&op, &y, cfg.estimator).unwrap();
        for _ in 0..5 {
            s = damp_step(s, &op, &y, &bank, &cfg).unwrap();
            assert!(s.x.pixels().iter().all(|&v| v == 0.0));
            assert_eq!(s.z, y);
            assert_eq!(s.b.norm(), 0.0);
        }
    }

    #[test]
    fn trace_length_and_truth_column() {
        let (op, x, y) = gaussian_problem(8, 0.5, 5);
        let d = Scale::new(0.9);
        let cfg = DAmpConfig {
            iterations: 4,
            ..DAmpConfig::default()
        };
        let out = damp_run(&op, &y, &DenoiserBank::single(&d), &cfg, Some(&x)).unwrap();
        assert_eq!(out.trace.len(), 4);
        assert!(out.trace.iter().all(|e| e.sigma_true.is_some()));
        let bare = damp_run(&op, &y, &DenoiserBank::single(&d), &cfg, None).unwrap();
        assert!(bare.trace.iter().all(|e| e.sigma_true.is_none()));
        assert_eq!(bare.image, out.image);
    }

    #[test]
    fn non_finite_values_raise_divergence() {
        struct Exploding;
        impl Denoiser for Exploding {
            fn name(&self) -> &'static str {
                "exploding"
            }
            fn apply(&self, image: &Image, _sigma: f64) -> Result<Image> {
                image.with_pixels(image.pixels().iter().map(|v| v * 1e200).collect())
            }
        }
        let (op, _, y) = gaussian_problem(8, 0.5, 6);
        let cfg = DAmpConfig::default();
        let err = damp_run(&op, &y, &DenoiserBank::single(&Exploding), &cfg, None).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (op, _, _) = gaussian_problem(8, 0.5, 7);
        let y = FieldVec::Real(vec![0.0; op.m() + 1]);
        assert!(matches!(
            damp_init(&op, &y, Estimator::MeasurementDomain),
            Err(Error::Shape { .. })
        ));
    }
}

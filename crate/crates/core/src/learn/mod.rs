//! Trainable denoisers and training from noisy data alone.
//!
//! Two desk-scale architectures are provided (see [`Arch`]). Both expose
//! exact reverse-mode gradients of the MSE loss and of the Monte-Carlo SURE
//! loss with respect to their weights. [`train`] fits them on patches,
//! [`harvest`] collects pseudo-clean images from D-AMP runs, and
//! [`joint_loop`] alternates the two.

mod cnn;
mod joint;
mod shrinkage;
mod train;

use alloc::vec;
use alloc::vec::Vec;

use crate::denoise::{Denoiser, DenoiserInput, DivergenceProbe};
use crate::error::{check_len, Error, Result};
use crate::image::Image;
use crate::sure::SureLossValue;

pub use joint::{
    curate, harvest, joint_loop, HarvestOutcome, Harvested, JointOutcome, JointReport, RoundReport, SIGMA_FLOOR,
};
pub use shrinkage::{band as shrinkage_band, BANDS as SHRINKAGE_BANDS};
pub use train::{
    synthetic_pairs, train, train_with, Adam, NoisyPair, Objective, SampleSource, TrainConfig, TrainData,
    TrainReport, TrainingSample,
};

/// A denoiser whose output is differentiable in a flat weight vector.
pub trait Model: Clone + Send + Sync {
    fn weights(&self) -> &[f64];
    fn weights_mut(&mut self) -> &mut [f64];
    fn forward(&self, z: &Image, sigma: f64) -> Result<Image>;
    /// Adds `∂⟨g, D(z)⟩/∂w` to `grad`.
    fn backward(&self, z: &Image, sigma: f64, g: &[f64], grad: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    /// 16×16 overlapping block DCT, stride 4, soft threshold `w_g² σ` in
    /// each of 16 frequency bands.
    LearnedShrinkage,
    /// Four 3×3 convolution layers with 16 channels and a residual output.
    SmallResidualCnn,
}

impl Arch {
    pub fn weight_count(self) -> usize {
        match self {
            Arch::LearnedShrinkage => shrinkage::BANDS,
            Arch::SmallResidualCnn => cnn::weight_count(),
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Arch::LearnedShrinkage => 1,
            Arch::SmallResidualCnn => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Arch::LearnedShrinkage),
            2 => Some(Arch::SmallResidualCnn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainableDenoiser {
    arch: Arch,
    weights: Vec<f64>,
    sigma_range: (f64, f64),
}

impl TrainableDenoiser {
    pub fn from_weights(arch: Arch, weights: Vec<f64>, sigma_range: (f64, f64)) -> Result<Self> {
        check_len("weight vector", arch.weight_count(), weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Parameter("weights must be finite".into()));
        }
        let (lo, hi) = sigma_range;
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::Parameter("invalid sigma range".into()));
        }
        Ok(Self {
            arch,
            weights,
            sigma_range,
        })
    }

    /// Shrinkage with threshold multiplier `tau` in every band except DC,
    /// which passes through.
    pub fn learned_shrinkage(tau: f64, sigma_max: f64) -> Result<Self> {
        let mut t = [tau.max(0.0); shrinkage::BANDS];
        t[0] = 0.0;
        Self::from_thresholds(&t, sigma_max)
    }

    /// Shrinkage with the given per-band threshold multipliers.
    pub fn from_thresholds(tau: &[f64], sigma_max: f64) -> Result<Self> {
        if tau.iter().any(|t| *t < 0.0) {
            return Err(Error::Parameter("thresholds must be >= 0".into()));
        }
        let w = tau.iter().map(|t| crate::math::Float::sqrt(*t)).collect();
        Self::from_weights(Arch::LearnedShrinkage, w, (0.0, sigma_max))
    }

    pub fn small_cnn(seed: u64, sigma_max: f64) -> Result<Self> {
        Self::from_weights(Arch::SmallResidualCnn, cnn::init(seed), (0.0, sigma_max))
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sigma_range(&self) -> (f64, f64) {
        self.sigma_range
    }

    /// Per-band threshold multipliers `τ_g = w_g²` of a shrinkage model.
    pub fn thresholds(&self) -> Option<Vec<f64>> {
        (self.arch == Arch::LearnedShrinkage).then(|| self.weights.iter().map(|w| w * w).collect())
    }
}

impl Denoiser for TrainableDenoiser {
    fn name(&self) -> &'static str {
        match self.arch {
            Arch::LearnedShrinkage => "learned-shrinkage",
            Arch::SmallResidualCnn => "small-residual-cnn",
        }
    }

    fn sigma_range(&self) -> (f64, f64) {
        self.sigma_range
    }

    fn apply(&self, image: &Image, sigma: f64) -> Result<Image> {
        Model::forward(self, image, sigma)
    }
}

impl Model for TrainableDenoiser {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn forward(&self, z: &Image, sigma: f64) -> Result<Image> {
        let out = match self.arch {
            Arch::LearnedShrinkage => shrinkage::forward(&self.weights, z, sigma),
            Arch::SmallResidualCnn => cnn::forward(&self.weights, z),
        };
        z.with_pixels(out)
    }

    fn backward(&self, z: &Image, sigma: f64, g: &[f64], grad: &mut [f64]) -> Result<()> {
        check_len("output gradient", z.len(), g.len())?;
        check_len("weight gradient", self.weights.len(), grad.len())?;
        match self.arch {
            Arch::LearnedShrinkage => shrinkage::backward(&self.weights, z, sigma, g, grad),
            Arch::SmallResidualCnn => cnn::backward(&self.weights, z, g, grad),
        }
        Ok(())
    }
}

/// Mean `‖D(z) − x‖²` over the batch and its weight gradient.
pub fn mse_objective<M: Model>(model: &M, batch: &[(DenoiserInput, Image)]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let k = batch.len() as f64;
    let mut grad = vec![0.0; model.weights().len()];
    let mut loss = 0.0;
    for (input, clean) in batch {
        let (l, g) = mse_term(model, input, clean)?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= k);
    Ok((loss / k, grad))
}

pub(crate) fn mse_term<M: Model>(model: &M, input: &DenoiserInput, clean: &Image) -> Result<(f64, Vec<f64>)> {
    check_len("clean image", input.image.len(), clean.len())?;
    let out = model.forward(&input.image, input.sigma)?;
    let diff: Vec<f64> = out.pixels().iter().zip(clean.pixels()).map(|(a, b)| a - b).collect();
    let g: Vec<f64> = diff.iter().map(|d| 2.0 * d).collect();
    let mut grad = vec![0.0; model.weights().len()];
    model.backward(&input.image, input.sigma, &g, &mut grad)?;
    Ok((crate::math::norm_sq(&diff), grad))
}

/// Batch-mean MC-SURE and its exact weight gradient, including the
/// dependence of the divergence term on the weights.
pub fn sure_objective<M: Model>(
    model: &M,
    batch: &[DenoiserInput],
    probes: &[DivergenceProbe],
) -> Result<(SureLossValue, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    check_len("probe list", batch.len(), probes.len())?;
    let k = batch.len() as f64;
    let mut grad = vec![0.0; model.weights().len()];
    let (mut fid, mut pen, mut div, mut s2) = (0.0, 0.0, 0.0, 0.0);
    for (input, probe) in batch.iter().zip(probes) {
        let ([f, p, v], g) = sure_term(model, input, probe)?;
        fid += f;
        pen += p;
        div += v;
        s2 += input.sigma * input.sigma;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= k);
    let (fidelity, penalty, divergence_term) = (fid / k, pen / k, div / k);
    Ok((
        SureLossValue {
            total: fidelity + penalty + divergence_term,
            fidelity,
            penalty,
            divergence_term,
            n: batch[0].image.len(),
            sigma: crate::math::Float::sqrt(s2 / k),
        },
        grad,
    ))
}

pub(crate) fn sure_term<M: Model>(
    model: &M,
    input: &DenoiserInput,
    probe: &DivergenceProbe,
) -> Result<([f64; 3], Vec<f64>)> {
    let sigma = input.sigma;
    if !(sigma > 0.0) {
        return Err(Error::DegenerateSigma);
    }
    let z = &input.image;
    check_len("divergence probe", z.len(), probe.len())?;
    let zp = probe.perturb(z)?;
    let out = model.forward(z, sigma)?;
    let pert = model.forward(&zp, sigma)?;
    let c = 2.0 * sigma * sigma / probe.epsilon();
    let n = probe.vector();
    let resid: Vec<f64> = z.pixels().iter().zip(out.pixels()).map(|(a, b)| a - b).collect();
    let fidelity = crate::math::norm_sq(&resid);
    let probe_diff: f64 = n
        .iter()
        .zip(pert.pixels().iter().zip(out.pixels()))
        .map(|(ni, (p, o))| ni * (p - o))
        .sum();
    let mut grad = vec![0.0; model.weights().len()];
    let g_out: Vec<f64> = resid.iter().zip(n).map(|(r, ni)| -2.0 * r - c * ni).collect();
    model.backward(z, sigma, &g_out, &mut grad)?;
    let g_pert: Vec<f64> = n.iter().map(|ni| c * ni).collect();
    model.backward(&zp, sigma, &g_pert, &mut grad)?;
    let terms = [fidelity, -(z.len() as f64) * sigma * sigma, c * probe_diff];
    Ok((terms, grad))
}

/// Gradient of [`mse_objective`].
pub fn grad_mse<M: Model>(model: &M, batch: &[(DenoiserInput, Image)]) -> Result<Vec<f64>> {
    Ok(mse_objective(model, batch)?.1)
}

/// Gradient of [`sure_objective`].
pub fn grad_sure<M: Model>(model: &M, batch: &[DenoiserInput], probes: &[DivergenceProbe]) -> Result<Vec<f64>> {
    Ok(sure_objective(model, batch, probes)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dct::Dct2d;
    use crate::denoise::soft_threshold;
    use crate::phantom::piecewise_smooth;
    use crate::rng::{seeded, standard_normal_vec};
    use crate::sure::sure_loss;

    fn noisy(x: &Image, sigma: f64, seed: u64) -> DenoiserInput {
        let w = standard_normal_vec(&mut seeded(seed, 0), x.len());
        let z = x.with_pixels(x.pixels().iter().zip(&w).map(|(a, b)| a + sigma * b).collect()).unwrap();
        DenoiserInput::new(z, sigma).unwrap()
    }

    #[test]
    fn zero_thresholds_and_zero_cnn_are_identity() {
        let x = piecewise_smooth(20, 20, 1);
        let shrink = TrainableDenoiser::from_thresholds(&[0.0; 16], 55.0).unwrap();
        let out = Model::forward(&shrink, &x, 10.0).unwrap();
        for (a, b) in out.pixels().iter().zip(x.pixels()) {
            assert!((a - b).abs() < 1e-9);
        }
        let cnn = TrainableDenoiser::from_weights(Arch::SmallResidualCnn, vec![0.0; cnn::weight_count()], (0.0, 55.0)).unwrap();
        assert_eq!(Model::forward(&cnn, &x, 10.0).unwrap(), x);
    }

    #[test]
    fn single_block_matches_hand_soft_threshold() {
        let x = Image::from_fn(4, 4, |a, b| (3 * a + 5 * b) as f64 + if (a + b) % 2 == 0 { 4.0 } else { -4.0 });
        let mut tau = [0.0; 16];
        tau[3] = 0.5;
        let d = TrainableDenoiser::from_thresholds(&tau, 55.0).unwrap();
        let sigma = 6.0;
        let dct = Dct2d::new(4, 4);
        let mut coef = vec![0.0; 16];
        dct.forward(x.pixels(), &mut coef);
        for (i, c) in coef.iter_mut().enumerate() {
            if shrinkage::band(i / 4, i % 4, 4, 4) == 3 {
                *c = soft_threshold(*c, 0.5 * sigma);
            }
        }
        let mut expect = vec![0.0; 16];
        dct.inverse(&coef, &mut expect);
        let out = Model::forward(&d, &x, sigma).unwrap();
        for (a, b) in out.pixels().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn weight_count_is_checked() {
        assert!(TrainableDenoiser::from_weights(Arch::LearnedShrinkage, vec![0.0; 3], (0.0, 1.0)).is_err());
        assert!(TrainableDenoiser::from_weights(Arch::LearnedShrinkage, vec![f64::NAN; 16], (0.0, 1.0)).is_err());
        assert_eq!(Arch::SmallResidualCnn.weight_count(), 160 + 2320 + 2320 + 145);
    }

    #[test]
    fn zero_cnn_clean_input_has_zero_mse_gradient() {
        let x = piecewise_smooth(8, 8, 2);
        let cnn = TrainableDenoiser::from_weights(Arch::SmallResidualCnn, vec![0.0; cnn::weight_count()], (0.0, 55.0)).unwrap();
        let input = DenoiserInput::new(x.clone(), 5.0).unwrap();
        let g = grad_mse(&cnn, &[(input, x)]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn duplicated_pair_has_single_pair_gradient() {
        let x = piecewise_smooth(12, 12, 3);
        let d = TrainableDenoiser::small_cnn(4, 55.0).unwrap();
        let pair = (noisy(&x, 10.0, 5), x.clone());
        let one = grad_mse(&d, &[pair.clone()]).unwrap();
        let two = grad_mse(&d, &[pair.clone(), pair]).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn objective_values_match_sure_module() {
        let x = piecewise_smooth(16, 16, 6);
        let d = TrainableDenoiser::learned_shrinkage(1.5, 55.0).unwrap();
        let batch = vec![noisy(&x, 12.0, 1), noisy(&x, 20.0, 2)];
        let probes: Vec<_> = batch
            .iter()
            .enumerate()
            .map(|(i, b)| DivergenceProbe::new(1e-3 * b.sigma, i as u64, 256).unwrap())
            .collect();
        let (v, _) = sure_objective(&d, &batch, &probes).unwrap();
        let w = sure_loss(&d, &batch, &probes).unwrap();
        assert!((v.total - w.total).abs() <= 1e-9 * w.total.abs());
        let pairs: Vec<_> = batch.iter().map(|b| (b.clone(), x.clone())).collect();
        let (m, _) = mse_objective(&d, &pairs).unwrap();
        assert!((m - crate::sure::mse_loss(&d, &pairs).unwrap()).abs() <= 1e-9 * m);
    }

    #[test]
    fn affine_regime_fidelity_gradient() {
        // Every coefficient far above threshold: D(z) = z − τσ·sign(c) per
        // coefficient, so ‖z − D(z)‖² = Σ_g n_g (w_g² σ)² and the fidelity
        // gradient is 4 n_g w_g³ σ².
        let dct = Dct2d::new(4, 4);
        let coef: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 500.0 + i as f64 } else { -480.0 - i as f64 }).collect();
        let mut px = vec![0.0; 16];
        dct.inverse(&coef, &mut px);
        let z = Image::new(4, 4, px).unwrap();
        let tau: Vec<f64> = (0..16).map(|g| 0.2 + 0.05 * g as f64).collect();
        let d = TrainableDenoiser::from_thresholds(&tau, 55.0).unwrap();
        let sigma = 3.0;
        let out = Model::forward(&d, &z, sigma).unwrap();
        let g: Vec<f64> = z.pixels().iter().zip(out.pixels()).map(|(a, b)| -2.0 * (a - b)).collect();
        let mut grad = vec![0.0; 16];
        d.backward(&z, sigma, &g, &mut grad).unwrap();
        let mut count = [0usize; 16];
        for i in 0..16 {
            count[shrinkage::band(i / 4, i % 4, 4, 4)] += 1;
        }
        for b in 0..16 {
            let w = d.weights()[b];
            let expect = 4.0 * count[b] as f64 * w.powi(3) * sigma * sigma;
            assert!((grad[b] - expect).abs() <= 1e-9 * expect.abs().max(1.0), "band {b}");
        }
    }

    #[test]
    fn zero_image_sure_fidelity_gradient_vanishes() {
        let d = TrainableDenoiser::learned_shrinkage(2.0, 55.0).unwrap();
        let z = Image::zeros(8, 8);
        let out = Model::forward(&d, &z, 10.0).unwrap();
        assert!(out.pixels().iter().all(|v| *v == 0.0));
        let g: Vec<f64> = z.pixels().iter().zip(out.pixels()).map(|(a, b)| -2.0 * (a - b)).collect();
        let mut grad = vec![0.0; 16];
        d.backward(&z, 10.0, &g, &mut grad).unwrap();
        assert!(grad.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn trainable_respects_sigma_range() {
        let d = TrainableDenoiser::learned_shrinkage(1.0, 10.0).unwrap();
        let x = Image::zeros(4, 4);
        assert!(matches!(crate::denoise::denoise(&d, &x, 20.0), Err(Error::SigmaRange { .. })));
    }
}

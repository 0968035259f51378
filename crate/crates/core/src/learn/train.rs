use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{mse_term, sure_term, Model};
use crate::denoise::{DenoiserInput, DivergenceProbe};
use crate::error::{Error, Result};
use crate::exec::{Executor, Sequential};
use crate::image::Image;
use crate::math::Float;
use crate::rng::{derive_seed, seeded, standard_normal_vec, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Mse,
    McSure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    Harvested,
    OutlierSubstitute,
}

/// A noisy training image with its (estimated) noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub image: Image,
    pub sigma: f64,
    pub source: SampleSource,
}

/// A noisy image with its hidden clean counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyPair {
    pub noisy: Image,
    pub clean: Image,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    /// Noisy images only; MC-SURE training.
    Samples(&'a [TrainingSample]),
    /// Noisy images with clean targets; either objective. MC-SURE ignores
    /// the clean images.
    Pairs(&'a [NoisyPair]),
}

impl TrainData<'_> {
    fn len(&self) -> usize {
        match self {
            TrainData::Samples(s) => s.len(),
            TrainData::Pairs(p) => p.len(),
        }
    }

    fn item(&self, i: usize) -> (&Image, Option<&Image>, f64) {
        match self {
            TrainData::Samples(s) => (&s[i].image, None, s[i].sigma),
            TrainData::Pairs(p) => (&p[i].noisy, Some(&p[i].clean), p[i].sigma),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate from `lr_drop_epoch` on.
    pub lr_drop_factor: f64,
    pub lr_drop_epoch: usize,
    pub patch_size: usize,
    pub patches_per_image: usize,
    /// Largest noise level kept as a harvested sample.
    pub sigma_max: f64,
    /// Outer rounds of the joint loop.
    pub outer_rounds: usize,
    /// MC-SURE probe step, `ε = factor · σ`.
    pub epsilon_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            lr_drop_factor: 0.1,
            lr_drop_epoch: 20,
            patch_size: 50,
            patches_per_image: 4,
            sigma_max: 55.0,
            outer_rounds: 2,
            epsilon_factor: crate::sure::SURE_EPSILON_FACTOR,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Narrow noise range and a single outer round, as used for MRI.
    pub fn mri() -> Self {
        Self {
            sigma_max: 10.0,
            outer_rounds: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(alloc::format!("{what} must be positive")));
        if self.batch_size == 0 {
            return bad("batch size");
        }
        if self.patch_size == 0 {
            return bad("patch size");
        }
        if self.patches_per_image == 0 {
            return bad("patches per image");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate");
        }
        if !(self.lr_drop_factor > 0.0) {
            return bad("learning-rate drop factor");
        }
        if !(self.sigma_max > 0.0) {
            return bad("sigma_max");
        }
        if !(self.epsilon_factor > 0.0) {
            return bad("epsilon factor");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if epoch >= self.lr_drop_epoch {
            self.learning_rate * self.lr_drop_factor
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Adaptive-moment gradient descent.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, w: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Float::powi(self.beta1, self.t);
        let c2 = 1.0 - Float::powi(self.beta2, self.t);
        for i in 0..w.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            w[i] -= lr * mh / (Float::sqrt(vh) + self.eps);
        }
    }
}

struct Patch {
    noisy: Image,
    clean: Option<Image>,
    sigma: f64,
    probe: Option<DivergenceProbe>,
}

/// Random square patches with a random dihedral symmetry each. Intensities
/// are never rescaled, so each patch keeps its parent's σ.
fn epoch_patches(data: &TrainData<'_>, cfg: &TrainConfig, epoch: usize, objective: Objective) -> Result<Vec<Patch>> {
    let key = derive_seed(cfg.seed, epoch as u64);
    let mut rng = seeded(key, stream::TRAIN);
    let ps = cfg.patch_size;
    let mut patches = Vec::with_capacity(data.len() * cfg.patches_per_image);
    for i in 0..data.len() {
        let (noisy, clean, sigma) = data.item(i);
        if ps > noisy.width() || ps > noisy.height() {
            return Err(Error::Parameter(alloc::format!(
                "patch size {ps} exceeds image {}x{}",
                noisy.width(),
                noisy.height()
            )));
        }
        for _ in 0..cfg.patches_per_image {
            let x0 = rng.random_range(0..=noisy.width() - ps);
            let y0 = rng.random_range(0..=noisy.height() - ps);
            let k: u8 = rng.random_range(0..8);
            patches.push(Patch {
                noisy: noisy.window(x0, y0, ps, ps).dihedral(k),
                clean: clean.map(|c| c.window(x0, y0, ps, ps).dihedral(k)),
                sigma,
                probe: None,
            });
        }
    }
    patches.shuffle(&mut rng);
    if objective == Objective::McSure {
        let mut probe_rng = seeded(key, stream::PROBE);
        for p in &mut patches {
            if !(p.sigma > 0.0) {
                return Err(Error::DegenerateSigma);
            }
            let v = standard_normal_vec(&mut probe_rng, ps * ps);
            p.probe = Some(DivergenceProbe::from_parts(cfg.epsilon_factor * p.sigma, key, v)?);
        }
    }
    Ok(patches)
}

/// Trains on the calling thread. See [`train_with`].
pub fn train<M: Model>(model: &M, data: TrainData<'_>, cfg: &TrainConfig, objective: Objective) -> Result<(M, TrainReport)> {
    train_with(model, data, cfg, objective, &Sequential)
}

/// Fits `model` with Adam on fresh random patches every epoch. MC-SURE
/// probes are redrawn each epoch and fixed within it. Per-patch gradients
/// may be computed by `exec` in parallel; they are summed in patch order.
pub fn train_with<M: Model, E: Executor>(
    model: &M,
    data: TrainData<'_>,
    cfg: &TrainConfig,
    objective: Objective,
    exec: &E,
) -> Result<(M, TrainReport)> {
    cfg.validate()?;
    let mut model = model.clone();
    let mut report = TrainReport::default();
    if cfg.epochs == 0 {
        return Ok((model, report));
    }
    if data.len() == 0 {
        return Err(Error::Parameter("no training data".into()));
    }
    if objective == Objective::Mse && matches!(data, TrainData::Samples(_)) {
        return Err(Error::Parameter("MSE training needs clean targets".into()));
    }
    let mut adam = Adam::new(model.weights().len());
    for epoch in 0..cfg.epochs {
        let patches = epoch_patches(&data, cfg, epoch, objective)?;
        let lr = cfg.learning_rate_at(epoch);
        let mut losses = Vec::new();
        for batch in patches.chunks(cfg.batch_size) {
            let current = &model;
            let terms = exec.map(batch, |_, p| -> Result<(f64, Vec<f64>)> {
                let input = DenoiserInput::new(p.noisy.clone(), p.sigma)?;
                match objective {
                    Objective::Mse => mse_term(current, &input, p.clean.as_ref().expect("pairs carry clean images")),
                    Objective::McSure => {
                        let (t, g) = sure_term(current, &input, p.probe.as_ref().expect("probe drawn"))?;
                        Ok((t[0] + t[1] + t[2], g))
                    }
                }
            });
            let mut grad = vec![0.0; model.weights().len()];
            let mut loss = 0.0;
            for t in terms {
                let (l, g) = t?;
                loss += l;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let k = batch.len() as f64;
            loss /= k;
            grad.iter_mut().for_each(|g| *g /= k);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDivergence { epoch });
            }
            adam.step(model.weights_mut(), &grad, lr);
            losses.push(loss);
        }
        report.epoch_losses.push(crate::metrics::mean(&losses));
    }
    Ok((model, report))
}

/// `per_image` noisy copies of each clean image, with σ drawn uniformly
/// from `(0, sigma_max]`.
pub fn synthetic_pairs(clean: &[Image], sigma_max: f64, per_image: usize, seed: u64) -> Vec<NoisyPair> {
    let mut out = Vec::with_capacity(clean.len() * per_image);
    for (i, x) in clean.iter().enumerate() {
        for j in 0..per_image {
            let mut rng = seeded(derive_seed(seed, (i * per_image + j) as u64), stream::NOISE);
            let sigma = sigma_max * (1.0 - rng.random::<f64>());
            let w = standard_normal_vec(&mut rng, x.len());
            let noisy = x
                .with_pixels(x.pixels().iter().zip(&w).map(|(a, b)| a + sigma * b).collect())
                .expect("same shape");
            out.push(NoisyPair {
                noisy,
                clean: x.clone(),
                sigma,
            });
        }
    }
    out
}

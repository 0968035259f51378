//! σ-parameterized denoisers and the Monte-Carlo divergence probe.
//!
//! A [`Denoiser`] maps a noisy image and a noise level σ (0–255 intensity
//! units) to an estimate of the clean image. D-AMP needs the divergence of
//! that map for its Onsager term; for black-box denoisers it is estimated
//! with a single random probe,
//!
//! ```text
//! div D(x) ≈ ñᵀ (D(x + ε ñ) − D(x)) / ε,   ñ ~ N(0, I)
//! ```
//!
//! which is exact in expectation for locally affine maps.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dct::Dct2d;
use crate::error::{check_len, Error, Result};
use crate::image::Image;
use crate::math::dot;
use crate::rng::{derive_seed, seeded, standard_normal_vec, stream};

/// Soft-threshold multiplier default, `τ = k · σ`.
pub const SOFT_THRESHOLD_K: f64 = 2.5;
/// Hard-threshold multiplier of the block-DCT fallback denoiser.
pub const HARD_THRESHOLD_K: f64 = 2.7;
pub const FALLBACK_BLOCK: usize = 16;
pub const FALLBACK_STRIDE: usize = 4;

pub trait Denoiser: Send + Sync {
    fn name(&self) -> &'static str;

    /// Noise levels the denoiser was built for. [`denoise`] rejects σ
    /// outside this range with [`Error::SigmaRange`].
    fn sigma_range(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    /// Denoises without checking the σ range.
    fn apply(&self, image: &Image, sigma: f64) -> Result<Image>;

    /// Exact trace of the Jacobian, where it has a closed form.
    fn analytic_divergence(&self, _image: &Image, _sigma: f64) -> Result<f64> {
        Err(Error::Capability(self.name()))
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn sigma_range(&self) -> (f64, f64) {
        (**self).sigma_range()
    }

    fn apply(&self, image: &Image, sigma: f64) -> Result<Image> {
        (**self).apply(image, sigma)
    }

    fn analytic_divergence(&self, image: &Image, sigma: f64) -> Result<f64> {
        (**self).analytic_divergence(image, sigma)
    }
}

/// A noisy image with its noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserInput {
    pub image: Image,
    pub sigma: f64,
}

impl DenoiserInput {
    pub fn new(image: Image, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { image, sigma })
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("sigma must be finite and >= 0, got {sigma}")))
    }
}

/// Range-checked denoising.
pub fn denoise<D: Denoiser + ?Sized>(d: &D, image: &Image, sigma: f64) -> Result<Image> {
    check_sigma(sigma)?;
    let (lo, hi) = d.sigma_range();
    if sigma < lo || sigma > hi {
        return Err(Error::SigmaRange { sigma, lo, hi });
    }
    d.apply(image, sigma)
}

/// Perturbation for one Monte-Carlo divergence evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceProbe {
    epsilon: f64,
    seed: u64,
    probe: Vec<f64>,
}

impl DivergenceProbe {
    /// Draws a standard-normal probe of length `n` from `seed`.
    pub fn new(epsilon: f64, seed: u64, n: usize) -> Result<Self> {
        let probe = standard_normal_vec(&mut seeded(seed, stream::PROBE), n);
        Self::from_parts(epsilon, seed, probe)
    }

    /// Probe for item `index` of a family keyed by `seed`.
    pub fn indexed(epsilon: f64, seed: u64, index: u64, n: usize) -> Result<Self> {
        Self::new(epsilon, derive_seed(seed, index), n)
    }

    pub fn from_parts(epsilon: f64, seed: u64, probe: Vec<f64>) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Parameter(format!("probe epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self {
            epsilon,
            seed,
            probe,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vector(&self) -> &[f64] {
        &self.probe
    }

    pub fn len(&self) -> usize {
        self.probe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probe.is_empty()
    }

    /// `x + ε ñ`.
    pub fn perturb(&self, image: &Image) -> Result<Image> {
        check_len("divergence probe", image.len(), self.probe.len())?;
        image.with_pixels(
            image
                .pixels()
                .iter()
                .zip(&self.probe)
                .map(|(x, n)| x + self.epsilon * n)
                .collect(),
        )
    }
}

/// `ñᵀ (D(x + ε ñ) − D(x)) / ε`.
pub fn mc_divergence<D: Denoiser + ?Sized>(
    d: &D,
    image: &Image,
    sigma: f64,
    probe: &DivergenceProbe,
) -> Result<f64> {
    let base = denoise(d, image, sigma)?;
    mc_divergence_from(d, image, sigma, &base, probe)
}

/// As [`mc_divergence`], reusing an already computed `D(x)`.
pub fn mc_divergence_from<D: Denoiser + ?Sized>(
    d: &D,
    image: &Image,
    sigma: f64,
    base: &Image,
    probe: &DivergenceProbe,
) -> Result<f64> {
    let perturbed = denoise(d, &probe.perturb(image)?, sigma)?;
    check_len("denoiser output", image.len(), perturbed.len())?;
    let diff: Vec<f64> = perturbed
        .pixels()
        .iter()
        .zip(base.pixels())
        .map(|(a, b)| a - b)
        .collect();
    Ok(dot(probe.vector(), &diff) / probe.epsilon())
}

/// Closed-form divergence; a capability error for black-box denoisers.
pub fn analytic_divergence<D: Denoiser + ?Sized>(d: &D, image: &Image, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    d.analytic_divergence(image, sigma)
}

// ---------------------------------------------------------------------------
// Analytic denoisers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Denoiser for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn apply(&self, image: &Image, _sigma: f64) -> Result<Image> {
        Ok(image.clone())
    }

    fn analytic_divergence(&self, image: &Image, _sigma: f64) -> Result<f64> {
        Ok(image.len() as f64)
    }
}

/// `D(x) = c x`. `Scale::new(0.0)` is the zero denoiser.
#[derive(Debug, Clone, Copy)]
pub struct Scale {
    pub c: f64,
}

impl Scale {
    pub fn new(c: f64) -> Self {
        Self { c }
    }

    pub fn zero() -> Self {
        Self { c: 0.0 }
    }
}

impl Denoiser for Scale {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn apply(&self, image: &Image, _sigma: f64) -> Result<Image> {
        image.with_pixels(image.pixels().iter().map(|v| self.c * v).collect())
    }

    fn analytic_divergence(&self, image: &Image, _sigma: f64) -> Result<f64> {
        Ok(self.c * image.len() as f64)
    }
}

/// Always returns the same image; divergence zero.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub target: Image,
}

impl Oracle {
    pub fn new(target: Image) -> Self {
        Self { target }
    }
}

impl Denoiser for Oracle {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn apply(&self, image: &Image, _sigma: f64) -> Result<Image> {
        check_len("oracle input", self.target.len(), image.len())?;
        Ok(self.target.clone())
    }

    fn analytic_divergence(&self, _image: &Image, _sigma: f64) -> Result<f64> {
        Ok(0.0)
    }
}

/// Orthonormal transform in which a thresholding denoiser operates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Whole-image 2-D DCT-II.
    Dct,
    /// Pixel domain; pointwise thresholding for sparse signals.
    Identity,
}

#[inline]
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Soft thresholding at `τ = k σ` in an orthonormal basis.
#[derive(Debug, Clone, Copy)]
pub struct SoftThreshold {
    pub k: f64,
    pub basis: Basis,
}

impl SoftThreshold {
    pub fn dct() -> Self {
        Self {
            k: SOFT_THRESHOLD_K,
            basis: Basis::Dct,
        }
    }

    pub fn pointwise(k: f64) -> Self {
        Self {
            k,
            basis: Basis::Identity,
        }
    }

    fn coefficients(&self, image: &Image) -> Vec<f64> {
        match self.basis {
            Basis::Identity => image.pixels().to_vec(),
            Basis::Dct => {
                let dct = Dct2d::new(image.width(), image.height());
                let mut c = vec![0.0; image.len()];
                dct.forward(image.pixels(), &mut c);
                c
            }
        }
    }
}

impl Denoiser for SoftThreshold {
    fn name(&self) -> &'static str {
        match self.basis {
            Basis::Dct => "soft-dct",
            Basis::Identity => "soft-pointwise",
        }
    }

    fn apply(&self, image: &Image, sigma: f64) -> Result<Image> {
        let tau = self.k * sigma;
        let mut c = self.coefficients(image);
        c.iter_mut().for_each(|v| *v = soft_threshold(*v, tau));
        match self.basis {
            Basis::Identity => image.with_pixels(c),
            Basis::Dct => {
                let dct = Dct2d::new(image.width(), image.height());
                let mut out = vec![0.0; image.len()];
                dct.inverse(&c, &mut out);
                image.with_pixels(out)
            }
        }
    }

    /// Number of coefficients strictly above the threshold.
    fn analytic_divergence(&self, image: &Image, sigma: f64) -> Result<f64> {
        let tau = self.k * sigma;
        Ok(self
            .coefficients(image)
            .iter()
            .filter(|v| v.abs() > tau)
            .count() as f64)
    }
}

// ---------------------------------------------------------------------------
// Overlapping block DCT
// ---------------------------------------------------------------------------

/// Overlapping `bw × bh` blocks on a stride grid covering the whole image,
/// with per-pixel coverage counts for uniform aggregation.
#[derive(Debug, Clone)]
pub struct BlockGrid {
    width: usize,
    height: usize,
    dct: Dct2d,
    xs: Vec<usize>,
    ys: Vec<usize>,
    inv_count: Vec<f64>,
}

fn block_origins(len: usize, block: usize, stride: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..=len - block).step_by(stride).collect();
    if *v.last().unwrap() != len - block {
        v.push(len - block);
    }
    v
}

impl BlockGrid {
    /// Blocks are `block` on a side, shrunk to the image where it is smaller.
    pub fn new(width: usize, height: usize, block: usize, stride: usize) -> Self {
        assert!(block > 0 && stride > 0);
        let bw = block.min(width);
        let bh = block.min(height);
        let xs = block_origins(width, bw, stride);
        let ys = block_origins(height, bh, stride);
        let mut count = vec![0.0f64; width * height];
        for &y0 in &ys {
            for &x0 in &xs {
                for y in y0..y0 + bh {
                    for x in x0..x0 + bw {
                        count[y * width + x] += 1.0;
                    }
                }
            }
        }
        Self {
            width,
            height,
            dct: Dct2d::new(bw, bh),
            xs,
            ys,
            inv_count: count.into_iter().map(|c| 1.0 / c).collect(),
        }
    }

    pub fn block_width(&self) -> usize {
        self.dct.width()
    }

    pub fn block_height(&self) -> usize {
        self.dct.height()
    }

    pub fn block_len(&self) -> usize {
        self.dct.len()
    }

    pub fn block_count(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn dct(&self) -> &Dct2d {
        &self.dct
    }

    /// Reciprocal of the number of blocks covering each pixel.
    pub fn inv_count(&self) -> &[f64] {
        &self.inv_count
    }

    /// Origins of every block, row-major over the grid.
    pub fn origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.ys
            .iter()
            .flat_map(move |&y| self.xs.iter().map(move |&x| (x, y)))
    }

    pub fn extract(&self, src: &[f64], origin: (usize, usize), out: &mut [f64]) {
        let (bw, bh) = (self.block_width(), self.block_height());
        for y in 0..bh {
            let row = (origin.1 + y) * self.width + origin.0;
            out[y * bw..(y + 1) * bw].copy_from_slice(&src[row..row + bw]);
        }
    }

    pub fn accumulate(&self, block: &[f64], origin: (usize, usize), dst: &mut [f64]) {
        let (bw, bh) = (self.block_width(), self.block_height());
        for y in 0..bh {
            let row = (origin.1 + y) * self.width + origin.0;
            for (d, s) in dst[row..row + bw].iter_mut().zip(&block[y * bw..(y + 1) * bw]) {
                *d += s;
            }
        }
    }

    /// Shrinks every block's DCT coefficients with `shrink(index, value)`
    /// and averages the overlapping reconstructions.
    pub fn shrink(&self, src: &[f64], mut shrink: impl FnMut(usize, f64) -> f64) -> Vec<f64> {
        assert_eq!(src.len(), self.width * self.height);
        let n = self.block_len();
        let mut patch = vec![0.0; n];
        let mut coef = vec![0.0; n];
        let mut out = vec![0.0; src.len()];
        for origin in self.origins() {
            self.extract(src, origin, &mut patch);
            self.dct.forward(&patch, &mut coef);
            for (i, c) in coef.iter_mut().enumerate() {
                *c = shrink(i, *c);
            }
            self.dct.inverse(&coef, &mut patch);
            self.accumulate(&patch, origin, &mut out);
        }
        for (o, w) in out.iter_mut().zip(&self.inv_count) {
            *o *= w;
        }
        out
    }
}

/// Hard thresholding at `τ = k σ` on overlapping block DCTs with uniform
/// aggregation. Used as the high-noise fallback denoiser.
#[derive(Debug, Clone, Copy)]
pub struct HardThresholdBlockDct {
    pub k: f64,
    pub block: usize,
    pub stride: usize,
}

impl Default for HardThresholdBlockDct {
    fn default() -> Self {
        Self {
            k: HARD_THRESHOLD_K,
            block: FALLBACK_BLOCK,
            stride: FALLBACK_STRIDE,
        }
    }
}

impl Denoiser for HardThresholdBlockDct {
    fn name(&self) -> &'static str {
        "hard-dct-block"
    }

    fn apply(&self, image: &Image, sigma: f64) -> Result<Image> {
        let grid = BlockGrid::new(image.width(), image.height(), self.block, self.stride);
        let tau = self.k * sigma;
        let out = grid.shrink(image.pixels(), |_, c| if c.abs() > tau { c } else { 0.0 });
        image.with_pixels(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{norm_sq, rms, Float};
    use crate::rng::standard_normal;

    fn noisy_constant(w: usize, h: usize, value: f64, sigma: f64, seed: u64) -> Image {
        let mut rng = seeded(seed, 0);
        Image::from_fn(w, h, |_, _| value + sigma * standard_normal(&mut rng))
    }

    #[test]
    fn identity_and_scale() {
        let x = Image::new(2, 1, vec![2.0, 4.0]).unwrap();
        assert_eq!(denoise(&Identity, &x, 3.0).unwrap(), x);
        assert_eq!(denoise(&Scale::new(0.5), &x, 3.0).unwrap().pixels(), &[1.0, 2.0]);
    }

    #[test]
    fn analytic_divergence_values() {
        let x = Image::zeros(10, 10);
        assert_eq!(analytic_divergence(&Identity, &x, 1.0).unwrap(), 100.0);
        let y = Image::zeros(4, 2);
        assert_eq!(analytic_divergence(&Scale::new(0.25), &y, 1.0).unwrap(), 2.0);
        assert!(matches!(
            analytic_divergence(&HardThresholdBlockDct::default(), &y, 1.0),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn identity_mc_divergence_is_probe_energy() {
        let x = noisy_constant(8, 8, 10.0, 3.0, 1);
        let probe = DivergenceProbe::new(0.01, 42, 64).unwrap();
        let div = mc_divergence(&Identity, &x, 3.0, &probe).unwrap();
        let energy = norm_sq(probe.vector());
        assert!((div - energy).abs() < 1e-8 * energy);
    }

    #[test]
    fn scale_mc_divergence_closed_form() {
        let x = Image::new(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let probe = DivergenceProbe::from_parts(0.1, 0, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let div = mc_divergence(&Scale::new(0.5), &x, 1.0, &probe).unwrap();
        assert!((div - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scale_mc_divergence_epsilon_invariant() {
        let sigma = 20.0;
        let x = noisy_constant(16, 16, 50.0, sigma, 3);
        let d = Scale::new(0.7);
        let reference = {
            let p = DivergenceProbe::new(1e-3 * sigma, 5, 256).unwrap();
            mc_divergence(&d, &x, sigma, &p).unwrap()
        };
        for factor in [2e-3, 1e-2, 5e-2, 1e-1] {
            let p = DivergenceProbe::new(factor * sigma, 5, 256).unwrap();
            let v = mc_divergence(&d, &x, sigma, &p).unwrap();
            assert!((v - reference).abs() <= 1e-8 * reference.abs());
        }
    }

    #[test]
    fn probe_average_converges_for_linear_denoisers() {
        let x = noisy_constant(16, 16, 0.0, 1.0, 4);
        for c in [1.0, 0.5, 0.2] {
            let d = Scale::new(c);
            let exact = analytic_divergence(&d, &x, 1.0).unwrap();
            let mean = (0..200)
                .map(|s| {
                    let p = DivergenceProbe::indexed(1e-3, 77, s, 256).unwrap();
                    mc_divergence(&d, &x, 1.0, &p).unwrap()
                })
                .sum::<f64>()
                / 200.0;
            assert!((mean - exact).abs() / exact < 0.02, "c={c}: {mean} vs {exact}");
        }
    }

    #[test]
    fn soft_threshold_zero_sigma_is_identity() {
        let x = noisy_constant(12, 9, 30.0, 10.0, 2);
        let out = denoise(&SoftThreshold::dct(), &x, 0.0).unwrap();
        for (a, b) in out.pixels().iter().zip(x.pixels()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn soft_threshold_reduces_noise() {
        let sigma = 25.0;
        let x = noisy_constant(64, 64, 100.0, sigma, 7);
        let out = denoise(&SoftThreshold::dct(), &x, sigma).unwrap();
        let resid_in: Vec<f64> = x.pixels().iter().map(|v| v - 100.0).collect();
        let resid_out: Vec<f64> = out.pixels().iter().map(|v| v - 100.0).collect();
        assert!(rms(&resid_out) < rms(&resid_in));
    }

    /// Image whose DCT has exactly `count` coefficients with magnitude well
    /// above `tau` and the rest well below.
    fn crafted(w: usize, h: usize, count: usize, tau: f64) -> Image {
        let n = w * h;
        let mut coef = vec![0.0; n];
        for (i, c) in coef.iter_mut().enumerate() {
            *c = if i < count {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * tau * (3.0 + i as f64 * 0.1)
            } else {
                tau * 0.3 * Float::sin(i as f64)
            };
        }
        let dct = Dct2d::new(w, h);
        let mut px = vec![0.0; n];
        dct.inverse(&coef, &mut px);
        Image::new(w, h, px).unwrap()
    }

    #[test]
    fn soft_threshold_analytic_divergence_counts_survivors() {
        let sigma = 4.0;
        let d = SoftThreshold::dct();
        let x = crafted(8, 8, 37, d.k * sigma);
        assert_eq!(analytic_divergence(&d, &x, sigma).unwrap(), 37.0);
    }

    #[test]
    fn soft_threshold_affine_regime_mc_divergence() {
        let sigma = 2.0;
        let d = SoftThreshold::dct();
        let x = crafted(64, 64, 4096, d.k * sigma);
        let n = 4096.0;
        // slope one everywhere: each probe returns exactly ‖ñ‖²
        let mut total = 0.0;
        for s in 0..200 {
            let p = DivergenceProbe::indexed(1e-3 * sigma, 3, s, 4096).unwrap();
            let v = mc_divergence(&d, &x, sigma, &p).unwrap();
            let energy = norm_sq(p.vector());
            assert!((v - energy).abs() < 1e-6 * energy);
            total += v;
        }
        let mean = total / 200.0;
        assert!((mean - n).abs() / n < 0.01, "{mean}");
    }

    #[test]
    fn hard_threshold_suppresses_pure_noise() {
        let d = HardThresholdBlockDct::default();
        for sigma in [10.0, 25.0, 40.0, 55.0] {
            let x = noisy_constant(64, 64, 0.0, sigma, sigma as u64);
            let out = denoise(&d, &x, sigma).unwrap();
            let ratio = rms(out.pixels()) / rms(x.pixels());
            assert!(ratio <= 0.4, "sigma {sigma}: ratio {ratio}");
        }
    }

    #[test]
    fn block_grid_covers_every_pixel() {
        let grid = BlockGrid::new(50, 37, 16, 4);
        assert!(grid.inv_count().iter().all(|w| w.is_finite() && *w > 0.0));
        // zero threshold reconstructs the input
        let x: Vec<f64> = (0..50 * 37).map(|i| (i % 17) as f64).collect();
        let y = grid.shrink(&x, |_, c| c);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
        let small = BlockGrid::new(4, 4, 16, 4);
        assert_eq!(small.block_count(), 1);
        assert_eq!(small.block_len(), 16);
    }

    #[test]
    fn range_errors_are_reported() {
        struct Limited;
        impl Denoiser for Limited {
            fn name(&self) -> &'static str {
                "limited"
            }
            fn sigma_range(&self) -> (f64, f64) {
                (0.0, 10.0)
            }
            fn apply(&self, image: &Image, _sigma: f64) -> Result<Image> {
                Ok(image.clone())
            }
        }
        let x = Image::zeros(2, 2);
        assert!(matches!(denoise(&Limited, &x, 11.0), Err(Error::SigmaRange { .. })));
        assert!(denoise(&Limited, &x, 10.0).is_ok());
        assert!(denoise(&Identity, &x, -1.0).is_err());
        assert!(DivergenceProbe::new(0.0, 0, 4).is_err());
    }
}

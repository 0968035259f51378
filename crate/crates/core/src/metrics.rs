//! Image quality and residual normality statistics.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::image::Image;
use crate::math::Float;

/// PSNR reported for a perfect reconstruction.
pub const PSNR_CAP: f64 = 100.0;
pub const DEFAULT_BINS: usize = 61;
/// Histograms cover `[−HISTOGRAM_RANGE, HISTOGRAM_RANGE]` in normalized units.
pub const HISTOGRAM_RANGE: f64 = 4.0;

const PEAK: f64 = 255.0;

/// `10 log10(255² / mean((a − b)²))`, capped at [`PSNR_CAP`].
pub fn psnr(xhat: &Image, xgt: &Image) -> Result<f64> {
    psnr_slice(xhat.pixels(), xgt.pixels())
}

pub fn psnr_slice(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len("image", a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::Parameter("PSNR of an empty image".into()));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * Float::log10(PEAK * PEAK / mse)).min(PSNR_CAP))
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    Float::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64)
}

/// Fourth standardized moment minus 3; zero for a constant sample.
pub fn excess_kurtosis(v: &[f64]) -> f64 {
    let m = mean(v);
    let n = v.len() as f64;
    let m2 = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    if !(m2 > 0.0) {
        return 0.0;
    }
    let m4 = v.iter().map(|x| Float::powi(x - m, 4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2))
}

/// Kolmogorov-Smirnov distance between the sample and `N(0, 1)`.
pub fn ks_statistic(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
    if s.is_empty() {
        return 0.0;
    }
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = normal_cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Asymptotic p-value of a one-sample KS statistic `d` from `n` points.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let sn = Float::sqrt(n as f64);
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = Float::exp(-2.0 * k * k * lambda * lambda);
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualHistogram {
    /// `bins + 1` edges.
    pub bin_edges: Vec<f64>,
    /// Densities normalized over the in-range samples, so
    /// `Σ density · width = 1`.
    pub densities: Vec<f64>,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub excess_kurtosis: f64,
    /// Standard deviation of the normalized residual.
    pub normalized_std: f64,
    pub in_range: usize,
    pub total: usize,
    /// Set when the residual is identically zero or nothing fell in range.
    pub degenerate: bool,
}

impl ResidualHistogram {
    /// KS test against `N(0, 1)` at significance `alpha`.
    pub fn passes_ks(&self, alpha: f64) -> bool {
        self.ks_p_value > alpha
    }
}

/// Histogram of `(pseudo_clean − xgt) / sigma_normalizer` on the default
/// range, with normality statistics against the standard normal.
pub fn residual_histogram(
    pseudo_clean: &Image,
    xgt: &Image,
    sigma_normalizer: f64,
    bins: usize,
) -> Result<ResidualHistogram> {
    check_len("image", xgt.len(), pseudo_clean.len())?;
    let r: Vec<f64> = pseudo_clean
        .pixels()
        .iter()
        .zip(xgt.pixels())
        .map(|(a, b)| a - b)
        .collect();
    normalized_histogram(&r, sigma_normalizer, bins)
}

pub fn normalized_histogram(residual: &[f64], sigma_normalizer: f64, bins: usize) -> Result<ResidualHistogram> {
    if !(sigma_normalizer > 0.0) || !sigma_normalizer.is_finite() {
        return Err(Error::Parameter("histogram normalizer must be positive".into()));
    }
    if bins == 0 {
        return Err(Error::Parameter("histogram needs at least one bin".into()));
    }
    let u: Vec<f64> = residual.iter().map(|r| r / sigma_normalizer).collect();
    let width = 2.0 * HISTOGRAM_RANGE / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins).map(|i| -HISTOGRAM_RANGE + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    let mut in_range = 0;
    for &v in &u {
        if !(-HISTOGRAM_RANGE..=HISTOGRAM_RANGE).contains(&v) {
            continue;
        }
        let i = (((v + HISTOGRAM_RANGE) / width) as usize).min(bins - 1);
        counts[i] += 1;
        in_range += 1;
    }
    let densities = counts
        .iter()
        .map(|&c| if in_range == 0 { 0.0 } else { c as f64 / (in_range as f64 * width) })
        .collect();
    let ks = ks_statistic(&u);
    Ok(ResidualHistogram {
        bin_edges,
        densities,
        ks_statistic: ks,
        ks_p_value: ks_p_value(ks, u.len()),
        excess_kurtosis: excess_kurtosis(&u),
        normalized_std: std_dev(&u),
        in_range,
        total: u.len(),
        degenerate: in_range == 0 || u.iter().all(|&v| v == 0.0),
    })
}

//! Linear measurement operators `y = A x + ε`.
//!
//! Three families are provided:
//!
//! * [`OperatorKind::GaussianDense`]: a dense real matrix with i.i.d.
//!   `N(0, 1/m)` entries, so columns have unit norm on average.
//! * [`OperatorKind::CodedDiffraction`]: `A x = s · S F (d ⊙ x)` with a
//!   random unit-modulus phase mask `d`, the unitary 2-D DFT `F` and a
//!   uniformly drawn row selection `S`.
//! * [`OperatorKind::RadialFourierMri`]: `A x = S F x` where `S` keeps
//!   the k-space samples of an equi-angular radial spoke mask.
//!
//! For coded diffraction `s = √(N/M)`, which gives its columns the same unit
//! norm as the Gaussian matrix. The radial mask is far from incoherent, and
//! with that gain the message-passing update overshoots and blows up, so the
//! MRI operator keeps orthonormal rows. At full sampling both are unitary.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::fft::Fft2d;
use crate::image::Image;
use crate::math::Float;
use crate::rng::{seeded, standard_normal, stream};

/// Largest dense Gaussian matrix (entries) built by [`make_gaussian_op`].
pub const DEFAULT_DENSE_LIMIT: usize = 1 << 27;

const MASK_OFFSET_TRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    GaussianDense,
    CodedDiffraction,
    RadialFourierMri,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Real,
    Complex,
}

/// Vector over the real or complex field. Used for measurements and for
/// the output of [`MeasurementOp::adjoint`].
#[derive(Debug, Clone, PartialEq)]
pub enum FieldVec {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

pub type Measurement = FieldVec;

impl FieldVec {
    pub fn zeros(field: Field, len: usize) -> Self {
        match field {
            Field::Real => FieldVec::Real(vec![0.0; len]),
            Field::Complex => FieldVec::Complex(vec![Complex64::new(0.0, 0.0); len]),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FieldVec::Real(v) => v.len(),
            FieldVec::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn field(&self) -> Field {
        match self {
            FieldVec::Real(_) => Field::Real,
            FieldVec::Complex(_) => Field::Complex,
        }
    }

    /// Squared Euclidean (modulus) norm.
    pub fn norm_sq(&self) -> f64 {
        match self {
            FieldVec::Real(v) => v.iter().map(|a| a * a).sum(),
            FieldVec::Complex(v) => v.iter().map(|a| a.norm_sqr()).sum(),
        }
    }

    pub fn norm(&self) -> f64 {
        Float::sqrt(self.norm_sq())
    }

    /// Real part of every entry.
    pub fn real_part(&self) -> Vec<f64> {
        match self {
            FieldVec::Real(v) => v.clone(),
            FieldVec::Complex(v) => v.iter().map(|a| a.re).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            FieldVec::Real(v) => v.iter().all(|a| a.is_finite()),
            FieldVec::Complex(v) => v.iter().all(|a| a.re.is_finite() && a.im.is_finite()),
        }
    }

    /// Entry `i` as a complex number.
    pub fn at(&self, i: usize) -> Complex64 {
        match self {
            FieldVec::Real(v) => Complex64::new(v[i], 0.0),
            FieldVec::Complex(v) => v[i],
        }
    }

    /// `⟨self, other⟩ = Σ self_i · conj(other_i)`.
    pub fn inner(&self, other: &FieldVec) -> Complex64 {
        assert_eq!(self.len(), other.len());
        (0..self.len()).map(|i| self.at(i) * other.at(i).conj()).sum()
    }

    /// `self + alpha · other`, promoting to complex when either side is.
    pub fn axpy(&self, alpha: f64, other: &FieldVec) -> FieldVec {
        assert_eq!(self.len(), other.len());
        match (self, other) {
            (FieldVec::Real(a), FieldVec::Real(b)) => {
                FieldVec::Real(a.iter().zip(b).map(|(x, y)| x + alpha * y).collect())
            }
            _ => FieldVec::Complex(
                (0..self.len())
                    .map(|i| self.at(i) + other.at(i) * alpha)
                    .collect(),
            ),
        }
    }

    pub fn scaled(&self, alpha: f64) -> FieldVec {
        match self {
            FieldVec::Real(v) => FieldVec::Real(v.iter().map(|a| a * alpha).collect()),
            FieldVec::Complex(v) => FieldVec::Complex(v.iter().map(|a| a * alpha).collect()),
        }
    }
}

/// Additive measurement noise: i.i.d. zero-mean Gaussian with total
/// per-entry variance `sigma²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Parameter(format!("noise sigma must be >= 0, got {sigma}")));
        }
        Ok(Self { sigma, seed })
    }
}

/// Kind-specific operator data.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Row-major `m × n` matrix.
    Dense(Vec<f64>),
    /// Unit-modulus phase per pixel and the selected DFT rows, ascending.
    Cdp {
        phases: Vec<Complex64>,
        rows: Vec<usize>,
    },
    /// Binary k-space mask in FFT (unshifted) layout.
    Mask(Vec<bool>),
}

#[derive(Debug, Clone)]
pub struct MeasurementOp {
    kind: OperatorKind,
    m: usize,
    n: usize,
    width: usize,
    height: usize,
    rate: f64,
    seed: u64,
    payload: Payload,
    /// Selected k-space indices (Fourier kinds).
    rows: Vec<usize>,
    scale: f64,
    fft: Option<Fft2d>,
}

/// Builds an `m × n` dense Gaussian operator with entries `N(0, 1/m)`.
pub fn make_gaussian_op(m: usize, n: usize, seed: u64) -> Result<MeasurementOp> {
    make_gaussian_op_bounded(m, n, seed, DEFAULT_DENSE_LIMIT)
}

pub fn make_gaussian_op_bounded(
    m: usize,
    n: usize,
    seed: u64,
    limit: usize,
) -> Result<MeasurementOp> {
    if m == 0 || n == 0 {
        return Err(Error::Parameter("operator dimensions must be positive".into()));
    }
    let requested = m.checked_mul(n).unwrap_or(usize::MAX);
    if requested > limit {
        return Err(Error::Size { requested, limit });
    }
    Ok(MeasurementOp {
        kind: OperatorKind::GaussianDense,
        m,
        n,
        width: n,
        height: 1,
        rate: m as f64 / n as f64,
        seed,
        payload: Payload::Dense(gaussian_matrix(m, n, seed)),
        rows: Vec::new(),
        scale: 1.0,
        fft: None,
    })
}

/// The deterministic matrix behind [`make_gaussian_op`]; exposed so stored
/// operators can be regenerated from their seed.
pub fn gaussian_matrix(m: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed, stream::OPERATOR);
    let std = 1.0 / Float::sqrt(m as f64);
    (0..m * n).map(|_| standard_normal(&mut rng) * std).collect()
}

fn validate_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("sampling rate must be in (0, 1], got {rate}")))
    }
}

/// Coded diffraction pattern with one random phase mask and `⌊rate·N⌋`
/// DFT rows drawn uniformly without replacement.
pub fn make_cdp_op(width: usize, height: usize, rate: f64, seed: u64) -> Result<MeasurementOp> {
    validate_rate(rate)?;
    if width == 0 || height == 0 {
        return Err(Error::Parameter("image dimensions must be positive".into()));
    }
    let n = width * height;
    let m = Float::floor(rate * n as f64) as usize;
    if m == 0 {
        return Err(Error::Parameter(format!(
            "rate {rate} selects no rows of a {width}x{height} image"
        )));
    }
    let mut rng = seeded(seed, stream::OPERATOR);
    let phases: Vec<Complex64> = (0..n)
        .map(|_| Complex64::from_polar(1.0, 2.0 * PI * rng.random::<f64>()))
        .collect();
    let mut rows = index::sample(&mut rng, n, m).into_vec();
    rows.sort_unstable();
    MeasurementOp::from_parts(
        OperatorKind::CodedDiffraction,
        m,
        n,
        width,
        height,
        rate,
        seed,
        Payload::Cdp { phases, rows },
    )
}

/// Radial k-space sampling: equi-angular spokes through the center of
/// k-space plus a forced 3×3 center. The spoke count is searched so that the
/// sampled fraction is within ±1% (relative) of `rate`.
///
/// `spokes_seed` draws the rotation offset of the spoke set.
pub fn make_mri_op(
    width: usize,
    height: usize,
    rate: f64,
    spokes_seed: u64,
) -> Result<MeasurementOp> {
    validate_rate(rate)?;
    if width == 0 || height == 0 {
        return Err(Error::Parameter("image dimensions must be positive".into()));
    }
    let mask = radial_mask(width, height, rate, spokes_seed)?;
    let m = mask.iter().filter(|&&b| b).count();
    MeasurementOp::from_parts(
        OperatorKind::RadialFourierMri,
        m,
        width * height,
        width,
        height,
        rate,
        spokes_seed,
        Payload::Mask(mask),
    )
}

/// Radial mask in FFT layout.
pub fn radial_mask(width: usize, height: usize, rate: f64, seed: u64) -> Result<Vec<bool>> {
    let n = width * height;
    if rate >= 1.0 {
        return Ok(vec![true; n]);
    }
    let tolerance = 0.01 * rate;
    let mut rng = seeded(seed, stream::OPERATOR);
    let max_spokes = 4 * (width + height);
    let mut best = (f64::INFINITY, 0usize, 0.0, 0.0);
    // Small grids quantize the fraction coarsely; a few seeded rotations of
    // the spoke set give the search more reachable fractions.
    for _ in 0..MASK_OFFSET_TRIES {
        let offset = rng.random::<f64>() * PI;
        let fraction = |spokes: usize| -> f64 {
            let mask = spoke_mask(width, height, spokes, offset);
            mask.iter().filter(|&&b| b).count() as f64 / n as f64
        };
        // coverage grows with the spoke count up to raster overlap noise:
        // bisect for the crossing, then scan its neighbourhood
        let (mut lo, mut hi) = (0usize, max_spokes);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if fraction(mid) < rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        for s in lo.saturating_sub(8)..=(hi + 8).min(max_spokes) {
            let f = fraction(s);
            let err = (f - rate).abs();
            if err < best.0 {
                best = (err, s, f, offset);
            }
        }
        if best.0 <= tolerance {
            return Ok(spoke_mask(width, height, best.1, best.3));
        }
    }
    Err(Error::UnreachableRate {
        requested: rate,
        achieved: best.2,
    })
}

fn spoke_mask(width: usize, height: usize, spokes: usize, offset: f64) -> Vec<bool> {
    let mut centered = vec![false; width * height];
    let cx = (width / 2) as f64;
    let cy = (height / 2) as f64;
    let mut mark = |x: f64, y: f64| {
        let xi = Float::round(x);
        let yi = Float::round(y);
        if xi >= 0.0 && yi >= 0.0 && (xi as usize) < width && (yi as usize) < height {
            centered[yi as usize * width + xi as usize] = true;
        }
    };
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            mark(cx + dx as f64, cy + dy as f64);
        }
    }
    let radius = Float::hypot(width as f64, height as f64) / 2.0 + 1.0;
    let steps = Float::ceil(2.0 * radius / 0.5) as usize;
    for s in 0..spokes {
        let theta = offset + PI * s as f64 / spokes as f64;
        let (sin, cos) = (Float::sin(theta), Float::cos(theta));
        for i in 0..=steps {
            let t = -radius + 0.5 * i as f64;
            mark(cx + t * cos, cy + t * sin);
        }
    }
    // ifftshift: centered (x, y) -> FFT layout ((x - w/2) mod w, (y - h/2) mod h)
    let mut mask = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            if centered[y * width + x] {
                let fx = (x + width - width / 2) % width;
                let fy = (y + height - height / 2) % height;
                mask[fy * width + fx] = true;
            }
        }
    }
    mask
}

impl MeasurementOp {
    /// Reassembles an operator from stored parts, validating the payload.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        kind: OperatorKind,
        m: usize,
        n: usize,
        width: usize,
        height: usize,
        rate: f64,
        seed: u64,
        payload: Payload,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Parameter("operator dimensions must be positive".into()));
        }
        if m > n {
            return Err(Error::Parameter(format!("m = {m} exceeds n = {n}")));
        }
        let (rows, fft) = match (&kind, &payload) {
            (OperatorKind::GaussianDense, Payload::Dense(a)) => {
                check_len("dense matrix", m * n, a.len())?;
                check_len("image size", width * height, n)?;
                (Vec::new(), None)
            }
            (OperatorKind::CodedDiffraction, Payload::Cdp { phases, rows }) => {
                check_len("image size", width * height, n)?;
                check_len("phase mask", n, phases.len())?;
                check_len("selected rows", m, rows.len())?;
                if rows.windows(2).any(|w| w[0] >= w[1]) || rows.iter().any(|&r| r >= n) {
                    return Err(Error::Parameter("row selection must be strictly increasing and < n".into()));
                }
                (rows.clone(), Some(Fft2d::new(width, height)))
            }
            (OperatorKind::RadialFourierMri, Payload::Mask(mask)) => {
                check_len("image size", width * height, n)?;
                check_len("k-space mask", n, mask.len())?;
                let rows: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
                check_len("sampled k-space entries", m, rows.len())?;
                (rows, Some(Fft2d::new(width, height)))
            }
            _ => {
                return Err(Error::Parameter(format!(
                    "payload does not match operator kind {kind:?}"
                )))
            }
        };
        let scale = match kind {
            OperatorKind::CodedDiffraction => Float::sqrt(n as f64 / m as f64),
            _ => 1.0,
        };
        Ok(Self {
            kind,
            m,
            n,
            width,
            height,
            rate,
            seed,
            payload,
            rows,
            scale,
            fft,
        })
    }

    /// Declares the image grid a Gaussian operator acts on. Fourier
    /// operators already carry their grid and must keep it.
    pub fn with_image_shape(mut self, width: usize, height: usize) -> Result<Self> {
        check_len("image shape", self.n, width * height)?;
        if self.kind != OperatorKind::GaussianDense && (width, height) != (self.width, self.height) {
            return Err(Error::Parameter("Fourier operators have a fixed grid".into()));
        }
        self.width = width;
        self.height = height;
        Ok(self)
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Image width. Gaussian operators default to an `n × 1` grid until
    /// [`with_image_shape`](Self::with_image_shape) is called.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn field(&self) -> Field {
        match self.kind {
            OperatorKind::GaussianDense => Field::Real,
            _ => Field::Complex,
        }
    }

    /// Fraction of k-space (or rows) sampled, `m / n`.
    pub fn sampled_fraction(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// `A x` for a real signal.
    pub fn apply(&self, x: &Image) -> Result<Measurement> {
        self.apply_slice(x.pixels())
    }

    pub fn apply_slice(&self, x: &[f64]) -> Result<Measurement> {
        check_len("operator input", self.n, x.len())?;
        Ok(match &self.payload {
            Payload::Dense(a) => FieldVec::Real(
                a.chunks_exact(self.n)
                    .map(|row| crate::math::dot(row, x))
                    .collect(),
            ),
            Payload::Cdp { phases, .. } => {
                let mut buf: Vec<Complex64> =
                    x.iter().zip(phases).map(|(&v, d)| d * v).collect();
                self.fourier_forward(&mut buf)
            }
            Payload::Mask(_) => {
                let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                self.fourier_forward(&mut buf)
            }
        })
    }

    fn fourier_forward(&self, buf: &mut [Complex64]) -> FieldVec {
        let fft = self.fft.as_ref().expect("Fourier operator has a plan");
        fft.forward(buf);
        FieldVec::Complex(self.rows.iter().map(|&r| buf[r] * self.scale).collect())
    }

    /// `Aᴴ z`, a length-`n` vector. Real for the Gaussian operator applied to
    /// a real `z`, complex otherwise.
    pub fn adjoint(&self, z: &Measurement) -> Result<FieldVec> {
        check_len("adjoint input", self.m, z.len())?;
        Ok(match &self.payload {
            Payload::Dense(a) => match z {
                FieldVec::Real(zr) => {
                    let mut out = vec![0.0; self.n];
                    for (row, &zi) in a.chunks_exact(self.n).zip(zr) {
                        for (o, &aij) in out.iter_mut().zip(row) {
                            *o += aij * zi;
                        }
                    }
                    FieldVec::Real(out)
                }
                FieldVec::Complex(zc) => {
                    let mut out = vec![Complex64::new(0.0, 0.0); self.n];
                    for (row, zi) in a.chunks_exact(self.n).zip(zc) {
                        for (o, &aij) in out.iter_mut().zip(row) {
                            *o += zi * aij;
                        }
                    }
                    FieldVec::Complex(out)
                }
            },
            Payload::Cdp { phases, .. } => {
                let mut buf = self.fourier_adjoint(z);
                for (v, d) in buf.iter_mut().zip(phases) {
                    *v *= d.conj();
                }
                FieldVec::Complex(buf)
            }
            Payload::Mask(_) => FieldVec::Complex(self.fourier_adjoint(z)),
        })
    }

    fn fourier_adjoint(&self, z: &Measurement) -> Vec<Complex64> {
        let fft = self.fft.as_ref().expect("Fourier operator has a plan");
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for (i, &r) in self.rows.iter().enumerate() {
            buf[r] = z.at(i) * self.scale;
        }
        fft.inverse(&mut buf);
        buf
    }

    /// `Re(Aᴴ z)`, the real image-domain back-projection.
    pub fn adjoint_real(&self, z: &Measurement) -> Result<Vec<f64>> {
        Ok(self.adjoint(z)?.real_part())
    }

    /// `y = A x + ε`. Complex operators split the noise variance equally
    /// between real and imaginary parts.
    pub fn measure_with_noise(&self, x: &Image, noise: NoiseSpec) -> Result<Measurement> {
        let clean = self.apply(x)?;
        if noise.sigma == 0.0 {
            return Ok(clean);
        }
        let mut rng = seeded(noise.seed, stream::NOISE);
        Ok(match clean {
            FieldVec::Real(v) => FieldVec::Real(
                v.into_iter()
                    .map(|a| a + noise.sigma * standard_normal(&mut rng))
                    .collect(),
            ),
            FieldVec::Complex(v) => {
                let s = noise.sigma / core::f64::consts::SQRT_2;
                FieldVec::Complex(
                    v.into_iter()
                        .map(|a| {
                            let re = standard_normal(&mut rng);
                            let im = standard_normal(&mut rng);
                            a + Complex64::new(s * re, s * im)
                        })
                        .collect(),
                )
            }
        })
    }
}

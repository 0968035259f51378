//! Unitary 2-D discrete Fourier transform on row-major complex buffers.
//!
//! Power-of-two lengths use an iterative radix-2 kernel; every other length
//! goes through Bluestein's chirp-z algorithm on a padded power-of-two
//! length, so arbitrary image sizes (180, 320, ...) are supported.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::math::Float;

#[derive(Debug, Clone)]
struct Radix2 {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl Radix2 {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Self {
            n,
            twiddles,
            bitrev,
        }
    }

    /// Unnormalized forward transform (negative exponent).
    fn forward(&self, buf: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * step];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

#[derive(Debug, Clone)]
struct Bluestein {
    n: usize,
    inner: Radix2,
    chirp: Vec<Complex64>,
    kernel_spectrum: Vec<Complex64>,
}

impl Bluestein {
    fn new(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let inner = Radix2::new(m);
        // k^2 is reduced mod 2n before scaling to keep the angle accurate.
        let chirp: Vec<Complex64> = (0..n)
            .map(|k| {
                let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
                Complex64::from_polar(1.0, -PI * k2 / n as f64)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[m - k] = chirp[k].conj();
        }
        inner.forward(&mut kernel);
        Self {
            n,
            inner,
            chirp,
            kernel_spectrum: kernel,
        }
    }

    fn forward(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        let m = self.inner.n;
        scratch.clear();
        scratch.resize(m, Complex64::new(0.0, 0.0));
        for k in 0..self.n {
            scratch[k] = buf[k] * self.chirp[k];
        }
        self.inner.forward(scratch);
        for (s, h) in scratch.iter_mut().zip(&self.kernel_spectrum) {
            *s = (*s * h).conj();
        }
        // inverse via conjugation: ifft(v) = conj(fft(conj(v))) / m
        self.inner.forward(scratch);
        let scale = 1.0 / m as f64;
        for k in 0..self.n {
            buf[k] = scratch[k].conj() * scale * self.chirp[k];
        }
    }
}

#[derive(Debug, Clone)]
enum Plan1d {
    Radix2(Radix2),
    Bluestein(Bluestein),
}

impl Plan1d {
    fn new(n: usize) -> Self {
        if n.is_power_of_two() {
            Plan1d::Radix2(Radix2::new(n))
        } else {
            Plan1d::Bluestein(Bluestein::new(n))
        }
    }

    fn forward(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        match self {
            Plan1d::Radix2(p) => p.forward(buf),
            Plan1d::Bluestein(p) => p.forward(buf, scratch),
        }
    }
}

/// Precomputed plan for the unitary DFT of a `width` × `height` grid.
#[derive(Debug, Clone)]
pub struct Fft2d {
    width: usize,
    height: usize,
    rows: Plan1d,
    cols: Plan1d,
}

impl Fft2d {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            rows: Plan1d::new(width),
            cols: Plan1d::new(height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// In-place forward transform scaled by 1/√N.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// In-place inverse transform scaled by 1/√N; exact inverse of [`forward`](Self::forward).
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let (w, h) = (self.width, self.height);
        assert_eq!(data.len(), w * h, "buffer does not match plan size");
        if inverse {
            data.iter_mut().for_each(|v| *v = v.conj());
        }
        let mut scratch = Vec::new();
        for row in data.chunks_exact_mut(w) {
            self.rows.forward(row, &mut scratch);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for x in 0..w {
            for y in 0..h {
                column[y] = data[y * w + x];
            }
            self.cols.forward(&mut column, &mut scratch);
            for y in 0..h {
                data[y * w + x] = column[y];
            }
        }
        let scale = 1.0 / Float::sqrt((w * h) as f64);
        if inverse {
            data.iter_mut().for_each(|v| *v = v.conj() * scale);
        } else {
            data.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, standard_normal_vec};

    fn naive_dft2(data: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); w * h];
        for v in 0..h {
            for u in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let ang = -2.0 * PI * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                        acc += data[y * w + x] * Complex64::from_polar(1.0, ang);
                    }
                }
                out[v * w + u] = acc / Float::sqrt((w * h) as f64);
            }
        }
        out
    }

    fn random_complex(n: usize, seed: u64) -> Vec<Complex64> {
        let re = standard_normal_vec(&mut seeded(seed, 0), n);
        let im = standard_normal_vec(&mut seeded(seed, 1), n);
        re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect()
    }

    #[test]
    fn matches_naive_dft_for_mixed_sizes() {
        for &(w, h) in &[(1, 1), (4, 8), (6, 5), (9, 12), (7, 1)] {
            let data = random_complex(w * h, (w * 31 + h) as u64);
            let expected = naive_dft2(&data, w, h);
            let mut got = data.clone();
            Fft2d::new(w, h).forward(&mut got);
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).norm() < 1e-10, "{w}x{h}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn inverse_round_trips_and_preserves_norm() {
        for &(w, h) in &[(16, 16), (18, 10), (45, 45)] {
            let data = random_complex(w * h, 3);
            let plan = Fft2d::new(w, h);
            let mut buf = data.clone();
            plan.forward(&mut buf);
            let e0: f64 = data.iter().map(|v| v.norm_sqr()).sum();
            let e1: f64 = buf.iter().map(|v| v.norm_sqr()).sum();
            assert!((e0 - e1).abs() < 1e-9 * e0);
            plan.inverse(&mut buf);
            for (a, b) in buf.iter().zip(&data) {
                assert!((a - b).norm() < 1e-11);
            }
        }
    }
}

//! Orthonormal 2-D DCT-II by separable matrix products.
//!
//! Denoisers here transform whole images up to a few hundred pixels on a
//! side or 16×16 blocks, where the O(n³) matrix form is fast enough and
//! exact to machine precision.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math::Float;

/// Row-major `n` × `n` orthonormal DCT-II basis: `basis[k * n + i]`.
fn dct_basis(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n * n];
    for k in 0..n {
        let alpha = if k == 0 {
            Float::sqrt(1.0 / n as f64)
        } else {
            Float::sqrt(2.0 / n as f64)
        };
        for i in 0..n {
            b[k * n + i] = alpha * Float::cos(PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64);
        }
    }
    b
}

#[derive(Debug, Clone)]
pub struct Dct2d {
    width: usize,
    height: usize,
    basis_w: Vec<f64>,
    basis_h: Vec<f64>,
}

impl Dct2d {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0);
        let basis_w = dct_basis(width);
        let basis_h = if height == width {
            basis_w.clone()
        } else {
            dct_basis(height)
        };
        Self {
            width,
            height,
            basis_w,
            basis_h,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `coef = B_h · x · B_wᵀ`, with `x` and `coef` row-major height × width.
    pub fn forward(&self, x: &[f64], coef: &mut [f64]) {
        self.apply(x, coef, false);
    }

    /// `x = B_hᵀ · coef · B_w`.
    pub fn inverse(&self, coef: &[f64], x: &mut [f64]) {
        self.apply(coef, x, true);
    }

    fn apply(&self, src: &[f64], dst: &mut [f64], inverse: bool) {
        let (w, h) = (self.width, self.height);
        assert_eq!(src.len(), w * h);
        assert_eq!(dst.len(), w * h);
        let mut tmp = vec![0.0; w * h];
        // along rows
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for k in 0..w {
                let mut acc = 0.0;
                for i in 0..w {
                    let b = if inverse {
                        self.basis_w[i * w + k]
                    } else {
                        self.basis_w[k * w + i]
                    };
                    acc += b * row[i];
                }
                tmp[y * w + k] = acc;
            }
        }
        // along columns
        dst.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..h {
            for i in 0..h {
                let b = if inverse {
                    self.basis_h[i * h + k]
                } else {
                    self.basis_h[k * h + i]
                };
                if b == 0.0 {
                    continue;
                }
                let src_row = &tmp[i * w..(i + 1) * w];
                let dst_row = &mut dst[k * w..(k + 1) * w];
                for (d, s) in dst_row.iter_mut().zip(src_row) {
                    *d += b * s;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, standard_normal_vec};

    #[test]
    fn orthonormal_round_trip() {
        for &(w, h) in &[(1, 1), (4, 4), (16, 16), (7, 5)] {
            let x = standard_normal_vec(&mut seeded(1, 0), w * h);
            let d = Dct2d::new(w, h);
            let mut c = vec![0.0; w * h];
            let mut back = vec![0.0; w * h];
            d.forward(&x, &mut c);
            d.inverse(&c, &mut back);
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ec: f64 = c.iter().map(|v| v * v).sum();
            assert!((ex - ec).abs() < 1e-10 * ex.max(1.0));
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_maps_to_dc() {
        let d = Dct2d::new(4, 4);
        let mut c = vec![0.0; 16];
        d.forward(&[3.0; 16], &mut c);
        assert!((c[0] - 12.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }
}

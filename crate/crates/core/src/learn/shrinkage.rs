//! Overlapping block-DCT soft thresholding with one learned threshold per
//! frequency band.
//!
//! Weights `w_g` enter as `τ_g = w_g² σ`, so thresholds are never negative
//! and the map is blind to σ through that single multiplicative coupling.

use alloc::vec;
use alloc::vec::Vec;

use crate::denoise::{soft_threshold, BlockGrid};
use crate::image::Image;

pub const BANDS: usize = 16;
pub const BLOCK: usize = 16;
pub const STRIDE: usize = 4;

/// Band of DCT coefficient `(u, v)` in a `bw × bh` block. The DC term has
/// band 0 to itself; the rest split `u + v` evenly over bands 1 to 15.
pub fn band(u: usize, v: usize, bw: usize, bh: usize) -> usize {
    let s = u + v;
    if s == 0 {
        return 0;
    }
    let top = bw + bh - 2;
    (1 + (BANDS - 1) * (s - 1) / top).min(BANDS - 1)
}

fn band_table(grid: &BlockGrid) -> Vec<usize> {
    let (bw, bh) = (grid.block_width(), grid.block_height());
    (0..bw * bh).map(|i| band(i / bw, i % bw, bw, bh)).collect()
}

pub(super) fn grid_for(image: &Image) -> BlockGrid {
    BlockGrid::new(image.width(), image.height(), BLOCK, STRIDE)
}

fn thresholds(w: &[f64], sigma: f64) -> [f64; BANDS] {
    let mut tau = [0.0; BANDS];
    for (t, v) in tau.iter_mut().zip(w) {
        *t = v * v * sigma;
    }
    tau
}

pub(super) fn forward(w: &[f64], z: &Image, sigma: f64) -> Vec<f64> {
    let grid = grid_for(z);
    let bands = band_table(&grid);
    let tau = thresholds(w, sigma);
    grid.shrink(z.pixels(), |i, c| soft_threshold(c, tau[bands[i]]))
}

/// Adds `∂⟨g, D(z)⟩/∂w` to `grad`.
pub(super) fn backward(w: &[f64], z: &Image, sigma: f64, g: &[f64], grad: &mut [f64]) {
    let grid = grid_for(z);
    let bands = band_table(&grid);
    let tau = thresholds(w, sigma);
    let n = grid.block_len();
    let weighted: Vec<f64> = g.iter().zip(grid.inv_count()).map(|(a, b)| a * b).collect();
    let (mut patch, mut coef) = (vec![0.0; n], vec![0.0; n]);
    let (mut gpatch, mut gcoef) = (vec![0.0; n], vec![0.0; n]);
    let mut dtau = [0.0; BANDS];
    for origin in grid.origins() {
        grid.extract(z.pixels(), origin, &mut patch);
        grid.dct().forward(&patch, &mut coef);
        grid.extract(&weighted, origin, &mut gpatch);
        grid.dct().forward(&gpatch, &mut gcoef);
        for i in 0..n {
            let b = bands[i];
            let c = coef[i];
            if c > tau[b] {
                dtau[b] -= gcoef[i];
            } else if c < -tau[b] {
                dtau[b] += gcoef[i];
            }
        }
    }
    for b in 0..BANDS {
        grad[b] += dtau[b] * 2.0 * w[b] * sigma;
    }
}

//! Four-layer residual CNN: `D(z) = z − 255 f(z / 255)` where `f` stacks
//! 3×3 convolutions (1 → 16 → 16 → 16 → 1 channels, zero padding, bias)
//! with `tanh` between layers.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::image::Image;
use crate::math::Float;
use crate::rng::{seeded, standard_normal, stream};

pub const CHANNELS: usize = 16;
pub const LAYERS: [(usize, usize); 4] = [(1, CHANNELS), (CHANNELS, CHANNELS), (CHANNELS, CHANNELS), (CHANNELS, 1)];
const SCALE: f64 = 255.0;

const fn layer_len(cin: usize, cout: usize) -> usize {
    cout * cin * 9 + cout
}

pub const fn weight_count() -> usize {
    let mut total = 0;
    let mut i = 0;
    while i < LAYERS.len() {
        total += layer_len(LAYERS[i].0, LAYERS[i].1);
        i += 1;
    }
    total
}

/// Offsets of each layer's weights; kernel `[out][in][ky][kx]` then bias.
fn offsets() -> [usize; 5] {
    let mut off = [0; 5];
    for (i, &(cin, cout)) in LAYERS.iter().enumerate() {
        off[i + 1] = off[i] + layer_len(cin, cout);
    }
    off
}

/// He-style initialization with a small last layer, so the initial map is
/// close to the identity but every weight receives gradient.
pub(super) fn init(seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed, stream::INIT);
    let mut w = Vec::with_capacity(weight_count());
    for (l, &(cin, cout)) in LAYERS.iter().enumerate() {
        let mut std = Float::sqrt(2.0 / (9 * cin) as f64);
        if l == LAYERS.len() - 1 {
            std *= 0.1;
        }
        for _ in 0..cout * cin * 9 {
            w.push(std * standard_normal(&mut rng));
        }
        for _ in 0..cout {
            w.push(0.01 * (rng.random::<f64>() - 0.5));
        }
    }
    w
}

struct Dims {
    w: usize,
    h: usize,
}

impl Dims {
    fn len(&self) -> usize {
        self.w * self.h
    }
}

/// `out[o] = b[o] + Σ_i k[o][i] ⋆ input[i]`.
fn conv(input: &[f64], cin: usize, cout: usize, params: &[f64], d: &Dims) -> Vec<f64> {
    let n = d.len();
    let (kernel, bias) = params.split_at(cout * cin * 9);
    let mut out = vec![0.0; cout * n];
    for o in 0..cout {
        let dst = &mut out[o * n..(o + 1) * n];
        dst.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..cin {
            let src = &input[i * n..(i + 1) * n];
            let k = &kernel[(o * cin + i) * 9..(o * cin + i + 1) * 9];
            for ky in 0..3 {
                for kx in 0..3 {
                    let kv = k[ky * 3 + kx];
                    let (y_lo, y_hi) = range(ky, d.h);
                    let (x_lo, x_hi) = range(kx, d.w);
                    for y in y_lo..y_hi {
                        let sy = y + ky - 1;
                        let drow = &mut dst[y * d.w + x_lo..y * d.w + x_hi];
                        let srow = &src[sy * d.w + x_lo + kx - 1..sy * d.w + x_hi + kx - 1];
                        for (a, b) in drow.iter_mut().zip(srow) {
                            *a += kv * b;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Output rows (or columns) whose tap `k` lands inside the image.
fn range(k: usize, len: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if k == 2 { len.saturating_sub(1) } else { len };
    (lo, hi.max(lo))
}

/// Kernel and bias gradients of one layer, and the gradient with respect to
/// its input when `want_input` is set.
fn conv_backward(
    input: &[f64],
    dout: &[f64],
    cin: usize,
    cout: usize,
    params: &[f64],
    grad: &mut [f64],
    d: &Dims,
    want_input: bool,
) -> Vec<f64> {
    let n = d.len();
    let kernel = &params[..cout * cin * 9];
    let (gk, gb) = grad.split_at_mut(cout * cin * 9);
    let mut din = if want_input { vec![0.0; cin * n] } else { Vec::new() };
    for o in 0..cout {
        let go = &dout[o * n..(o + 1) * n];
        gb[o] += go.iter().sum::<f64>();
        for i in 0..cin {
            let src = &input[i * n..(i + 1) * n];
            let base = (o * cin + i) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let (y_lo, y_hi) = range(ky, d.h);
                    let (x_lo, x_hi) = range(kx, d.w);
                    let kv = kernel[base + ky * 3 + kx];
                    let mut acc = 0.0;
                    for y in y_lo..y_hi {
                        let sy = y + ky - 1;
                        let grow = &go[y * d.w + x_lo..y * d.w + x_hi];
                        let s0 = sy * d.w + x_lo + kx - 1;
                        let srow = &src[s0..s0 + (x_hi - x_lo)];
                        for (a, b) in grow.iter().zip(srow) {
                            acc += a * b;
                        }
                        if want_input {
                            let drow = &mut din[i * n + s0..i * n + s0 + (x_hi - x_lo)];
                            for (a, b) in drow.iter_mut().zip(grow) {
                                *a += kv * b;
                            }
                        }
                    }
                    gk[base + ky * 3 + kx] += acc;
                }
            }
        }
    }
    din
}

/// Activations `a_0 .. a_3` and the residual `f`.
fn activations(w: &[f64], z: &Image) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = Dims { w: z.width(), h: z.height() };
    let off = offsets();
    let mut acts = Vec::with_capacity(LAYERS.len());
    acts.push(z.pixels().iter().map(|v| v / SCALE).collect::<Vec<f64>>());
    let mut f = Vec::new();
    for (l, &(cin, cout)) in LAYERS.iter().enumerate() {
        let pre = conv(&acts[l], cin, cout, &w[off[l]..off[l + 1]], &d);
        if l + 1 < LAYERS.len() {
            acts.push(pre.into_iter().map(Float::tanh).collect());
        } else {
            f = pre;
        }
    }
    (acts, f)
}

pub(super) fn forward(w: &[f64], z: &Image) -> Vec<f64> {
    let (_, f) = activations(w, z);
    z.pixels().iter().zip(&f).map(|(v, r)| v - SCALE * r).collect()
}

pub(super) fn backward(w: &[f64], z: &Image, g: &[f64], grad: &mut [f64]) {
    let d = Dims { w: z.width(), h: z.height() };
    let off = offsets();
    let (acts, _) = activations(w, z);
    let mut delta: Vec<f64> = g.iter().map(|v| -SCALE * v).collect();
    for l in (0..LAYERS.len()).rev() {
        let (cin, cout) = LAYERS[l];
        let (lo, hi) = (off[l], off[l + 1]);
        let din = conv_backward(&acts[l], &delta, cin, cout, &w[lo..hi], &mut grad[lo..hi], &d, l > 0);
        if l > 0 {
            delta = din
                .iter()
                .zip(&acts[l])
                .map(|(gd, a)| gd * (1.0 - a * a))
                .collect();
        }
    }
}

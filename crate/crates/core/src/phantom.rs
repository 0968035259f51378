//! Seeded synthetic piecewise-smooth test images on the 0–255 scale.

use alloc::vec::Vec;

use rand::Rng;

use crate::image::Image;
use crate::math::Float;
use crate::rng::{derive_seed, seeded, stream};

#[derive(Debug, Clone, Copy)]
enum Shape {
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        cos: f64,
        sin: f64,
    },
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Ellipse {
                cx,
                cy,
                rx,
                ry,
                cos,
                sin,
            } => {
                let dx = x - cx;
                let dy = y - cy;
                let u = dx * cos + dy * sin;
                let v = -dx * sin + dy * cos;
                (u / rx) * (u / rx) + (v / ry) * (v / ry) <= 1.0
            }
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }
}

/// Piecewise-smooth image: a shaded background with overlapping ellipses and
/// rectangles, each carrying its own linear intensity ramp.
pub fn piecewise_smooth(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = seeded(seed, stream::PHANTOM);
    let (w, h) = (width as f64, height as f64);
    let base = rng.random_range(40.0..110.0);
    let gx = rng.random_range(-40.0..40.0) / w;
    let gy = rng.random_range(-40.0..40.0) / h;
    let count = rng.random_range(4..9);
    let mut shapes: Vec<(Shape, f64, f64, f64)> = Vec::with_capacity(count);
    for _ in 0..count {
        let shape = if rng.random_bool(0.6) {
            let angle = rng.random_range(0.0..core::f64::consts::PI);
            Shape::Ellipse {
                cx: rng.random_range(0.1..0.9) * w,
                cy: rng.random_range(0.1..0.9) * h,
                rx: rng.random_range(0.08..0.35) * w,
                ry: rng.random_range(0.08..0.35) * h,
                cos: Float::cos(angle),
                sin: Float::sin(angle),
            }
        } else {
            let x0 = rng.random_range(0.0..0.7) * w;
            let y0 = rng.random_range(0.0..0.7) * h;
            Shape::Rect {
                x0,
                y0,
                x1: x0 + rng.random_range(0.15..0.45) * w,
                y1: y0 + rng.random_range(0.15..0.45) * h,
            }
        };
        let level = rng.random_range(20.0..235.0);
        let sx = rng.random_range(-30.0..30.0) / w;
        let sy = rng.random_range(-30.0..30.0) / h;
        shapes.push((shape, level, sx, sy));
    }
    Image::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut v = base + gx * xf + gy * yf;
        for (shape, level, sx, sy) in &shapes {
            if shape.contains(xf, yf) {
                v = level + sx * (xf - w / 2.0) + sy * (yf - h / 2.0);
            }
        }
        v.clamp(0.0, 255.0)
    })
}

/// `count` independent phantoms keyed by `seed`.
pub fn corpus(count: usize, width: usize, height: usize, seed: u64) -> Vec<Image> {
    (0..count)
        .map(|i| piecewise_smooth(width, height, derive_seed(seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = piecewise_smooth(32, 24, 5);
        let b = piecewise_smooth(32, 24, 5);
        assert_eq!(a, b);
        assert!(a.pixels().iter().all(|p| (0.0..=255.0).contains(p)));
        assert_ne!(a, piecewise_smooth(32, 24, 6));
        let set = corpus(3, 16, 16, 1);
        assert_eq!(set.len(), 3);
        assert_ne!(set[0], set[1]);
    }
}

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::Float;

/// Real-valued grayscale raster on the 0–255 intensity scale, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter("image dimensions must be positive".into()));
        }
        crate::error::check_len("image pixels", width * height, pixels.len())?;
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::Parameter("image pixels must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Builds an image with the same dimensions as `self`.
    pub fn with_pixels(&self, pixels: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| p.clamp(lo, hi)).collect(),
        }
    }

    /// Clamps to [0, 255] and rounds to the nearest integer level, the
    /// representation stored in 8-bit image files.
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|p| Float::round(p.clamp(0.0, 255.0)))
                .collect(),
        }
    }

    /// Center window of `width` × `height`.
    pub fn center_crop(&self, width: usize, height: usize) -> Result<Image> {
        if width == 0 || height == 0 || width > self.width || height > self.height {
            return Err(Error::Parameter(alloc::format!(
                "crop {width}x{height} does not fit in {}x{}",
                self.width,
                self.height
            )));
        }
        let x0 = (self.width - width) / 2;
        let y0 = (self.height - height) / 2;
        Ok(Image::from_fn(width, height, |x, y| self.get(x0 + x, y0 + y)))
    }

    /// Keeps every `factor`-th pixel in both directions.
    pub fn subsample(&self, factor: usize) -> Result<Image> {
        if factor == 0 {
            return Err(Error::Parameter("subsample factor must be positive".into()));
        }
        let w = self.width.div_ceil(factor);
        let h = self.height.div_ceil(factor);
        Ok(Image::from_fn(w, h, |x, y| self.get(x * factor, y * factor)))
    }

    /// Top-left `w` × `h` window at (`x0`, `y0`).
    pub fn window(&self, x0: usize, y0: usize, w: usize, h: usize) -> Image {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        Image::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    /// One of the eight dihedral symmetries of the square: `k & 3` quarter
    /// turns followed by a horizontal flip when `k & 4` is set.
    pub fn dihedral(&self, k: u8) -> Image {
        let mut out = self.clone();
        for _ in 0..(k & 3) {
            out = out.rotate90();
        }
        if k & 4 != 0 {
            out = Image::from_fn(out.width, out.height, |x, y| out.get(out.width - 1 - x, y));
        }
        out
    }

    fn rotate90(&self) -> Image {
        // (x, y) -> (h - 1 - y, x)
        Image::from_fn(self.height, self.width, |x, y| {
            self.get(y, self.height - 1 - x)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(0, 2, vec![]).is_err());
        assert!(Image::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn center_crop_takes_middle_window() {
        let img = Image::from_fn(360, 360, |x, y| (x + 1000 * y) as f64);
        let crop = img.center_crop(180, 180).unwrap();
        assert_eq!(crop.width(), 180);
        assert_eq!(crop.get(0, 0), (90 + 1000 * 90) as f64);
        assert_eq!(crop.get(179, 179), (269 + 1000 * 269) as f64);
    }

    #[test]
    fn dihedral_group_has_order_four_rotations() {
        let img = Image::from_fn(3, 2, |x, y| (x + 10 * y) as f64);
        let r4 = img.dihedral(1).dihedral(1).dihedral(1).dihedral(1);
        assert_eq!(r4, img);
        let flipped = img.dihedral(4).dihedral(4);
        assert_eq!(flipped, img);
        assert_eq!(img.dihedral(1).width(), 2);
    }
}

//! 8-bit rasters plus the geometric primitives the view pipeline needs.

use crate::error::{Error, Result};

/// Row-major 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Format(format!("unsupported channel count {channels}")));
        }
        if samples.len() != width * height * channels {
            return Err(Error::Format(format!(
                "{}x{}x{} image needs {} samples, got {}",
                width,
                height,
                channels,
                width * height * channels,
                samples.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            samples,
        })
    }

    pub fn gray(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 1, samples)
    }

    pub fn constant(width: usize, height: usize, value: u8) -> Self {
        Image {
            width,
            height,
            channels: 1,
            samples: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            channels: 1,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_count() == 0
    }

    /// Luma conversion `0.299 R + 0.587 G + 0.114 B`, rounded. Gray images
    /// are returned unchanged.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let samples = self
            .samples
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            samples,
        }
    }

    /// Gray levels of every pixel.
    pub fn luma_samples(&self) -> Vec<u8> {
        self.to_gray().samples
    }

    /// Sub-rectangle starting at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Size(format!(
                "crop {}x{} at ({}, {}) exceeds {}x{} image",
                w, h, x0, y0, self.width, self.height
            )));
        }
        let c = self.channels;
        let mut samples = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * c;
            samples.extend_from_slice(&self.samples[start..start + w * c]);
        }
        Ok(Image {
            width: w,
            height: h,
            channels: c,
            samples,
        })
    }

    pub fn flip_horizontal(&self) -> Image {
        let c = self.channels;
        let mut samples = Vec::with_capacity(self.samples.len());
        for row in self.samples.chunks(self.width * c) {
            for px in row.chunks(c).rev() {
                samples.extend_from_slice(px);
            }
        }
        Image {
            samples,
            ..self.clone()
        }
    }

    /// Applies `f` to every sample.
    pub fn map_samples(&self, f: impl Fn(u8) -> u8) -> Image {
        Image {
            samples: self.samples.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Bilinear resampling with half-pixel centers and edge clamping.
    /// Same-size resizes return an identical image.
    pub fn resize(&self, new_w: usize, new_h: usize) -> Result<Image> {
        if new_w == 0 || new_h == 0 || self.is_empty() {
            return Err(Error::Size(format!(
                "cannot resize {}x{} to {}x{}",
                self.width, self.height, new_w, new_h
            )));
        }
        if new_w == self.width && new_h == self.height {
            return Ok(self.clone());
        }
        let c = self.channels;
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        let axis = |i: usize, scale: f64, len: usize| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, src - i0 as f64)
        };
        let xs: Vec<_> = (0..new_w).map(|x| axis(x, sx, self.width)).collect();
        let mut samples = Vec::with_capacity(new_w * new_h * c);
        for y in 0..new_h {
            let (y0, y1, fy) = axis(y, sy, self.height);
            for &(x0, x1, fx) in &xs {
                for ch in 0..c {
                    let at = |xx: usize, yy: usize| self.samples[(yy * self.width + xx) * c + ch] as f64;
                    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                    let bot = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                    let v = top * (1.0 - fy) + bot * fy;
                    samples.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Ok(Image {
            width: new_w,
            height: new_h,
            channels: c,
            samples,
        })
    }

    /// Places same-size tiles on a `cols`-wide grid, row by row.
    pub fn tile(tiles: &[Image], cols: usize) -> Result<Image> {
        let first = tiles.first().ok_or(Error::EmptyInput("no tiles"))?;
        let (tw, th, c) = (first.width, first.height, first.channels);
        if cols == 0 || !tiles.len().is_multiple_of(cols) {
            return Err(Error::Parameter(format!(
                "{} tiles do not fill rows of {cols}",
                tiles.len()
            )));
        }
        if tiles.iter().any(|t| t.width != tw || t.height != th || t.channels != c) {
            return Err(Error::Size("tiles differ in size or channels".into()));
        }
        let rows = tiles.len() / cols;
        let (w, h) = (tw * cols, th * rows);
        let mut samples = vec![0u8; w * h * c];
        for (i, t) in tiles.iter().enumerate() {
            let (gx, gy) = (i % cols, i / cols);
            for y in 0..th {
                let dst = ((gy * th + y) * w + gx * tw) * c;
                let src = y * tw * c;
                samples[dst..dst + tw * c].copy_from_slice(&t.samples[src..src + tw * c]);
            }
        }
        Image::new(w, h, c, samples)
    }
}

/// Rounded ITU-R 601 luma.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sample_count() {
        assert!(Image::new(2, 2, 1, vec![0; 3]).is_err());
        assert!(Image::new(2, 2, 2, vec![0; 8]).is_err());
    }

    #[test]
    fn gray_conversion_is_idempotent() {
        let rgb = Image::new(2, 1, 3, vec![255, 0, 0, 10, 200, 30]).unwrap();
        let g = rgb.to_gray();
        assert_eq!(g.samples(), &[76, 124]);
        assert_eq!(g.to_gray(), g);
    }

    #[test]
    fn flip_mirrors_rows() {
        let img = Image::gray(3, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(img.flip_horizontal().samples(), &[3, 2, 1, 6, 5, 4]);
        let rgb = Image::new(2, 1, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(rgb.flip_horizontal().samples(), &[4, 5, 6, 1, 2, 3]);
    }

    #[test]
    fn resize_same_size_is_identity_and_constant_stays_constant() {
        let img = Image::from_fn(5, 4, |x, y| (x * 40 + y) as u8);
        assert_eq!(img.resize(5, 4).unwrap(), img);
        let c = Image::constant(7, 7, 99).resize(16, 3).unwrap();
        assert!(c.samples().iter().all(|&v| v == 99));
    }

    #[test]
    fn crop_and_tile() {
        let img = Image::from_fn(4, 4, |x, y| (y * 4 + x) as u8);
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.samples(), &[5, 6, 9, 10]);
        assert!(img.crop(3, 0, 2, 2).is_err());
        let t = Image::tile(&[c.clone(), c.clone(), c.clone(), c], 2).unwrap();
        assert_eq!((t.width(), t.height()), (4, 4));
        assert_eq!(&t.samples()[..4], &[5, 6, 5, 6]);
    }
}

//! Canny edge detection: Gaussian smoothing, Sobel gradients, non-maximum
//! suppression and 8-connected hysteresis.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CannyParams {
    /// Gaussian window side (odd).
    pub window: usize,
    pub sigma: f64,
    /// Weak threshold as a fraction of the maximum gradient magnitude.
    pub low: f64,
    /// Strong threshold as a fraction of the maximum gradient magnitude.
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            window: 5,
            sigma: 1.4,
            low: 0.1,
            high: 0.3,
        }
    }
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let r = (window / 2) as f64;
    let k: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Plane {
    /// Replicate-border read.
    fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.v[y * self.w + x]
    }

    fn separable(&self, k: &[f64]) -> Plane {
        let r = (k.len() / 2) as isize;
        let mut tmp = vec![0.0; self.v.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                tmp[y * self.w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(i, &kv)| kv * self.at(x as isize + i as isize - r, y as isize))
                    .sum();
            }
        }
        let horiz = Plane {
            w: self.w,
            h: self.h,
            v: tmp,
        };
        let mut out = vec![0.0; self.v.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                out[y * self.w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(i, &kv)| kv * horiz.at(x as isize, y as isize + i as isize - r))
                    .sum();
            }
        }
        Plane {
            w: self.w,
            h: self.h,
            v: out,
        }
    }
}

/// Edge mask (row-major, one flag per pixel) of the image's luma channel.
pub fn canny(img: &Image, params: &CannyParams) -> Result<Vec<bool>> {
    let (w, h) = (img.width(), img.height());
    if params.window.is_multiple_of(2) || params.window == 0 {
        return Err(Error::Parameter(format!("Gaussian window {} must be odd", params.window)));
    }
    if w < params.window || h < params.window {
        return Err(Error::Size(format!(
            "{}x{} image is smaller than the {}x{} Gaussian window",
            w, h, params.window, params.window
        )));
    }
    if !(0.0..=1.0).contains(&params.low) || !(params.low..=1.0).contains(&params.high) {
        return Err(Error::Parameter("need 0 <= low <= high <= 1".into()));
    }
    let src = Plane {
        w,
        h,
        v: img.luma_samples().into_iter().map(f64::from).collect(),
    };
    let smooth = src.separable(&gaussian_kernel(params.window, params.sigma));

    let mut mag = vec![0.0; w * h];
    let mut dir = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| smooth.at(x + dx, y + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y as usize * w + x as usize;
            mag[i] = gx.hypot(gy);
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            dir[i] = match angle {
                a if !(22.5..157.5).contains(&a) => 0,
                a if a < 67.5 => 1,
                a if a < 112.5 => 2,
                _ => 3,
            };
        }
    }
    let max = mag.iter().cloned().fold(0.0, f64::max);
    // flat images carry float noise of order 1e-12 after smoothing
    if max <= 1e-9 {
        return Ok(vec![false; w * h]);
    }

    let mag_at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let (dx, dy) = match dir[i] {
                0 => (1, 0),
                1 => (1, 1),
                2 => (0, 1),
                _ => (-1, 1),
            };
            let m = mag[i];
            if m > mag_at(x - dx, y - dy) && m >= mag_at(x + dx, y + dy) {
                thin[i] = m;
            }
        }
    }

    let (lo, hi) = (params.low * max, params.high * max);
    let mut edge = vec![false; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= hi && m > 0.0 {
            edge[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edge[j] && thin[j] >= lo && thin[j] > 0.0 {
                    edge[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(edge)
}

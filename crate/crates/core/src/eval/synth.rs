//! Synthetic corpora with a known complexity knob.
//!
//! `noise`: uniform white noise low-pass filtered at `knob` of the Nyquist
//! radius, standardized and scaled by `NOISE_AMPLITUDE * knob^2` around mid
//! gray. Low knobs give smooth, low-contrast fields that quantize to a few
//! gray levels; high knobs give wide, busy histograms.
//!
//! `mosaic`: Voronoi cells with random gray levels; the cell count grows
//! linearly with the knob.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{fmt6, save_image, write_atomic, CsvTable};
use crate::seed;

pub const DEFAULT_SIDE: usize = 64;
pub const KNOB_MIN: f64 = 0.05;
pub const KNOB_MAX: f64 = 0.95;
pub const NOISE_AMPLITUDE: f64 = 80.0;
/// Labels file written next to a saved corpus.
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SyntheticKind {
    Noise,
    Mosaic,
}

impl FromStr for SyntheticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(SyntheticKind::Noise),
            "mosaic" => Ok(SyntheticKind::Mosaic),
            other => Err(Error::Parameter(format!("synthetic kind must be noise|mosaic, got '{other}'"))),
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::Noise => "noise",
            SyntheticKind::Mosaic => "mosaic",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub kind: SyntheticKind,
    pub images: Vec<Image>,
    /// Ground-truth complexity of each image.
    pub knobs: Vec<f64>,
}

impl SyntheticCorpus {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Writes `img_NNNNN.png` files plus `labels.csv` (`path,score`).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut labels = CsvTable::new(&["path", "score"]);
        for (i, (img, knob)) in self.images.iter().zip(&self.knobs).enumerate() {
            let name = format!("img_{i:05}.png");
            save_image(img, &dir.join(&name))?;
            labels.row(&[name, fmt6(*knob)]);
        }
        write_atomic(&dir.join(LABELS_FILE), labels.as_str().as_bytes())
    }
}

/// Low-pass noise image; `knob` in `(0, 1]` is the cutoff fraction.
pub fn noise_image(side: usize, knob: f64, seed: u64) -> Result<Image> {
    if side < 2 {
        return Err(Error::Size(format!("synthetic side {side} is too small")));
    }
    let mut rng = seed::rng(seed);
    let mut buf: Vec<Complex<f64>> = (0..side * side)
        .map(|_| Complex::new(rng.gen::<f64>() - 0.5, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    fft2(&mut buf, side, planner.plan_fft_forward(side).as_ref());
    let freq = |i: usize| {
        let k = if i <= side / 2 { i as f64 } else { i as f64 - side as f64 };
        k / side as f64
    };
    for y in 0..side {
        for x in 0..side {
            let r = freq(x).hypot(freq(y)) / 0.5;
            if (x == 0 && y == 0) || r > knob {
                buf[y * side + x] = Complex::new(0.0, 0.0);
            }
        }
    }
    fft2(&mut buf, side, planner.plan_fft_inverse(side).as_ref());
    let field: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let std = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let amp = if std > 0.0 { NOISE_AMPLITUDE * knob * knob / std } else { 0.0 };
    let samples = field
        .iter()
        .map(|v| (128.0 + amp * (v - mean)).round().clamp(0.0, 255.0) as u8)
        .collect();
    Image::gray(side, side, samples)
}

fn fft2(buf: &mut [Complex<f64>], side: usize, fft: &dyn rustfft::Fft<f64>) {
    for row in buf.chunks_mut(side) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); side];
    for x in 0..side {
        for y in 0..side {
            col[y] = buf[y * side + x];
        }
        fft.process(&mut col);
        for y in 0..side {
            buf[y * side + x] = col[y];
        }
    }
}

/// Cell count of a mosaic image with the given knob.
pub fn mosaic_cells(side: usize, knob: f64) -> usize {
    let max = (side * side / 16).max(3);
    2 + (knob.clamp(0.0, 1.0) * (max - 2) as f64).round() as usize
}

/// Voronoi mosaic with random gray cells.
pub fn mosaic_image(side: usize, knob: f64, seed: u64) -> Result<Image> {
    if side < 2 {
        return Err(Error::Size(format!("synthetic side {side} is too small")));
    }
    let mut rng = seed::rng(seed);
    let cells: Vec<(f64, f64, u8)> = (0..mosaic_cells(side, knob))
        .map(|_| {
            (
                rng.gen_range(0.0..side as f64),
                rng.gen_range(0.0..side as f64),
                rng.gen::<u8>(),
            )
        })
        .collect();
    Ok(Image::from_fn(side, side, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        cells
            .iter()
            .min_by(|a, b| {
                let da = (a.0 - px).powi(2) + (a.1 - py).powi(2);
                let db = (b.0 - px).powi(2) + (b.1 - py).powi(2);
                da.total_cmp(&db)
            })
            .map(|c| c.2)
            .unwrap_or(0)
    }))
}

pub fn synth_image(kind: SyntheticKind, side: usize, knob: f64, seed: u64) -> Result<Image> {
    match kind {
        SyntheticKind::Noise => noise_image(side, knob, seed),
        SyntheticKind::Mosaic => mosaic_image(side, knob, seed),
    }
}

/// `n` images of side [`DEFAULT_SIDE`] with knobs uniform in `[0.05, 0.95]`.
pub fn gen_synthetic(kind: SyntheticKind, n: usize, seed: u64) -> Result<SyntheticCorpus> {
    gen_synthetic_sized(kind, n, DEFAULT_SIDE, seed)
}

pub fn gen_synthetic_sized(kind: SyntheticKind, n: usize, side: usize, seed: u64) -> Result<SyntheticCorpus> {
    if n == 0 {
        return Err(Error::EmptyInput("synthetic corpus size"));
    }
    let mut rng = seed::rng(seed::derive(seed, &[0]));
    let knobs: Vec<f64> = (0..n).map(|_| rng.gen_range(KNOB_MIN..=KNOB_MAX)).collect();
    let images = knobs
        .par_iter()
        .enumerate()
        .map(|(i, &k)| synth_image(kind, side, k, seed::derive(seed, &[1, i as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticCorpus { kind, images, knobs })
}

//! Heuristic image-complexity measures.
//!
//! Every score lands in `[0, 1]` and grows with visual complexity. The raw
//! compression ratio, which shrinks with complexity, stays available through
//! [`CompressionRatio::raw`].

pub mod canny;
pub mod icd;
pub mod sampling;

use std::fmt;
use std::str::FromStr;

use crate::encoder::EncoderState;
use crate::error::{Error, Result};
use crate::image::Image;

pub use canny::CannyParams;

/// Bit depth of the supported rasters.
pub const BIT_DEPTH: f64 = 8.0;
/// Entropy floor for the compression ratio.
pub const CR_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Global (gray-level histogram) entropy.
    Ge,
    /// Canny edge density.
    Ed,
    /// Entropy-based compression ratio.
    Cr,
    /// Unsupervised activation energy of an encoder stage.
    Uae,
    /// Output of a trained predictor.
    Learned,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Ge => "ge",
            Metric::Ed => "ed",
            Metric::Cr => "cr",
            Metric::Uae => "uae",
            Metric::Learned => "learned",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ge" => Ok(Metric::Ge),
            "ed" => Ok(Metric::Ed),
            "cr" => Ok(Metric::Cr),
            "uae" => Ok(Metric::Uae),
            "learned" => Ok(Metric::Learned),
            other => Err(Error::Parameter(format!("unknown metric '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexityScore {
    pub value: f64,
    pub metric: Metric,
}

impl ComplexityScore {
    /// Clamps into `[0, 1]`.
    pub fn new(value: f64, metric: Metric) -> Self {
        ComplexityScore {
            value: value.clamp(0.0, 1.0),
            metric,
        }
    }
}

/// 256-bin histogram of the image's gray levels.
pub fn gray_histogram(img: &Image) -> [u64; 256] {
    let mut hist = [0u64; 256];
    if img.channels() == 1 {
        for &v in img.samples() {
            hist[v as usize] += 1;
        }
    } else {
        for v in img.luma_samples() {
            hist[v as usize] += 1;
        }
    }
    hist
}

/// Shannon entropy of the gray-level histogram, in bits.
pub fn entropy_bits(img: &Image) -> Result<f64> {
    if img.is_empty() {
        return Err(Error::EmptyInput("image has no pixels"));
    }
    let total = img.pixel_count() as f64;
    Ok(gray_histogram(img)
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0))
}

/// Histogram entropy divided by the 8-bit ceiling.
pub fn global_entropy(img: &Image) -> Result<ComplexityScore> {
    Ok(ComplexityScore::new(entropy_bits(img)? / BIT_DEPTH, Metric::Ge))
}

/// Fraction of pixels Canny marks as edges.
pub fn edge_density(img: &Image, params: &CannyParams) -> Result<ComplexityScore> {
    let edges = canny::canny(img, params)?;
    let n = edges.iter().filter(|&&e| e).count();
    Ok(ComplexityScore::new(n as f64 / edges.len() as f64, Metric::Ed))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressionRatio {
    /// `B / max(H, eps)`; large for simple images.
    pub raw: f64,
    /// True when the entropy hit the `eps` floor.
    pub saturated: bool,
    /// `H / B` clamped, so it increases with complexity.
    pub score: ComplexityScore,
}

pub fn compression_ratio(img: &Image) -> Result<CompressionRatio> {
    let h = entropy_bits(img)?;
    Ok(CompressionRatio {
        raw: BIT_DEPTH / h.max(CR_EPSILON),
        saturated: h <= CR_EPSILON,
        score: ComplexityScore::new(h / BIT_DEPTH, Metric::Cr),
    })
}

/// Mean post-ReLU activation of encoder stage `stage` (0-based), clamped.
pub fn uae(img: &Image, enc: &EncoderState, stage: usize) -> Result<ComplexityScore> {
    let energies = enc.stage_energies(img)?;
    let e = energies.get(stage).copied().ok_or_else(|| {
        Error::Parameter(format!(
            "stage {stage} out of range for a {}-stage encoder",
            energies.len()
        ))
    })?;
    Ok(ComplexityScore::new(e, Metric::Uae))
}

/// UAE of the encoder's last stage.
pub fn uae_last(img: &Image, enc: &EncoderState) -> Result<ComplexityScore> {
    uae(img, enc, enc.arch().stages() - 1)
}

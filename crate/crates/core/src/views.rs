//! Positive-view generation and small-scale crop-and-merge expansion.
//!
//! A view is a square random crop followed by a strategy-dependent set of
//! augmentations:
//!
//! | strategy | augmentations                                                |
//! |----------|--------------------------------------------------------------|
//! | `oc`     | none                                                         |
//! | `fa`     | horizontal flip (p = 0.5), brightness factor in `[0.8, 1.2]` |
//! | `ma`     | `fa` plus contrast factor in `[0.8, 1.2]`, 3x3 blur (p = 0.5) |

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{global_entropy, ComplexityScore};
use crate::seed;

/// Crop side relative to the source side used for both views by default.
pub const DEFAULT_CROP_FRACTION: f64 = 144.0 / 224.0;
pub const JITTER: f64 = 0.2;
/// Smallest crop side `crop_and_merge` accepts.
pub const MIN_MERGE_CROP: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CropStrategy {
    /// Crop only.
    Oc,
    /// Crop with few augmentations.
    Fa,
    /// Crop with more augmentations.
    Ma,
}

impl FromStr for CropStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oc" => Ok(CropStrategy::Oc),
            "fa" => Ok(CropStrategy::Fa),
            "ma" => Ok(CropStrategy::Ma),
            other => Err(Error::Parameter(format!("crop strategy must be oc|fa|ma, got '{other}'"))),
        }
    }
}

impl fmt::Display for CropStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CropStrategy::Oc => "oc",
            CropStrategy::Fa => "fa",
            CropStrategy::Ma => "ma",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropSpec {
    pub strategy: CropStrategy,
    pub side: usize,
    pub seed: u64,
}

/// Every random decision of one view, drawn up front.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentPlan {
    pub x0: usize,
    pub y0: usize,
    pub side: usize,
    pub flip: bool,
    pub brightness: f64,
    pub contrast: f64,
    pub blur: bool,
}

impl AugmentPlan {
    pub fn identity(side: usize) -> Self {
        AugmentPlan {
            x0: 0,
            y0: 0,
            side,
            flip: false,
            brightness: 1.0,
            contrast: 1.0,
            blur: false,
        }
    }

    pub fn sample(width: usize, height: usize, spec: &CropSpec) -> Result<Self> {
        if spec.side == 0 || spec.side > width.min(height) {
            return Err(Error::Size(format!(
                "crop side {} does not fit a {width}x{height} image",
                spec.side
            )));
        }
        let mut rng = seed::rng(spec.seed);
        let mut plan = AugmentPlan::identity(spec.side);
        plan.x0 = rng.gen_range(0..=width - spec.side);
        plan.y0 = rng.gen_range(0..=height - spec.side);
        if spec.strategy != CropStrategy::Oc {
            plan.flip = rng.gen_bool(0.5);
            plan.brightness = rng.gen_range(1.0 - JITTER..=1.0 + JITTER);
        }
        if spec.strategy == CropStrategy::Ma {
            plan.contrast = rng.gen_range(1.0 - JITTER..=1.0 + JITTER);
            plan.blur = rng.gen_bool(0.5);
        }
        Ok(plan)
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        let mut out = img.crop(self.x0, self.y0, self.side, self.side)?;
        if self.flip {
            out = out.flip_horizontal();
        }
        if self.brightness != 1.0 {
            let f = self.brightness;
            out = out.map_samples(|v| (v as f64 * f).round().clamp(0.0, 255.0) as u8);
        }
        if self.contrast != 1.0 {
            let luma = out.luma_samples();
            let mean = luma.iter().map(|&v| v as f64).sum::<f64>() / luma.len() as f64;
            let f = self.contrast;
            out = out.map_samples(|v| (mean + f * (v as f64 - mean)).round().clamp(0.0, 255.0) as u8);
        }
        if self.blur {
            out = blur3(&out);
        }
        Ok(out)
    }
}

/// `[1 2 1]^T [1 2 1] / 16` with replicated borders, per channel.
pub fn blur3(img: &Image) -> Image {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let s = img.samples();
    let at = |x: isize, y: isize, ch: usize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        s[(y * w + x) * c + ch] as u32
    };
    let mut out = Vec::with_capacity(s.len());
    for y in 0..h as isize {
        for x in 0..w as isize {
            for ch in 0..c {
                let mut acc = 0;
                for (dy, wy) in [(-1, 1), (0, 2), (1, 1)] {
                    for (dx, wx) in [(-1, 1), (0, 2), (1, 1)] {
                        acc += wy * wx * at(x + dx, y + dy, ch);
                    }
                }
                out.push(((acc + 8) / 16) as u8);
            }
        }
    }
    Image::new(w, h, c, out).expect("same geometry")
}

/// Random square crop plus the strategy's augmentations.
pub fn make_view(img: &Image, spec: &CropSpec) -> Result<Image> {
    AugmentPlan::sample(img.width(), img.height(), spec)?.apply(img)
}

/// `round(fraction * min(width, height))`, at least 1.
pub fn crop_side(width: usize, height: usize, fraction: f64) -> usize {
    ((fraction * width.min(height) as f64).round() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairConfig {
    pub query_strategy: CropStrategy,
    pub key_strategy: CropStrategy,
    /// Query crop side as a fraction of the shorter source side.
    pub query_fraction: f64,
    pub key_fraction: f64,
    /// Side both views are resized to.
    pub resolution: usize,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            query_strategy: CropStrategy::Fa,
            key_strategy: CropStrategy::Ma,
            query_fraction: DEFAULT_CROP_FRACTION,
            key_fraction: DEFAULT_CROP_FRACTION,
            resolution: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewPair {
    pub query_view: Image,
    pub key_view: Image,
    pub source_ge: ComplexityScore,
}

/// Query and key views of one source image.
pub fn make_pair(img: &Image, cfg: &PairConfig, seed: u64) -> Result<ViewPair> {
    let source_ge = global_entropy(img)?;
    make_pair_with_prior(img, cfg, seed, source_ge)
}

/// As [`make_pair`] with a precomputed prior score.
pub fn make_pair_with_prior(
    img: &Image,
    cfg: &PairConfig,
    seed: u64,
    source_ge: ComplexityScore,
) -> Result<ViewPair> {
    for f in [cfg.query_fraction, cfg.key_fraction] {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Parameter(format!("crop fraction {f} outside (0, 1]")));
        }
    }
    let view = |strategy, fraction, k| -> Result<Image> {
        let side = crop_side(img.width(), img.height(), fraction);
        let spec = CropSpec {
            strategy,
            side,
            seed: seed::derive(seed, &[k]),
        };
        make_view(img, &spec)?.resize(cfg.resolution, cfg.resolution)
    };
    Ok(ViewPair {
        query_view: view(cfg.query_strategy, cfg.query_fraction, 0)?,
        key_view: view(cfg.key_strategy, cfg.key_fraction, 1)?,
        source_ge,
    })
}

/// Merged images produced per source: `floor(c/2) + c + 2c`.
pub fn merged_count(c: usize) -> usize {
    c / 2 + c + 2 * c
}

/// Small-scale crop and merge.
///
/// Tier `t` in `{1, 2, 4}` draws `t*c` crops of size `(h, w) / (t*c)`. Crops
/// of a tier are shuffled and paired; each pair `(A, B)` becomes the 2x2 grid
/// `[A, B; flip(A), flip(B)]` resized back to the source size.
pub fn crop_and_merge(img: &Image, c: usize, seed: u64) -> Result<Vec<Image>> {
    if c < 2 {
        return Err(Error::Parameter(format!("crop-and-merge factor {c} must be at least 2")));
    }
    let (w, h) = (img.width(), img.height());
    let smallest = (w / (4 * c)).min(h / (4 * c));
    if smallest < MIN_MERGE_CROP {
        return Err(Error::Parameter(format!(
            "c = {c} gives {smallest}-pixel crops on a {w}x{h} image (minimum {MIN_MERGE_CROP})"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(merged_count(c));
    for tier in [1usize, 2, 4] {
        let (cw, ch) = (w / (tier * c), h / (tier * c));
        let mut crops = (0..tier * c)
            .map(|_| {
                let x0 = rng.gen_range(0..=w - cw);
                let y0 = rng.gen_range(0..=h - ch);
                img.crop(x0, y0, cw, ch)
            })
            .collect::<Result<Vec<_>>>()?;
        crops.shuffle(&mut rng);
        for pair in crops.chunks_exact(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let grid = Image::tile(
                &[a.clone(), b.clone(), a.flip_horizontal(), b.flip_horizontal()],
                2,
            )?;
            out.push(grid.resize(w, h)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> Image {
        Image::from_fn(n, n, |x, y| ((x * 4 + y) % 256) as u8)
    }

    #[test]
    fn full_side_crop_only_is_identity() {
        let img = ramp(32);
        let spec = CropSpec {
            strategy: CropStrategy::Oc,
            side: 32,
            seed: 99,
        };
        assert_eq!(make_view(&img, &spec).unwrap(), img);
    }

    #[test]
    fn forced_flip_mirrors_the_crop() {
        let img = Image::from_fn(8, 8, |x, _| (x * 30) as u8);
        let mut plan = AugmentPlan::identity(8);
        plan.flip = true;
        let v = plan.apply(&img).unwrap();
        assert_eq!(v, img.flip_horizontal());
        assert_eq!(v.samples()[0], 210);
    }

    #[test]
    fn oversized_crop_is_a_size_error() {
        let spec = CropSpec {
            strategy: CropStrategy::Fa,
            side: 33,
            seed: 0,
        };
        assert!(matches!(make_view(&ramp(32), &spec), Err(Error::Size(_))));
    }

    #[test]
    fn strategies_nest() {
        for seed in 0..50 {
            let spec = |strategy| CropSpec {
                strategy,
                side: 16,
                seed,
            };
            let oc = AugmentPlan::sample(32, 32, &spec(CropStrategy::Oc)).unwrap();
            let fa = AugmentPlan::sample(32, 32, &spec(CropStrategy::Fa)).unwrap();
            let ma = AugmentPlan::sample(32, 32, &spec(CropStrategy::Ma)).unwrap();
            assert!(!oc.flip && oc.brightness == 1.0 && oc.contrast == 1.0 && !oc.blur);
            assert!(fa.contrast == 1.0 && !fa.blur);
            assert!((0.8..=1.2).contains(&fa.brightness));
            assert_eq!((fa.x0, fa.y0, fa.flip, fa.brightness), (ma.x0, ma.y0, ma.flip, ma.brightness));
        }
    }

    #[test]
    fn pair_crop_sides() {
        assert_eq!(crop_side(224, 224, DEFAULT_CROP_FRACTION), 144);
        assert_eq!(crop_side(64, 64, DEFAULT_CROP_FRACTION), 41);
        let cfg = PairConfig::default();
        let img = ramp(64);
        let a = make_pair(&img, &cfg, 5).unwrap();
        let b = make_pair(&img, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.query_view.width(), a.key_view.height()), (64, 64));
        assert_eq!(a.source_ge, global_entropy(&img).unwrap());
    }

    #[test]
    fn merge_counts_for_small_factors() {
        let img = ramp(160);
        for c in 2..=5 {
            let out = crop_and_merge(&img, c, 1).unwrap();
            assert_eq!(out.len(), merged_count(c), "c = {c}");
            assert!(out.iter().all(|m| m.width() == 160 && m.height() == 160));
        }
        assert_eq!(merged_count(2), 7);
        assert_eq!(merged_count(3), 10);
    }

    #[test]
    fn merge_rejects_tiny_crops() {
        assert!(crop_and_merge(&ramp(64), 2, 0).is_ok());
        assert!(matches!(crop_and_merge(&ramp(64), 3, 0), Err(Error::Parameter(_))));
        assert!(matches!(crop_and_merge(&ramp(64), 1, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn constant_source_merges_to_constants() {
        let out = crop_and_merge(&Image::constant(96, 96, 37), 2, 4).unwrap();
        for m in out {
            assert!(m.samples().iter().all(|&v| v == 37));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn merge_is_deterministic_and_stays_in_source_range(seed in any::<u64>(), c in 2usize..=3, salt in any::<u8>()) {
            let img = Image::from_fn(96, 96, |x, y| (((x * 7 + y * 13) as u8) ^ salt) / 2 + 40);
            let a = crop_and_merge(&img, c, seed).unwrap();
            prop_assert_eq!(&a, &crop_and_merge(&img, c, seed).unwrap());
            let lo = *img.samples().iter().min().unwrap();
            let hi = *img.samples().iter().max().unwrap();
            for m in &a {
                prop_assert!(m.samples().iter().all(|v| (lo..=hi).contains(v)));
            }
        }

        #[test]
        fn views_are_deterministic(seed in any::<u64>(), side in 4usize..=32) {
            let img = ramp(32);
            for strategy in [CropStrategy::Oc, CropStrategy::Fa, CropStrategy::Ma] {
                let spec = CropSpec { strategy, side, seed };
                prop_assert_eq!(make_view(&img, &spec).unwrap(), make_view(&img, &spec).unwrap());
            }
        }
    }
}

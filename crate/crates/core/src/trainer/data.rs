//! Training corpus assembly: loading or generating sources, subset
//! sampling, crop-and-merge expansion and per-image priors.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::synth::{gen_synthetic_sized, SyntheticCorpus};
use crate::image::Image;
use crate::io::{list_images, load_image};
use crate::metrics::sampling::balanced_indices;
use crate::metrics::{compression_ratio, edge_density, global_entropy, CannyParams};
use crate::seed;
use crate::views::crop_and_merge;

use super::config::{Prior, Sampling, TrainConfig};

const TAG_SAMPLE: u64 = 10;
const TAG_MERGE: u64 = 11;
const TAG_CORPUS: u64 = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainData {
    pub images: Vec<Image>,
    /// Regression target of the complexity-aware term, per image.
    pub priors: Vec<f32>,
    /// Normalized global entropy, per image.
    pub ge: Vec<f64>,
}

impl TrainData {
    /// Wraps `images` and computes their priors.
    pub fn new(images: Vec<Image>, prior: Prior) -> Result<Self> {
        let ge = images
            .par_iter()
            .map(|img| global_entropy(img).map(|s| s.value))
            .collect::<Result<Vec<_>>>()?;
        let priors = match prior {
            Prior::None => vec![0.0; images.len()],
            Prior::Ge => ge.iter().map(|&v| v as f32).collect(),
            Prior::Ed => images
                .par_iter()
                .map(|img| edge_density(img, &CannyParams::default()).map(|s| s.value as f32))
                .collect::<Result<_>>()?,
            Prior::Cr => images
                .par_iter()
                .map(|img| compression_ratio(img).map(|c| c.raw as f32))
                .collect::<Result<_>>()?,
        };
        Ok(TrainData { images, priors, ge })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Source images named by `cfg`: the `corpus` directory when set, else
    /// a synthetic corpus.
    pub fn sources(cfg: &TrainConfig) -> Result<Vec<Image>> {
        match &cfg.corpus {
            Some(dir) => list_images(Path::new(dir))?
                .par_iter()
                .map(|p| load_image(p))
                .collect(),
            None => Ok(Self::synthetic(cfg)?.images),
        }
    }

    /// The synthetic corpus `cfg` trains on when no directory is given.
    pub fn synthetic(cfg: &TrainConfig) -> Result<SyntheticCorpus> {
        gen_synthetic_sized(
            cfg.synth_kind,
            cfg.synth_n,
            cfg.synth_side,
            seed::derive(cfg.seed, &[TAG_CORPUS]),
        )
    }

    /// Full pipeline: sources, subset sampling, expansion, priors.
    pub fn prepare(cfg: &TrainConfig) -> Result<Self> {
        Self::from_sources(Self::sources(cfg)?, cfg)
    }

    pub fn from_sources(sources: Vec<Image>, cfg: &TrainConfig) -> Result<Self> {
        let picked = select(sources, cfg)?;
        let images = if cfg.crop_merge >= 2 {
            expand(picked, cfg.crop_merge, cfg.seed)?
        } else {
            picked
        };
        TrainData::new(images, cfg.prior)
    }
}

fn select(sources: Vec<Image>, cfg: &TrainConfig) -> Result<Vec<Image>> {
    if cfg.sample_n == 0 {
        return Ok(sources);
    }
    if cfg.sample_n > sources.len() {
        return Err(Error::Capacity {
            requested: cfg.sample_n,
            available: sources.len(),
        });
    }
    let s = seed::derive(cfg.seed, &[TAG_SAMPLE]);
    let indices = match cfg.sampling {
        Sampling::Random => {
            let mut idx: Vec<usize> = (0..sources.len()).collect();
            idx.shuffle(&mut seed::rng(s));
            idx.truncate(cfg.sample_n);
            idx.sort_unstable();
            idx
        }
        Sampling::Balanced(target) => {
            let ge = sources
                .par_iter()
                .map(|img| global_entropy(img).map(|g| g.value))
                .collect::<Result<Vec<_>>>()?;
            balanced_indices(&ge, cfg.sample_n, target, s)?.indices
        }
    };
    Ok(indices.into_iter().map(|i| sources[i].clone()).collect())
}

/// Sources followed by their merged images.
fn expand(sources: Vec<Image>, c: usize, base: u64) -> Result<Vec<Image>> {
    let merged = sources
        .par_iter()
        .enumerate()
        .map(|(i, img)| crop_and_merge(img, c, seed::derive(base, &[TAG_MERGE, i as u64])))
        .collect::<Result<Vec<_>>>()?;
    let mut out = sources;
    out.extend(merged.into_iter().flatten());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::sampling::SampleTarget;
    use crate::views::merged_count;

    fn cfg() -> TrainConfig {
        TrainConfig {
            synth_n: 40,
            synth_side: 32,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn synthetic_sources_are_reproducible() {
        let a = TrainData::prepare(&cfg()).unwrap();
        let b = TrainData::prepare(&cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        assert_eq!(a.priors.iter().map(|&p| p as f64).collect::<Vec<_>>(), a.ge.iter().map(|&g| g as f32 as f64).collect::<Vec<_>>());
    }

    #[test]
    fn sampling_and_expansion_sizes() {
        let mut c = cfg();
        c.sample_n = 10;
        c.sampling = Sampling::Balanced(SampleTarget::Uniform);
        assert_eq!(TrainData::prepare(&c).unwrap().len(), 10);
        c.sampling = Sampling::Random;
        c.crop_merge = 2;
        c.synth_side = 64;
        assert_eq!(TrainData::prepare(&c).unwrap().len(), 10 * (1 + merged_count(2)));
        c.sample_n = 41;
        assert!(matches!(TrainData::prepare(&c), Err(Error::Capacity { .. })));
    }

    #[test]
    fn priors_follow_the_metric() {
        let imgs = vec![Image::constant(16, 16, 9), Image::from_fn(16, 16, |x, y| ((x * 16 + y) % 256) as u8)];
        let none = TrainData::new(imgs.clone(), Prior::None).unwrap();
        assert_eq!(none.priors, vec![0.0, 0.0]);
        let cr = TrainData::new(imgs.clone(), Prior::Cr).unwrap();
        assert_eq!(cr.priors[0], 8e6);
        let ed = TrainData::new(imgs, Prior::Ed).unwrap();
        assert_eq!(ed.priors[0], 0.0);
    }
}

//! Entropy-balanced selection of a training subset.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed;

use super::{global_entropy, icd::bin_index};

/// Number of entropy bands used for balancing.
pub const SAMPLING_BINS: usize = 10;
pub const GAUSSIAN_MEAN: f64 = 0.5;
pub const GAUSSIAN_STD: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleTarget {
    Uniform,
    /// `N(0.5, 0.15^2)` truncated to `[0, 1]`.
    Gaussian,
}

impl FromStr for SampleTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SampleTarget::Uniform),
            "gaussian" => Ok(SampleTarget::Gaussian),
            other => Err(Error::Parameter(format!("unknown sampling target '{other}'"))),
        }
    }
}

impl fmt::Display for SampleTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleTarget::Uniform => "uniform",
            SampleTarget::Gaussian => "gaussian",
        })
    }
}

/// Target probability of each of `bins` equal-width bins on `[0, 1]`.
pub fn target_masses(target: SampleTarget, bins: usize) -> Vec<f64> {
    match target {
        SampleTarget::Uniform => vec![1.0 / bins as f64; bins],
        SampleTarget::Gaussian => {
            let normal = Normal::new(GAUSSIAN_MEAN, GAUSSIAN_STD).expect("valid normal");
            let raw: Vec<f64> = (0..bins)
                .map(|i| {
                    normal.cdf((i + 1) as f64 / bins as f64) - normal.cdf(i as f64 / bins as f64)
                })
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|m| m / total).collect()
        }
    }
}

/// Integer per-bin counts summing to `n` (largest-remainder rounding, ties to
/// the lower bin).
pub fn target_quotas(n: usize, target: SampleTarget, bins: usize) -> Vec<usize> {
    let masses = target_masses(target, bins);
    let exact: Vec<f64> = masses.iter().map(|m| m * n as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..bins).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in order {
        if rest == 0 {
            break;
        }
        quotas[i] += 1;
        rest -= 1;
    }
    quotas
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome {
    /// Selected corpus indices, ascending.
    pub indices: Vec<usize>,
    pub quotas: Vec<usize>,
    /// Picks taken from a neighbouring bin because a bin ran dry.
    pub borrowed: usize,
}

/// Picks `n` distinct indices whose scores follow `target` across
/// [`SAMPLING_BINS`] bins. A bin without enough candidates borrows from the
/// nearest bin that still has some (lower bin wins ties).
pub fn balanced_indices(
    scores: &[f64],
    n: usize,
    target: SampleTarget,
    seed: u64,
) -> Result<SampleOutcome> {
    if n > scores.len() {
        return Err(Error::Capacity {
            requested: n,
            available: scores.len(),
        });
    }
    let bins = SAMPLING_BINS;
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, &s) in scores.iter().enumerate() {
        pools[bin_index(s, bins)].push(i);
    }
    for (b, pool) in pools.iter_mut().enumerate() {
        pool.shuffle(&mut seed::rng(seed::derive(seed, &[b as u64])));
    }

    let quotas = target_quotas(n, target, bins);
    let mut picked = Vec::with_capacity(n);
    let mut deficits = vec![0usize; bins];
    for b in 0..bins {
        let take = quotas[b].min(pools[b].len());
        picked.extend(pools[b].drain(..take));
        deficits[b] = quotas[b] - take;
    }
    let mut borrowed = 0;
    for b in 0..bins {
        while deficits[b] > 0 {
            let donor = (1..bins)
                .flat_map(|d| [b.checked_sub(d), Some(b + d)])
                .flatten()
                .find(|&j| j < bins && !pools[j].is_empty())
                .ok_or(Error::Capacity {
                    requested: n,
                    available: picked.len(),
                })?;
            let take = deficits[b].min(pools[donor].len());
            picked.extend(pools[donor].drain(..take));
            deficits[b] -= take;
            borrowed += take;
        }
    }
    picked.sort_unstable();
    Ok(SampleOutcome {
        indices: picked,
        quotas,
        borrowed,
    })
}

/// Entropy-balanced subset of `corpus`.
pub fn entropy_balanced_sample(
    corpus: &[Image],
    n: usize,
    target: SampleTarget,
    seed: u64,
) -> Result<Vec<Image>> {
    if n > corpus.len() {
        return Err(Error::Capacity {
            requested: n,
            available: corpus.len(),
        });
    }
    let ge = corpus
        .iter()
        .map(|img| global_entropy(img).map(|s| s.value))
        .collect::<Result<Vec<_>>>()?;
    let out = balanced_indices(&ge, n, target, seed)?;
    Ok(out.indices.iter().map(|&i| corpus[i].clone()).collect())
}

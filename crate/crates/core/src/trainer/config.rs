//! Training configuration and its `key = value` text form.

use std::fmt;
use std::str::FromStr;

use crate::encoder::FaeStages;
use crate::error::{Error, Result};
use crate::eval::synth::SyntheticKind;
use crate::metrics::sampling::SampleTarget;
use crate::views::{CropStrategy, PairConfig};

use super::queue::DEFAULT_CAPACITY;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "CLIC_SEED";

/// Per-image regression target of the complexity-aware term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Prior {
    /// No complexity-aware term at all.
    None,
    /// Normalized global entropy.
    Ge,
    /// Canny edge density.
    Ed,
    /// Raw compression ratio `8 / H`, unbounded.
    Cr,
}

impl FromStr for Prior {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Prior::None),
            "ge" => Ok(Prior::Ge),
            "ed" => Ok(Prior::Ed),
            "cr" => Ok(Prior::Cr),
            other => Err(Error::Config(format!("prior must be none|ge|ed|cr, got '{other}'"))),
        }
    }
}

impl fmt::Display for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Prior::None => "none",
            Prior::Ge => "ge",
            Prior::Ed => "ed",
            Prior::Cr => "cr",
        })
    }
}

/// How the training subset is drawn from the corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    Random,
    Balanced(SampleTarget),
}

impl FromStr for Sampling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Sampling::Random),
            other => other
                .parse()
                .map(Sampling::Balanced)
                .map_err(|_| Error::Config(format!("sampling must be random|uniform|gaussian, got '{other}'"))),
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampling::Random => f.write_str("random"),
            Sampling::Balanced(t) => t.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub tau: f64,
    pub lambda: f64,
    /// Key-encoder momentum.
    pub m: f64,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplier applied at each milestone.
    pub lr_drop: f64,
    /// Fractions of `epochs` where the learning rate drops.
    pub milestones: Vec<f64>,
    pub sgd_momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub queue_capacity: usize,
    pub pairs: PairConfig,
    pub fae_stages: FaeStages,
    pub prior: Prior,
    /// Crop-and-merge factor; 0 disables expansion.
    pub crop_merge: usize,
    pub sampling: Sampling,
    /// Training subset size; 0 keeps the whole corpus.
    pub sample_n: usize,
    /// Image directory; a synthetic corpus is generated when absent.
    pub corpus: Option<String>,
    pub synth_kind: SyntheticKind,
    pub synth_n: usize,
    pub synth_side: usize,
    /// Save a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
    pub out_dir: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.07,
            lambda: 0.25,
            m: 0.999,
            batch_size: 32,
            lr: 0.03,
            lr_drop: 0.1,
            milestones: vec![0.6, 0.8],
            sgd_momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 20,
            seed: 0,
            queue_capacity: DEFAULT_CAPACITY,
            pairs: PairConfig::default(),
            fae_stages: FaeStages::All,
            prior: Prior::Ge,
            crop_merge: 0,
            sampling: Sampling::Random,
            sample_n: 0,
            corpus: None,
            synth_kind: SyntheticKind::Noise,
            synth_n: 2000,
            synth_side: 64,
            checkpoint_every: 0,
            out_dir: "clic-run".into(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = '{value}'")))
}

fn parse_with<T, E>(key: &str, value: &str) -> Result<T>
where
    T: FromStr<Err = E>,
    E: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: {e}")))
}

impl TrainConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown and
    /// repeated keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "tau" => self.tau = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "m" => self.m = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_drop" => self.lr_drop = parse(key, value)?,
            "milestones" => {
                self.milestones = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| parse(key, v.trim()))
                        .collect::<Result<_>>()?
                }
            }
            "sgd_momentum" => self.sgd_momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "queue_capacity" => self.queue_capacity = parse(key, value)?,
            "resolution" => self.pairs.resolution = parse(key, value)?,
            "query_strategy" => self.pairs.query_strategy = parse_with::<CropStrategy, _>(key, value)?,
            "key_strategy" => self.pairs.key_strategy = parse_with::<CropStrategy, _>(key, value)?,
            "query_crop" => self.pairs.query_fraction = parse(key, value)?,
            "key_crop" => self.pairs.key_fraction = parse(key, value)?,
            "fae_stages" => self.fae_stages = parse_with(key, value)?,
            "prior" => self.prior = parse_with(key, value)?,
            "crop_merge" => self.crop_merge = parse(key, value)?,
            "sampling" => self.sampling = parse_with(key, value)?,
            "sample_n" => self.sample_n = parse(key, value)?,
            "corpus" => self.corpus = (!value.is_empty()).then(|| value.to_string()),
            "synth_kind" => self.synth_kind = parse_with(key, value)?,
            "synth_n" => self.synth_n = parse(key, value)?,
            "synth_side" => self.synth_side = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "out_dir" => self.out_dir = value.to_string(),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Every setting as `(key, value)` in a fixed order; feeding the pairs
    /// back through [`TrainConfig::set`] reproduces the config.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let p = &self.pairs;
        let milestones: Vec<String> = self.milestones.iter().map(|m| m.to_string()).collect();
        [
            ("tau", self.tau.to_string()),
            ("lambda", self.lambda.to_string()),
            ("m", self.m.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("lr_drop", self.lr_drop.to_string()),
            ("milestones", milestones.join(",")),
            ("sgd_momentum", self.sgd_momentum.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("queue_capacity", self.queue_capacity.to_string()),
            ("resolution", p.resolution.to_string()),
            ("query_strategy", p.query_strategy.to_string()),
            ("key_strategy", p.key_strategy.to_string()),
            ("query_crop", p.query_fraction.to_string()),
            ("key_crop", p.key_fraction.to_string()),
            ("fae_stages", self.fae_stages.to_string()),
            ("prior", self.prior.to_string()),
            ("crop_merge", self.crop_merge.to_string()),
            ("sampling", self.sampling.to_string()),
            ("sample_n", self.sample_n.to_string()),
            ("corpus", self.corpus.clone().unwrap_or_default()),
            ("synth_kind", self.synth_kind.to_string()),
            ("synth_n", self.synth_n.to_string()),
            ("synth_side", self.synth_side.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("out_dir", self.out_dir.clone()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Applies `CLIC_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = parse(SEED_ENV, v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return fail(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.m) {
            return fail(format!("m must lie in [0, 1), got {}", self.m));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) || !(0.0..1.0).contains(&self.sgd_momentum) {
            return fail("need lr >= 0, weight_decay >= 0 and sgd_momentum in [0, 1)".into());
        }
        if self.milestones.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return fail("milestones are fractions of the epoch count".into());
        }
        if self.queue_capacity == 0 {
            return fail("queue_capacity must be positive".into());
        }
        for f in [self.pairs.query_fraction, self.pairs.key_fraction] {
            if !(f > 0.0 && f <= 1.0) {
                return fail(format!("crop fractions must lie in (0, 1], got {f}"));
            }
        }
        if self.crop_merge == 1 {
            return fail("crop_merge must be 0 (off) or at least 2".into());
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self
            .milestones
            .iter()
            .filter(|&&f| epoch as f64 >= f * self.epochs as f64)
            .count();
        self.lr * self.lr_drop.powi(passed as i32)
    }
}

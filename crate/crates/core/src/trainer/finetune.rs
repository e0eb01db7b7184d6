//! Linear regression head on frozen pooled features.

use rand::seq::SliceRandom;

use crate::encoder::EncoderState;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct FineTuneHead {
    pub weight: Vec<f64>,
    pub bias: f64,
    /// Per-feature standardization applied before the linear map.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FineTuneConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Multiplicative shrink of the weights (not the bias), as in pretraining.
    pub weight_decay: f64,
    pub seed: u64,
    /// Fit feature mean and scale on the labeled set first.
    pub standardize: bool,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            lr: 0.001,
            momentum: 0.9,
            epochs: 200,
            batch_size: 128,
            weight_decay: 1e-4,
            seed: 0,
            standardize: true,
        }
    }
}

impl FineTuneHead {
    pub fn new(dim: usize) -> Self {
        FineTuneHead {
            weight: vec![0.0; dim],
            bias: 0.0,
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.len()
    }

    pub fn predict(&self, features: &[f32]) -> f64 {
        self.weight
            .iter()
            .zip(features)
            .zip(self.mean.iter().zip(&self.scale))
            .map(|((w, &x), (m, s))| w * (x as f64 - m) * s)
            .sum::<f64>()
            + self.bias
    }

    /// Scores of `imgs` under the frozen encoder.
    pub fn predict_images(&self, frozen: &EncoderState, imgs: &[&Image]) -> Result<Vec<f64>> {
        let feats = frozen.pooled_features(imgs)?;
        Ok(feats.iter().map(|f| self.predict(f)).collect())
    }
}

/// Trains `head` by mini-batch SGD with momentum on mean squared error.
/// Only the head changes.
pub fn fit_head(
    mut head: FineTuneHead,
    features: &[Vec<f32>],
    labels: &[f64],
    cfg: &FineTuneConfig,
) -> Result<FineTuneHead> {
    if features.is_empty() {
        return Err(Error::Contract("fine-tuning needs at least one label".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Contract(format!("label {bad} outside [0, 1]")));
    }
    let d = head.dim();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::dim("fit_head", format!("head expects {d} features")));
    }
    if cfg.standardize {
        let n = features.len() as f64;
        for j in 0..d {
            let mean = features.iter().map(|f| f[j] as f64).sum::<f64>() / n;
            let var = features.iter().map(|f| (f[j] as f64 - mean).powi(2)).sum::<f64>() / n;
            head.mean[j] = mean;
            // a constant feature carries nothing; silence it
            head.scale[j] = if var > 1e-20 { 1.0 / var.sqrt() } else { 0.0 };
        }
    }
    if cfg.batch_size == 0 {
        return Err(Error::Parameter("fine-tuning batch size must be positive".into()));
    }
    let mut vw = vec![0.0; d];
    let mut vb = 0.0;
    let mut gw = vec![0.0; d];
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut rng = seed::rng(cfg.seed);
    let mut x = vec![0.0; d];
    let shrink = 1.0 - cfg.lr * cfg.weight_decay;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            gw.fill(0.0);
            let mut gb = 0.0;
            for &i in batch {
                for j in 0..d {
                    x[j] = (features[i][j] as f64 - head.mean[j]) * head.scale[j];
                }
                let pred: f64 = head.weight.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + head.bias;
                let err = 2.0 * (pred - labels[i]) / batch.len() as f64;
                for j in 0..d {
                    gw[j] += err * x[j];
                }
                gb += err;
            }
            for j in 0..d {
                vw[j] = cfg.momentum * vw[j] + gw[j];
                head.weight[j] = shrink * head.weight[j] - cfg.lr * vw[j];
            }
            vb = cfg.momentum * vb + gb;
            head.bias -= cfg.lr * vb;
        }
        if !head.bias.is_finite() || head.weight.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("fine-tuning diverged".into()));
        }
    }
    Ok(head)
}

/// Fits `head` on `labeled` images through the frozen encoder.
pub fn fine_tune(
    head: FineTuneHead,
    frozen: &EncoderState,
    labeled: &[(Image, f64)],
    cfg: &FineTuneConfig,
) -> Result<FineTuneHead> {
    if labeled.is_empty() {
        return Err(Error::Contract("fine-tuning needs at least one label".into()));
    }
    let imgs: Vec<&Image> = labeled.iter().map(|(i, _)| i).collect();
    let labels: Vec<f64> = labeled.iter().map(|(_, l)| *l).collect();
    let feats = frozen.pooled_features(&imgs)?;
    fit_head(head, &feats, &labels, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Architecture;
    use crate::eval::correlation::pcc;

    #[test]
    fn bias_converges_to_a_constant_label() {
        let zero = EncoderState::zeros(Architecture::default()).unwrap();
        let labeled: Vec<(Image, f64)> = (0..8)
            .map(|i| (Image::from_fn(64, 64, |x, y| (x * y + i) as u8), 0.42))
            .collect();
        let cfg = FineTuneConfig {
            epochs: 2000,
            ..FineTuneConfig::default()
        };
        let head = fine_tune(FineTuneHead::new(64), &zero, &labeled, &cfg).unwrap();
        assert!((head.bias - 0.42).abs() < 1e-3, "{}", head.bias);
    }

    #[test]
    fn frozen_encoder_is_untouched() {
        let enc = EncoderState::init(Architecture::default(), 1).unwrap();
        let before = enc.clone();
        let labeled = vec![(Image::constant(64, 64, 100), 0.5), (Image::constant(64, 64, 10), 0.1)];
        fine_tune(FineTuneHead::new(64), &enc, &labeled, &FineTuneConfig::default()).unwrap();
        assert_eq!(enc, before);
    }

    #[test]
    fn features_equal_to_labels_are_learned() {
        let labels: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37) % 1.0).collect();
        let feats: Vec<Vec<f32>> = labels.iter().map(|&l| vec![l as f32, 0.5]).collect();
        let mut last = -1.0;
        for epochs in [10, 200, 3000] {
            let cfg = FineTuneConfig {
                epochs,
                ..FineTuneConfig::default()
            };
            let head = fit_head(FineTuneHead::new(2), &feats, &labels, &cfg).unwrap();
            let preds: Vec<f64> = feats.iter().map(|f| head.predict(f)).collect();
            let err: f64 = preds.iter().zip(&labels).map(|(p, l)| (p - l).abs()).fold(0.0, f64::max);
            let r = pcc(&preds, &labels).unwrap();
            assert!(r > 0.999, "{r}");
            assert!(last < 0.0 || err <= last + 1e-12);
            last = err;
        }
        assert!(last < 1e-3, "{last}");
    }

    #[test]
    fn contract_errors() {
        let enc = EncoderState::zeros(Architecture::default()).unwrap();
        assert!(matches!(
            fine_tune(FineTuneHead::new(64), &enc, &[], &FineTuneConfig::default()),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            fit_head(FineTuneHead::new(1), &[vec![0.0]], &[1.5], &FineTuneConfig::default()),
            Err(Error::Contract(_))
        ));
    }
}

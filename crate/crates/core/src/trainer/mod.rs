//! Momentum-contrast training with a complexity-aware regression term.
//!
//! One step encodes the query views on a tape and the key views detached,
//! scores every query against its own key and the queued negatives, adds
//! `lambda * mean((fae - prior)^2)`, takes an SGD step on the query encoder,
//! pulls the key encoder towards it and enqueues the new keys.

pub mod config;
pub mod data;
pub mod finetune;
pub mod loss;
pub mod queue;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::autograd::Tape;
use crate::checkpoint::Checkpoint;
use crate::encoder::{self, Architecture, EncoderState, Variant};
use crate::error::{Error, Result};
use crate::io::{fmt6, CsvTable};
use crate::seed;
use crate::tensor::Tensor;
use crate::views::{make_pair_with_prior, ViewPair};
use crate::metrics::{ComplexityScore, Metric};

pub use config::{Prior, Sampling, TrainConfig};
pub use data::TrainData;
pub use finetune::{fine_tune, FineTuneConfig, FineTuneHead};
pub use queue::NegativeQueue;

const TAG_INIT: u64 = 1;
const TAG_EPOCH: u64 = 2;
const TAG_VIEW: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub total: f64,
    pub infonce: f64,
    pub cal: f64,
    pub lr: f64,
}

/// Everything that evolves during training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub query: EncoderState,
    pub key: EncoderState,
    /// SGD momentum buffers, canonical parameter order.
    pub velocity: Vec<Tensor>,
    pub queue: NegativeQueue,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed steps.
    pub step: usize,
}

impl TrainState {
    pub fn init(arch: Architecture, cfg: &TrainConfig) -> Result<Self> {
        let (query, key) = EncoderState::init_pair(arch, seed::derive(cfg.seed, &[TAG_INIT]))?;
        let velocity = query.params().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let queue = NegativeQueue::new(cfg.queue_capacity, query.arch().embed_dim)?;
        Ok(TrainState {
            query,
            key,
            velocity,
            queue,
            epoch: 0,
            step: 0,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub state: TrainState,
    pub log: Vec<LossRecord>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        Self::with_arch(cfg, Architecture::default())
    }

    pub fn with_arch(cfg: TrainConfig, arch: Architecture) -> Result<Self> {
        cfg.validate()?;
        let state = TrainState::init(arch, &cfg)?;
        Ok(Trainer {
            cfg,
            state,
            log: Vec::new(),
        })
    }

    /// One optimization step on `pairs` with per-pair `priors`.
    pub fn train_step(&mut self, pairs: &[ViewPair], priors: &[f32], lr: f64) -> Result<LossRecord> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput("training batch"));
        }
        if priors.len() != pairs.len() {
            return Err(Error::Contract(format!(
                "{} priors for {} view pairs",
                priors.len(),
                pairs.len()
            )));
        }
        if self.state.queue.is_empty() {
            return Err(Error::Contract("negative queue is empty; warm it up first".into()));
        }
        let cfg = &self.cfg;
        let st = &mut self.state;

        let keys: Vec<_> = pairs.iter().map(|p| &p.key_view).collect();
        let positives = embeddings(&st.key, &keys, cfg)?;

        let mut tape = Tape::new();
        let params = st.query.record(&mut tape, true);
        let queries: Vec<_> = pairs.iter().map(|p| &p.query_view).collect();
        let input = tape.constant(st.query.input_tensor(&queries)?);
        let fwd = encoder::forward(&mut tape, &params, input, cfg.fae_stages, true)?;
        let emb = fwd.embedding.expect("embedding requested");
        let negatives = Arc::new(st.queue.negatives());
        let l_in = tape.info_nce(emb, positives.clone(), negatives, cfg.tau as f32)?;
        let (total, l_cal) = if cfg.prior == Prior::None {
            (l_in, None)
        } else {
            let cal = tape.mse(fwd.fae, Tensor::from_vec(priors.to_vec()))?;
            let weighted = tape.scale(cal, cfg.lambda as f32);
            (tape.add(l_in, weighted)?, Some(cal))
        };
        let record = LossRecord {
            step: st.step + 1,
            total: tape.value(total).item()? as f64,
            infonce: tape.value(l_in).item()? as f64,
            cal: match l_cal {
                Some(v) => tape.value(v).item()? as f64,
                None => 0.0,
            },
            lr,
        };
        if !record.total.is_finite() {
            return Err(Error::Numeric(format!(
                "loss became {} at step {} (infonce {}, cal {}, lr {})",
                record.total, record.step, record.infonce, record.cal, lr
            )));
        }

        let grads = tape.backward(total)?;
        let g: Vec<Tensor> = params.all().into_iter().map(|v| grads.get(v)).collect();
        let updated = sgd_step(&st.query.params(), &g, &mut st.velocity, lr, cfg.sgd_momentum, cfg.weight_decay)?;
        let query = st.query.with_params(updated)?;
        if !query.all_finite() {
            return Err(Error::Numeric(format!("non-finite parameters after step {}", record.step)));
        }
        st.key = encoder::momentum_update(&st.key, &query, cfg.m)?;
        st.query = query;
        st.queue.enqueue(positives.data())?;
        st.step += 1;
        self.log.push(record);
        Ok(record)
    }

    /// Shuffled source order for `epoch`.
    pub fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed::derive(self.cfg.seed, &[TAG_EPOCH, epoch as u64])));
        order
    }

    /// View pairs of `indices` for `epoch`, generated in parallel.
    pub fn batch_pairs(&self, data: &TrainData, epoch: usize, indices: &[usize]) -> Result<Vec<ViewPair>> {
        indices
            .par_iter()
            .map(|&i| {
                let s = seed::derive(self.cfg.seed, &[TAG_VIEW, epoch as u64, i as u64]);
                let ge = ComplexityScore::new(data.ge[i], Metric::Ge);
                make_pair_with_prior(&data.images[i], &self.cfg.pairs, s, ge)
            })
            .collect()
    }

    /// Fills an empty queue with key embeddings of the epoch's last batch.
    fn warm_up(&mut self, data: &TrainData, epoch: usize, order: &[usize]) -> Result<()> {
        if !self.state.queue.is_empty() {
            return Ok(());
        }
        let tail = order.len() - order.len().min(self.cfg.batch_size);
        let pairs = self.batch_pairs(data, epoch, &order[tail..])?;
        let keys: Vec<_> = pairs.iter().map(|p| &p.key_view).collect();
        let e = embeddings(&self.state.key, &keys, &self.cfg)?;
        self.state.queue.enqueue(e.data())
    }

    /// Runs the next epoch and returns its loss records.
    pub fn run_epoch(&mut self, data: &TrainData) -> Result<Vec<LossRecord>> {
        if data.is_empty() {
            return Err(Error::EmptyInput("training corpus"));
        }
        let epoch = self.state.epoch;
        let order = self.epoch_order(data.len(), epoch);
        self.warm_up(data, epoch, &order)?;
        let lr = self.cfg.lr_at(epoch);
        let mut out = Vec::new();
        for batch in order.chunks(self.cfg.batch_size) {
            let pairs = self.batch_pairs(data, epoch, batch)?;
            let priors: Vec<f32> = batch.iter().map(|&i| data.priors[i]).collect();
            out.push(self.train_step(&pairs, &priors, lr)?);
        }
        self.state.epoch += 1;
        Ok(out)
    }

    /// Trains until `cfg.epochs` epochs are complete, calling `after_epoch`
    /// after each one.
    pub fn fit(&mut self, data: &TrainData, mut after_epoch: impl FnMut(&Trainer) -> Result<()>) -> Result<()> {
        while self.state.epoch < self.cfg.epochs {
            self.run_epoch(data)?;
            after_epoch(self)?;
        }
        Ok(())
    }

    /// `step,loss_total,loss_infonce,loss_cal,lr`
    pub fn log_csv(&self) -> String {
        let mut t = CsvTable::new(&["step", "loss_total", "loss_infonce", "loss_cal", "lr"]);
        for r in &self.log {
            t.row(&[r.step.to_string(), fmt6(r.total), fmt6(r.infonce), fmt6(r.cal), fmt6(r.lr)]);
        }
        t.into_string()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::default();
        c.metadata = self.cfg.to_pairs();
        c.metadata.push(("epoch".into(), self.state.epoch.to_string()));
        c.metadata.push(("step".into(), self.state.step.to_string()));
        c.push_encoder("query.", &self.state.query);
        c.push_encoder("key.", &self.state.key);
        for (name, v) in self.state.query.param_names().into_iter().zip(&self.state.velocity) {
            c.tensors.push((format!("velocity.{name}"), v.clone()));
        }
        c.tensors.push(("queue".into(), self.state.queue.negatives()));
        c
    }

    /// Restores a trainer saved by [`Trainer::to_checkpoint`]; the loss log
    /// starts empty.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut epoch = None;
        let mut step = None;
        for (k, v) in &ckpt.metadata {
            match k.as_str() {
                "epoch" => epoch = Some(v.parse().map_err(|_| Error::Format(format!("bad epoch '{v}'")))?),
                "step" => step = Some(v.parse().map_err(|_| Error::Format(format!("bad step '{v}'")))?),
                k if k.starts_with("arch.") || k.starts_with("head.") => {}
                k => cfg.set(k, v)?,
            }
        }
        cfg.validate()?;
        let query = ckpt.encoder("query.")?;
        let key = ckpt.encoder("key.")?.as_variant(Variant::Key);
        let velocity = query
            .param_names()
            .iter()
            .map(|n| {
                ckpt.tensor(&format!("velocity.{n}"))
                    .cloned()
                    .ok_or_else(|| Error::Format(format!("checkpoint lacks velocity.{n}")))
            })
            .collect::<Result<Vec<_>>>()?;
        query.with_params(velocity.clone())?;
        let queue = match ckpt.tensor("queue") {
            Some(t) if t.numel() > 0 => NegativeQueue::from_entries(cfg.queue_capacity, t)?,
            _ => NegativeQueue::new(cfg.queue_capacity, query.arch().embed_dim)?,
        };
        Ok(Trainer {
            cfg,
            state: TrainState {
                query,
                key,
                velocity,
                queue,
                epoch: epoch.ok_or_else(|| Error::Format("checkpoint lacks epoch".into()))?,
                step: step.ok_or_else(|| Error::Format("checkpoint lacks step".into()))?,
            },
            log: Vec::new(),
        })
    }
}

/// SGD with momentum over data gradients and multiplicative weight decay:
/// `v <- mu * v + g`, `p <- (1 - lr * wd) * p - lr * v`.
pub fn sgd_step(
    params: &[&Tensor],
    grads: &[Tensor],
    velocity: &mut [Tensor],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<Vec<Tensor>> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Contract(format!(
            "{} parameters, {} gradients, {} velocity buffers",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    let shrink = (1.0 - lr * weight_decay) as f32;
    let lr32 = lr as f32;
    let mu = momentum as f32;
    params
        .iter()
        .zip(grads)
        .zip(velocity.iter_mut())
        .map(|((p, g), v)| {
            *v = v.zip_map(g, |vv, gv| mu.mul_add(vv, gv))?;
            p.zip_map(v, |pv, vv| (-lr32).mul_add(vv, shrink * pv))
        })
        .collect()
}

/// Detached unit embeddings `[N, embed_dim]` of `imgs` under `enc`.
fn embeddings(enc: &EncoderState, imgs: &[&crate::image::Image], cfg: &TrainConfig) -> Result<Tensor> {
    let out = enc.encode_batch(imgs, cfg.fae_stages)?;
    let d = enc.arch().embed_dim;
    let data = out.into_iter().flat_map(|o| o.embedding).collect();
    Tensor::new(vec![imgs.len(), d], data)
}

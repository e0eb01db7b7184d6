//! Staged convolutional encoder with a projection head.
//!
//! Each stage is a stride-2 3x3 convolution, a per-channel bias and a ReLU.
//! The mean activation of every stage is its energy; the embedding is the
//! unit-normalized projection of the spatially pooled last stage.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed;
use crate::tensor::{self, Tensor, KERNEL};

pub const STAGE_STRIDE: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    /// 1 feeds the luma channel, 3 feeds RGB.
    pub in_channels: usize,
    /// Output channels of each stage.
    pub widths: Vec<usize>,
    pub embed_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            in_channels: 1,
            widths: vec![8, 16, 32, 64],
            embed_dim: 128,
        }
    }
}

impl Architecture {
    pub fn stages(&self) -> usize {
        self.widths.len()
    }

    /// Width of the pooled last-stage features.
    pub fn pooled_dim(&self) -> usize {
        *self.widths.last().unwrap_or(&0)
    }

    /// Spatial side after every stage for a square input of `side`. The side
    /// must be a multiple of `2^stages` and survive every valid convolution.
    pub fn stage_sides(&self, side: usize) -> Result<Vec<usize>> {
        let div = 1usize << self.stages();
        if side == 0 || !side.is_multiple_of(div) {
            return Err(Error::Size(format!(
                "input side {side} is not a multiple of {div} for {} stride-2 stages",
                self.stages()
            )));
        }
        let mut sides = Vec::with_capacity(self.stages());
        let mut s = side;
        for i in 0..self.stages() {
            s = tensor::conv_out_side(s, STAGE_STRIDE).ok_or_else(|| {
                Error::Size(format!("input side {side} collapses before stage {}", i + 1))
            })?;
            sides.push(s);
        }
        Ok(sides)
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels != 1 && self.in_channels != 3 {
            return Err(Error::Parameter(format!("in_channels {} not 1 or 3", self.in_channels)));
        }
        if self.widths.is_empty() || self.widths.contains(&0) || self.embed_dim == 0 {
            return Err(Error::Parameter(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Query,
    Key,
}

/// Which stage energies make up the feature activation energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FaeStages {
    /// Mean over all stages.
    #[default]
    All,
    /// Last stage only.
    Last,
}

impl FromStr for FaeStages {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FaeStages::All),
            "last" => Ok(FaeStages::Last),
            other => Err(Error::Parameter(format!("fae_stages must be all|last, got '{other}'"))),
        }
    }
}

impl fmt::Display for FaeStages {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FaeStages::All => "all",
            FaeStages::Last => "last",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    /// `[out, in, 3, 3]`
    pub kernel: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderState {
    arch: Architecture,
    variant: Variant,
    stages: Vec<Stage>,
    /// `[pooled_dim, embed_dim]`
    proj_weight: Tensor,
    /// `[embed_dim]`
    proj_bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodeOutput {
    pub embedding: Vec<f32>,
    pub stage_energies: Vec<f64>,
    /// Aggregated feature activation energy.
    pub fae: f64,
    /// Plain sum of the stage energies.
    pub fae_sum: f64,
    /// Spatially pooled last-stage features.
    pub pooled: Vec<f32>,
}

/// Tape handles for one batched forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub stage_energies: Vec<Var>,
    /// `[N]`
    pub fae: Var,
    /// `[N, pooled_dim]`
    pub pooled: Var,
    /// `[N, embed_dim]`, present when requested.
    pub embedding: Option<Var>,
}

/// Parameter handles of an encoder recorded on a tape.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub stages: Vec<(Var, Var)>,
    pub proj_weight: Var,
    pub proj_bias: Var,
}

impl ParamVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.stages.iter().flat_map(|&(k, b)| [k, b]).collect();
        v.push(self.proj_weight);
        v.push(self.proj_bias);
        v
    }
}

impl EncoderState {
    /// Kaiming-uniform weights (`U(-b, b)`, `b = sqrt(6 / fan_in)`), zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seed::rng(seed::derive(seed, &[0xE4C0]));
        let mut uniform = |shape: &[usize], fan_in: usize| {
            let bound = (6.0 / fan_in as f64).sqrt() as f32;
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
            Tensor::new(shape.to_vec(), data).expect("shape matches data")
        };
        let mut stages = Vec::with_capacity(arch.stages());
        let mut cin = arch.in_channels;
        for &cout in &arch.widths {
            stages.push(Stage {
                kernel: uniform(&[cout, cin, KERNEL, KERNEL], cin * KERNEL * KERNEL),
                bias: Tensor::zeros(&[cout]),
            });
            cin = cout;
        }
        let proj_weight = uniform(&[arch.pooled_dim(), arch.embed_dim], arch.pooled_dim());
        let proj_bias = Tensor::zeros(&[arch.embed_dim]);
        Ok(EncoderState {
            arch,
            variant: Variant::Query,
            stages,
            proj_weight,
            proj_bias,
        })
    }

    /// Every parameter zero.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        let init = Self::init(arch, 0)?;
        let tensors = init.params().into_iter().map(|t| Tensor::zeros(t.shape())).collect();
        init.with_params(tensors)
    }

    /// Query encoder plus its key copy.
    pub fn init_pair(arch: Architecture, seed: u64) -> Result<(Self, Self)> {
        let q = Self::init(arch, seed)?;
        let k = q.as_variant(Variant::Key);
        Ok((q, k))
    }

    pub fn as_variant(&self, variant: Variant) -> Self {
        EncoderState {
            variant,
            ..self.clone()
        }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn proj_weight(&self) -> &Tensor {
        &self.proj_weight
    }

    /// Parameters in canonical order: per stage kernel then bias, then the
    /// projection weight and bias.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.stages.iter().flat_map(|s| [&s.kernel, &s.bias]).collect();
        v.push(&self.proj_weight);
        v.push(&self.proj_bias);
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.stages.len())
            .flat_map(|i| [format!("stage{i}.kernel"), format!("stage{i}.bias")])
            .collect();
        v.push("proj.weight".into());
        v.push("proj.bias".into());
        v
    }

    /// Same architecture with parameters replaced (canonical order).
    pub fn with_params(&self, params: Vec<Tensor>) -> Result<Self> {
        let current = self.params();
        if params.len() != current.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, got {}",
                current.len(),
                params.len()
            )));
        }
        for (name, (new, old)) in self.param_names().iter().zip(params.iter().zip(&current)) {
            if new.shape() != old.shape() {
                return Err(Error::Contract(format!(
                    "{name}: shape {:?} vs {:?}",
                    new.shape(),
                    old.shape()
                )));
            }
        }
        let mut it = params.into_iter();
        let stages = (0..self.stages.len())
            .map(|_| Stage {
                kernel: it.next().expect("counted"),
                bias: it.next().expect("counted"),
            })
            .collect();
        Ok(EncoderState {
            arch: self.arch.clone(),
            variant: self.variant,
            stages,
            proj_weight: it.next().expect("counted"),
            proj_bias: it.next().expect("counted"),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|t| t.all_finite())
    }

    /// Records parameters on `tape`, trainable or frozen.
    pub fn record(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let mut leaf = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let stages = self
            .stages
            .iter()
            .map(|s| (leaf(&s.kernel), leaf(&s.bias)))
            .collect();
        ParamVars {
            stages,
            proj_weight: leaf(&self.proj_weight),
            proj_bias: leaf(&self.proj_bias),
        }
    }

    /// `[N, C, side, side]` input tensor with samples scaled to `[0, 1]`.
    pub fn input_tensor(&self, imgs: &[&Image]) -> Result<Tensor> {
        let first = imgs.first().ok_or(Error::EmptyInput("no images to encode"))?;
        let (w, h) = (first.width(), first.height());
        if w != h {
            return Err(Error::Size(format!("encoder input must be square, got {w}x{h}")));
        }
        self.arch.stage_sides(w)?;
        let c = self.arch.in_channels;
        let mut data = Vec::with_capacity(imgs.len() * c * w * h);
        for img in imgs {
            if img.width() != w || img.height() != h {
                return Err(Error::Size(format!(
                    "batch mixes {}x{} with {w}x{h}",
                    img.width(),
                    img.height()
                )));
            }
            if c == 1 {
                data.extend(img.luma_samples().into_iter().map(|v| v as f32 / 255.0));
            } else {
                let rgb: Vec<u8> = if img.channels() == 3 {
                    img.samples().to_vec()
                } else {
                    img.samples().iter().flat_map(|&v| [v, v, v]).collect()
                };
                for ch in 0..3 {
                    data.extend(rgb.iter().skip(ch).step_by(3).map(|&v| v as f32 / 255.0));
                }
            }
        }
        Tensor::new(vec![imgs.len(), c, h, w], data)
    }

    /// Encodes a single image. `with_grad` records the parameters as
    /// trainable leaves; forward values are identical either way.
    pub fn encode(&self, img: &Image, with_grad: bool) -> Result<EncodeOutput> {
        let mut tape = Tape::new();
        let params = self.record(&mut tape, with_grad);
        let input = tape.constant(self.input_tensor(&[img])?);
        let fwd = forward(&mut tape, &params, input, FaeStages::All, true)?;
        Ok(collect_outputs(&tape, &fwd, FaeStages::All)?.remove(0))
    }

    /// Encodes a batch of same-size images without gradient tracking.
    pub fn encode_batch(&self, imgs: &[&Image], fae_stages: FaeStages) -> Result<Vec<EncodeOutput>> {
        let mut tape = Tape::new();
        let params = self.record(&mut tape, false);
        let input = tape.constant(self.input_tensor(imgs)?);
        let fwd = forward(&mut tape, &params, input, fae_stages, true)?;
        collect_outputs(&tape, &fwd, fae_stages)
    }

    /// Per-stage mean activations; never touches the projection head.
    pub fn stage_energies(&self, img: &Image) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let params = self.record(&mut tape, false);
        let input = tape.constant(self.input_tensor(&[img])?);
        let fwd = forward(&mut tape, &params, input, FaeStages::All, false)?;
        fwd.stage_energies
            .iter()
            .map(|&v| tape.value(v).data().first().map(|&x| x as f64).ok_or(Error::EmptyInput("stage")))
            .collect()
    }

    /// Pooled last-stage features of each image, `[N][pooled_dim]`.
    pub fn pooled_features(&self, imgs: &[&Image]) -> Result<Vec<Vec<f32>>> {
        let mut tape = Tape::new();
        let params = self.record(&mut tape, false);
        let input = tape.constant(self.input_tensor(imgs)?);
        let fwd = forward(&mut tape, &params, input, FaeStages::All, false)?;
        let d = self.arch.pooled_dim();
        Ok(tape.value(fwd.pooled).data().chunks(d).map(|c| c.to_vec()).collect())
    }
}

/// Batched forward pass on `tape`.
pub fn forward(
    tape: &mut Tape,
    params: &ParamVars,
    input: Var,
    fae_stages: FaeStages,
    with_embedding: bool,
) -> Result<ForwardVars> {
    let mut x = input;
    let mut energies = Vec::with_capacity(params.stages.len());
    for &(kernel, bias) in &params.stages {
        let conv = tape.conv2d(x, kernel, STAGE_STRIDE)?;
        let biased = tape.add_channel_bias(conv, bias)?;
        x = tape.relu(biased);
        energies.push(tape.mean_per_sample(x)?);
    }
    let fae = match fae_stages {
        FaeStages::Last => *energies.last().ok_or(Error::EmptyInput("no stages"))?,
        FaeStages::All => {
            let mut acc = energies[0];
            for &e in &energies[1..] {
                acc = tape.add(acc, e)?;
            }
            tape.scale(acc, 1.0 / energies.len() as f32)
        }
    };
    let pooled = tape.global_avg_pool(x)?;
    let embedding = if with_embedding {
        let proj = tape.matmul(pooled, params.proj_weight)?;
        let proj = tape.add_row_bias(proj, params.proj_bias)?;
        Some(tape.l2_normalize(proj)?)
    } else {
        None
    };
    Ok(ForwardVars {
        stage_energies: energies,
        fae,
        pooled,
        embedding,
    })
}

fn collect_outputs(tape: &Tape, fwd: &ForwardVars, fae_stages: FaeStages) -> Result<Vec<EncodeOutput>> {
    let pooled = tape.value(fwd.pooled);
    let n = pooled.shape()[0];
    let pd = pooled.shape()[1];
    let emb = fwd
        .embedding
        .map(|v| tape.value(v))
        .ok_or_else(|| Error::Contract("forward ran without an embedding".into()))?;
    let ed = emb.shape()[1];
    Ok((0..n)
        .map(|i| {
            let stage_energies: Vec<f64> = fwd
                .stage_energies
                .iter()
                .map(|&v| tape.value(v).data()[i] as f64)
                .collect();
            let fae_sum = stage_energies.iter().sum::<f64>();
            let fae = match fae_stages {
                FaeStages::All => fae_sum / stage_energies.len() as f64,
                FaeStages::Last => *stage_energies.last().expect("nonempty"),
            };
            EncodeOutput {
                embedding: emb.data()[i * ed..(i + 1) * ed].to_vec(),
                stage_energies,
                fae,
                fae_sum,
                pooled: pooled.data()[i * pd..(i + 1) * pd].to_vec(),
            }
        })
        .collect())
}

/// `key <- m * key + (1 - m) * query`, one fused multiply-add per element.
pub fn momentum_update(key: &EncoderState, query: &EncoderState, m: f64) -> Result<EncoderState> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::Contract(format!("momentum {m} outside [0, 1)")));
    }
    if key.arch != query.arch {
        return Err(Error::Contract("key and query architectures differ".into()));
    }
    let keep = m as f32;
    let take = (1.0 - m) as f32;
    let params = key
        .params()
        .into_iter()
        .zip(query.params())
        .map(|(k, q)| k.zip_map(q, |kv, qv| keep.mul_add(kv, take * qv)))
        .collect::<Result<Vec<_>>>()?;
    key.with_params(params)
}

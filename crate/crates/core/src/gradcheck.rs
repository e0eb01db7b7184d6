//! Finite-difference check of the tape's gradients.
//!
//! The analytic gradients come from the `f32` tape. The numeric side is a
//! separate plain-loop `f64` implementation of the same forward pass, so
//! central differences are not drowned in single-precision noise.

use std::sync::Arc;

use rand::Rng as _;

use crate::autograd::{Tape, Var};
use crate::encoder::{self, Architecture, EncoderState, FaeStages};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

pub const TOLERANCE: f64 = 1e-3;
const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
const FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub cases: Vec<CaseResult>,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < TOLERANCE
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

// ---- f64 reference ------------------------------------------------------

/// `[N, C, H, W]` tensor in f64.
#[derive(Clone, Debug)]
struct T64 {
    shape: [usize; 4],
    v: Vec<f64>,
}

fn conv(x: &T64, k: &[f64], cout: usize, stride: usize) -> T64 {
    let [n, cin, h, w] = x.shape;
    let oh = (h - 3) / stride + 1;
    let ow = (w - 3) / stride + 1;
    let mut out = vec![0.0; n * cout * oh * ow];
    for b in 0..n {
        for o in 0..cout {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..cin {
                        for ki in 0..3 {
                            for kj in 0..3 {
                                acc += k[((o * cin + c) * 3 + ki) * 3 + kj]
                                    * x.v[((b * cin + c) * h + i * stride + ki) * w + j * stride + kj];
                            }
                        }
                    }
                    out[((b * cout + o) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    T64 {
        shape: [n, cout, oh, ow],
        v: out,
    }
}

fn bias_relu(x: &mut T64, bias: &[f64]) {
    let [_, c, h, w] = x.shape;
    for (i, v) in x.v.iter_mut().enumerate() {
        *v = (*v + bias[(i / (h * w)) % c]).max(0.0);
    }
}

fn per_sample_mean(x: &T64) -> Vec<f64> {
    let per = x.shape[1] * x.shape[2] * x.shape[3];
    x.v.chunks(per).map(|c| c.iter().sum::<f64>() / per as f64).collect()
}

fn pool(x: &T64) -> Vec<Vec<f64>> {
    let [n, c, h, w] = x.shape;
    (0..n)
        .map(|b| {
            (0..c)
                .map(|ch| {
                    let s = &x.v[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
                    s.iter().sum::<f64>() / (h * w) as f64
                })
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct LossSpec {
    input: T64,
    positives: Vec<Vec<f64>>,
    negatives: Vec<Vec<f64>>,
    priors: Vec<f64>,
    tau: f64,
    lambda: f64,
    fae_stages: FaeStages,
}

/// Full objective in f64 with parameters in canonical order.
fn reference_loss(arch: &Architecture, params: &[Vec<f64>], spec: &LossSpec) -> f64 {
    let mut x = spec.input.clone();
    let mut energies = Vec::new();
    for (s, &cout) in arch.widths.iter().enumerate() {
        x = conv(&x, &params[2 * s], cout, encoder::STAGE_STRIDE);
        bias_relu(&mut x, &params[2 * s + 1]);
        energies.push(per_sample_mean(&x));
    }
    let n = x.shape[0];
    let fae: Vec<f64> = (0..n)
        .map(|b| match spec.fae_stages {
            FaeStages::All => energies.iter().map(|e| e[b]).sum::<f64>() / energies.len() as f64,
            FaeStages::Last => energies.last().unwrap()[b],
        })
        .collect();
    let pooled = pool(&x);
    let (w, bias) = (&params[2 * arch.stages()], &params[2 * arch.stages() + 1]);
    let e = arch.embed_dim;
    let mut l_in = 0.0;
    for (b, p) in pooled.iter().enumerate() {
        let z: Vec<f64> = (0..e)
            .map(|j| p.iter().enumerate().map(|(i, &v)| v * w[i * e + j]).sum::<f64>() + bias[j])
            .collect();
        let norm = dot(&z, &z).sqrt();
        let q: Vec<f64> = z.iter().map(|v| v / norm).collect();
        let pos = dot(&q, &spec.positives[b]) / spec.tau;
        let logits: Vec<f64> = std::iter::once(pos)
            .chain(spec.negatives.iter().map(|k| dot(&q, k) / spec.tau))
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        l_in += max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() - pos;
    }
    l_in /= n as f64;
    let cal = fae
        .iter()
        .zip(&spec.priors)
        .map(|(f, g)| (f - g).powi(2))
        .sum::<f64>()
        / n as f64;
    l_in + spec.lambda * cal
}

// ---- cases --------------------------------------------------------------

fn random_unit(rng: &mut seed::Rng, d: usize) -> Vec<f32> {
    let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = dot(&v, &v).sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

fn compare(name: &str, analytic: &[Tensor], base: &[Vec<f64>], f: impl Fn(&[Vec<f64>]) -> f64) -> CaseResult {
    let mut params = base.to_vec();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (t, a) in analytic.iter().enumerate() {
        for i in 0..params[t].len() {
            let orig = params[t][i];
            params[t][i] = orig + STEP;
            let up = f(&params);
            params[t][i] = orig - STEP;
            let down = f(&params);
            params[t][i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(a.data()[i] as f64, numeric));
            checked += 1;
        }
    }
    CaseResult {
        name: name.to_string(),
        checked,
        max_rel_err: worst,
    }
}

fn to64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// conv -> bias -> relu -> pool -> matmul -> weighted sum, gradients with
/// respect to the input, kernel, bias and matrix.
fn conv_relu_matmul(rng: &mut seed::Rng) -> Result<CaseResult> {
    let (n, cin, side, cout, e) = (2, 2, 8, 3, 4);
    let mut rand = |shape: Vec<usize>| {
        let len = shape.iter().product();
        Tensor::new(shape, (0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
    };
    let x = rand(vec![n, cin, side, side])?;
    let k = rand(vec![cout, cin, 3, 3])?;
    let b = rand(vec![cout])?;
    let w = rand(vec![cout, e])?;
    let r = rand(vec![n, e])?;

    let mut tape = Tape::new();
    let vars: Vec<Var> = [&x, &k, &b, &w].iter().map(|t| tape.param((*t).clone())).collect();
    let c = tape.conv2d(vars[0], vars[1], 2)?;
    let c = tape.add_channel_bias(c, vars[2])?;
    let a = tape.relu(c);
    let p = tape.global_avg_pool(a)?;
    let m = tape.matmul(p, vars[3])?;
    let rv = tape.constant(r.clone());
    let prod = tape.mul(m, rv)?;
    let loss = tape.sum(prod)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get(v)).collect();

    let r64 = to64(&r);
    let f = |p: &[Vec<f64>]| {
        let mut y = conv(
            &T64 {
                shape: [n, cin, side, side],
                v: p[0].clone(),
            },
            &p[1],
            cout,
            2,
        );
        bias_relu(&mut y, &p[2]);
        pool(&y)
            .iter()
            .enumerate()
            .map(|(bi, row)| {
                (0..e)
                    .map(|j| row.iter().enumerate().map(|(i, v)| v * p[3][i * e + j]).sum::<f64>() * r64[bi * e + j])
                    .sum::<f64>()
            })
            .sum()
    };
    let base: Vec<Vec<f64>> = [&x, &k, &b, &w].iter().map(|t| to64(t)).collect();
    Ok(compare("conv_relu_matmul", &analytic, &base, f))
}

/// InfoNCE plus the weighted complexity-aware term through a two-stage
/// encoder on 8x8 inputs with eight negatives.
fn encoder_objective(rng: &mut seed::Rng, fae_stages: FaeStages, name: &str) -> Result<CaseResult> {
    let arch = Architecture {
        in_channels: 1,
        widths: vec![4, 6],
        embed_dim: 8,
    };
    let (n, side, k) = (3, 8, 8);
    let mut enc = EncoderState::init(arch.clone(), rng.gen())?;
    // nonzero biases exercise the bias gradients
    let params = enc
        .params()
        .into_iter()
        .map(|t| {
            let data = t.data().iter().map(|&v| if v == 0.0 { rng.gen_range(-0.1f32..0.1) } else { v }).collect();
            Tensor::new(t.shape().to_vec(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    enc = enc.with_params(params)?;
    let input = Tensor::new(
        vec![n, 1, side, side],
        (0..n * side * side).map(|_| rng.gen_range(0.0f32..1.0)).collect(),
    )?;
    let positives: Vec<Vec<f32>> = (0..n).map(|_| random_unit(rng, arch.embed_dim)).collect();
    let negatives: Vec<Vec<f32>> = (0..k).map(|_| random_unit(rng, arch.embed_dim)).collect();
    let priors: Vec<f32> = (0..n).map(|_| rng.gen_range(0.0f32..1.0)).collect();
    let (tau, lambda) = (0.5f32, 0.25f32);

    let mut tape = Tape::new();
    let pv = enc.record(&mut tape, true);
    let x = tape.constant(input.clone());
    let fwd = encoder::forward(&mut tape, &pv, x, fae_stages, true)?;
    let emb = fwd.embedding.ok_or_else(|| Error::Contract("no embedding".into()))?;
    let l_in = tape.info_nce(
        emb,
        Tensor::new(vec![n, arch.embed_dim], positives.concat())?,
        Arc::new(Tensor::new(vec![k, arch.embed_dim], negatives.concat())?),
        tau,
    )?;
    let cal = tape.mse(fwd.fae, Tensor::from_vec(priors.clone()))?;
    let weighted = tape.scale(cal, lambda);
    let loss = tape.add(l_in, weighted)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = pv.all().into_iter().map(|v| grads.get(v)).collect();

    let spec = LossSpec {
        input: T64 {
            shape: [n, 1, side, side],
            v: to64(&input),
        },
        positives: positives.iter().map(|p| p.iter().map(|&v| v as f64).collect()).collect(),
        negatives: negatives.iter().map(|p| p.iter().map(|&v| v as f64).collect()).collect(),
        priors: priors.iter().map(|&v| v as f64).collect(),
        tau: tau as f64,
        lambda: lambda as f64,
        fae_stages,
    };
    let base: Vec<Vec<f64>> = enc.params().into_iter().map(to64).collect();
    let tape_loss = tape.value(loss).item()? as f64;
    let ref_loss = reference_loss(&arch, &base, &spec);
    if (tape_loss - ref_loss).abs() > 1e-4 * ref_loss.abs().max(1.0) {
        return Err(Error::Numeric(format!(
            "{name}: tape loss {tape_loss} disagrees with reference {ref_loss}"
        )));
    }
    Ok(compare(name, &analytic, &base, |p| reference_loss(&arch, p, &spec)))
}

/// Runs every case with inputs drawn from `seed`.
pub fn run(seed: u64) -> Result<GradcheckReport> {
    let mut rng = seed::rng(seed);
    Ok(GradcheckReport {
        cases: vec![
            conv_relu_matmul(&mut rng)?,
            encoder_objective(&mut rng, FaeStages::All, "objective_fae_all")?,
            encoder_objective(&mut rng, FaeStages::Last, "objective_fae_last")?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let r = run(7).unwrap();
        for c in &r.cases {
            assert!(c.checked > 0);
            assert!(c.max_rel_err < TOLERANCE, "{c:?}");
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(rel_err(1.0, 1.0), 0.0);
        assert!((rel_err(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(rel_err(0.0, 1e-9), 1e-3);
    }
}

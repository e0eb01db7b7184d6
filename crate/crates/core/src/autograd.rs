//! Reverse-mode gradient tape over [`Tensor`] values.
//!
//! Every operation appends one node; node indices are therefore already a
//! topological order and the backward sweep simply walks them in reverse.
//!
//! ```
//! use clic_core::autograd::Tape;
//! use clic_core::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let p = tape.param(Tensor::from_vec(vec![1.0, -2.0, 3.0]));
//! let sq = tape.mul(p, p).unwrap();
//! let half = tape.sum(sq).unwrap();
//! let loss = tape.scale(half, 0.5);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(p).data(), &[1.0, -2.0, 3.0]);
//! ```

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Unit-length tolerance for contrastive inputs.
pub const UNIT_TOLERANCE: f64 = 1e-4;

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, kernel: Var, stride: usize },
    ChannelBias { x: Var, bias: Var },
    RowBias { x: Var, bias: Var },
    Relu(Var),
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Sum(Var),
    Mean(Var),
    MeanPerSample(Var),
    GlobalAvgPool(Var),
    L2Normalize(Var),
    InfoNce {
        q: Var,
        positives: Tensor,
        negatives: Arc<Tensor>,
        tau: f32,
        probs: Vec<f64>,
    },
    Mse { x: Var, target: Tensor },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
    is_param: bool,
}

/// Single-owner record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<Var>,
}

impl Gradients {
    /// Adjoint of `v`; zeros when `v` did not influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Every parameter leaf on the tape, in creation order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            is_param: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, t: Tensor) -> Var {
        let v = self.push(Op::Leaf, t, true);
        self.nodes[v.0].is_param = true;
        v
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize) -> Result<Var> {
        let out = tensor::conv2d(self.value(input), self.value(kernel), stride)?;
        let rg = self.rg(input) || self.rg(kernel);
        Ok(self.push(Op::Conv2d { input, kernel, stride }, out, rg))
    }

    /// Adds `bias[C]` to every position of channel `c` in `x[N,C,H,W]`.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("add_channel_bias")?;
        let b = self.value(bias);
        if b.shape() != [c] {
            return Err(Error::dim(
                "add_channel_bias",
                format!("bias {:?} for {c} channels", b.shape()),
            ));
        }
        let plane = h * w;
        let bd = b.data();
        let data: Vec<f32> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bd[(i / plane) % c])
            .collect();
        let out = Tensor::new(vec![n, c, h, w], data)?;
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(Op::ChannelBias { x, bias }, out, rg))
    }

    /// Adds `bias[D]` to every row of `x[N,D]`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let [n, d] = self.value(x).dims2("add_row_bias")?;
        let b = self.value(bias);
        if b.shape() != [d] {
            return Err(Error::dim(
                "add_row_bias",
                format!("bias {:?} for rows of width {d}", b.shape()),
            ));
        }
        let bd = b.data();
        let data: Vec<f32> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bd[i % d])
            .collect();
        let out = Tensor::new(vec![n, d], data)?;
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(Op::RowBias { x, bias }, out, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = tensor::relu(self.value(x));
        let rg = self.rg(x);
        self.push(Op::Relu(x), out, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Matmul(a, b), out, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), out, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Sub(a, b), out, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul(a, b), out, rg))
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Var {
        let out = self.value(x).map(|v| v * factor);
        let rg = self.rg(x);
        self.push(Op::Scale(x, factor), out, rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.numel() == 0 {
            return Err(Error::EmptyInput("sum of empty tensor"));
        }
        let out = Tensor::scalar(t.sum_f64() as f32);
        let rg = self.rg(x);
        Ok(self.push(Op::Sum(x), out, rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(tensor::mean(self.value(x))?);
        let rg = self.rg(x);
        Ok(self.push(Op::Mean(x), out, rg))
    }

    /// `x[N, ...] -> [N]`: mean over every axis but the first.
    pub fn mean_per_sample(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let n = *t.shape().first().ok_or_else(|| Error::dim("mean_per_sample", "rank 0"))?;
        if n == 0 || t.numel() == 0 {
            return Err(Error::EmptyInput("mean_per_sample of empty tensor"));
        }
        let per = t.numel() / n;
        let data = t
            .data()
            .chunks(per)
            .map(|c| (c.iter().map(|&v| v as f64).sum::<f64>() / per as f64) as f32)
            .collect();
        let out = Tensor::new(vec![n], data)?;
        let rg = self.rg(x);
        Ok(self.push(Op::MeanPerSample(x), out, rg))
    }

    /// `x[N,C,H,W] -> [N,C]` spatial average.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("global_avg_pool")?;
        let plane = h * w;
        let data = self
            .value(x)
            .data()
            .chunks(plane)
            .map(|p| (p.iter().map(|&v| v as f64).sum::<f64>() / plane as f64) as f32)
            .collect();
        let out = Tensor::new(vec![n, c], data)?;
        let rg = self.rg(x);
        Ok(self.push(Op::GlobalAvgPool(x), out, rg))
    }

    /// Unit-normalizes along the last axis; fails on a zero-norm row.
    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let out = tensor::l2_normalize(self.value(x))?;
        let rg = self.rg(x);
        Ok(self.push(Op::L2Normalize(x), out, rg))
    }

    /// Mean InfoNCE loss over the rows of `q[N,D]`.
    ///
    /// Row `i` scores its own positive `positives[i]` against every row of
    /// `negatives[K,D]`. Keys are detached: only `q` receives a gradient.
    pub fn info_nce(
        &mut self,
        q: Var,
        positives: Tensor,
        negatives: Arc<Tensor>,
        tau: f32,
    ) -> Result<Var> {
        if !(tau > 0.0) {
            return Err(Error::Contract(format!("temperature must be positive, got {tau}")));
        }
        let [n, d] = self.value(q).dims2("info_nce")?;
        if positives.shape() != [n, d] {
            return Err(Error::dim(
                "info_nce",
                format!("positives {:?} vs queries {:?}", positives.shape(), [n, d]),
            ));
        }
        let k = match negatives.shape() {
            [0, _] | [0] => return Err(Error::Contract("negative queue is empty".into())),
            &[k, kd] if kd == d => k,
            other => {
                return Err(Error::dim(
                    "info_nce",
                    format!("negatives {:?} vs embedding width {d}", other),
                ))
            }
        };
        check_unit_rows("query", self.value(q).data(), d)?;
        check_unit_rows("positive key", positives.data(), d)?;
        check_unit_rows("negative key", negatives.data(), d)?;

        let qd = self.value(q).data();
        let inv_tau = 1.0 / tau as f64;
        let mut probs = vec![0f64; n * (k + 1)];
        let mut total = 0f64;
        for i in 0..n {
            let qi = &qd[i * d..(i + 1) * d];
            let row = &mut probs[i * (k + 1)..(i + 1) * (k + 1)];
            row[0] = dot(qi, &positives.data()[i * d..(i + 1) * d]) * inv_tau;
            for (j, neg) in negatives.data().chunks(d).enumerate() {
                row[j + 1] = dot(qi, neg) * inv_tau;
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|&l| (l - max).exp()).sum();
            let lse = max + z.ln();
            total += lse - row[0];
            for l in row.iter_mut() {
                *l = (*l - lse).exp();
            }
        }
        let out = Tensor::scalar((total / n as f64) as f32);
        let rg = self.rg(q);
        Ok(self.push(
            Op::InfoNce {
                q,
                positives,
                negatives,
                tau,
                probs,
            },
            out,
            rg,
        ))
    }

    /// `mean((x - target)^2)` with a detached target of the same shape.
    pub fn mse(&mut self, x: Var, target: Tensor) -> Result<Var> {
        let t = self.value(x);
        if t.shape() != target.shape() {
            return Err(Error::Contract(format!(
                "mse operands differ: {:?} vs {:?}",
                t.shape(),
                target.shape()
            )));
        }
        if t.numel() == 0 {
            return Err(Error::EmptyInput("mse of empty batch"));
        }
        let s: f64 = t
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| {
                let e = a as f64 - b as f64;
                e * e
            })
            .sum();
        let out = Tensor::scalar((s / t.numel() as f64) as f32);
        let rg = self.rg(x);
        Ok(self.push(Op::Mse { x, target }, out, rg))
    }

    /// Propagates from a scalar `loss` back to every leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let gt = Tensor::new(node.value.shape().to_vec(), g)?;
            self.propagate(&node.op, &node.value, &gt, &mut adj)?;
            adj[idx] = Some(gt.into_data());
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_param)
            .map(|(i, _)| Var(i))
            .collect();
        let grads = adj
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|g| Tensor::new(n.value.shape().to_vec(), g)).transpose())
            .collect::<Result<Vec<_>>>()?;
        Ok(Gradients {
            grads,
            shapes,
            params,
        })
    }

    fn accumulate(&self, adj: &mut [Option<Vec<f32>>], v: Var, g: impl IntoIterator<Item = f32>) {
        if !self.rg(v) {
            return;
        }
        match &mut adj[v.0] {
            Some(buf) => {
                for (a, b) in buf.iter_mut().zip(g) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g.into_iter().collect()),
        }
    }

    fn propagate(
        &self,
        op: &Op,
        out: &Tensor,
        g: &Tensor,
        adj: &mut [Option<Vec<f32>>],
    ) -> Result<()> {
        let gd = g.data();
        match op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                stride,
            } => {
                let (gi, gk) = tensor::conv2d_backward(
                    self.value(*input),
                    self.value(*kernel),
                    *stride,
                    g,
                    self.rg(*input),
                )?;
                if let Some(gi) = gi {
                    self.accumulate(adj, *input, gi.into_data());
                }
                self.accumulate(adj, *kernel, gk.into_data());
            }
            Op::ChannelBias { x, bias } => {
                let [_, c, h, w] = out.dims4("add_channel_bias")?;
                let plane = h * w;
                let mut gb = vec![0f64; c];
                for (i, p) in gd.chunks(plane).enumerate() {
                    gb[i % c] += p.iter().map(|&v| v as f64).sum::<f64>();
                }
                self.accumulate(adj, *x, gd.iter().copied());
                self.accumulate(adj, *bias, gb.into_iter().map(|v| v as f32));
            }
            Op::RowBias { x, bias } => {
                let [_, d] = out.dims2("add_row_bias")?;
                let mut gb = vec![0f64; d];
                for row in gd.chunks(d) {
                    for (a, &b) in gb.iter_mut().zip(row) {
                        *a += b as f64;
                    }
                }
                self.accumulate(adj, *x, gd.iter().copied());
                self.accumulate(adj, *bias, gb.into_iter().map(|v| v as f32));
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                self.accumulate(
                    adj,
                    *x,
                    gd.iter().zip(xv).map(|(&g, &v)| if v > 0.0 { g } else { 0.0 }),
                );
            }
            Op::Matmul(a, b) => {
                if self.rg(*a) {
                    let bt = tensor::transpose(self.value(*b))?;
                    let ga = tensor::matmul(g, &bt)?;
                    self.accumulate(adj, *a, ga.into_data());
                }
                if self.rg(*b) {
                    let at = tensor::transpose(self.value(*a))?;
                    let gb = tensor::matmul(&at, g)?;
                    self.accumulate(adj, *b, gb.into_data());
                }
            }
            Op::Add(a, b) => {
                self.accumulate(adj, *a, gd.iter().copied());
                self.accumulate(adj, *b, gd.iter().copied());
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, gd.iter().copied());
                self.accumulate(adj, *b, gd.iter().map(|v| -v));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                self.accumulate(adj, *a, gd.iter().zip(bv).map(|(g, b)| g * b));
                self.accumulate(adj, *b, gd.iter().zip(av).map(|(g, a)| g * a));
            }
            Op::Scale(x, f) => self.accumulate(adj, *x, gd.iter().map(|v| v * f)),
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                self.accumulate(adj, *x, std::iter::repeat_n(gd[0], n));
            }
            Op::Mean(x) => {
                let n = self.value(*x).numel();
                let v = gd[0] / n as f32;
                self.accumulate(adj, *x, std::iter::repeat_n(v, n));
            }
            Op::MeanPerSample(x) => {
                let t = self.value(*x);
                let n = t.shape()[0];
                let per = t.numel() / n;
                let it = gd
                    .iter()
                    .flat_map(|&gv| std::iter::repeat_n(gv / per as f32, per));
                self.accumulate(adj, *x, it.collect::<Vec<_>>());
            }
            Op::GlobalAvgPool(x) => {
                let [_, _, h, w] = self.value(*x).dims4("global_avg_pool")?;
                let plane = h * w;
                let it = gd
                    .iter()
                    .flat_map(|&gv| std::iter::repeat_n(gv / plane as f32, plane));
                self.accumulate(adj, *x, it.collect::<Vec<_>>());
            }
            Op::L2Normalize(x) => {
                let xv = self.value(*x).data();
                let d = *out.shape().last().unwrap_or(&1);
                let mut gx = Vec::with_capacity(xv.len());
                for ((xr, yr), gr) in xv.chunks(d).zip(out.data().chunks(d)).zip(gd.chunks(d)) {
                    let norm = xr.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
                    let yg: f64 = yr.iter().zip(gr).map(|(&y, &g)| y as f64 * g as f64).sum();
                    gx.extend(
                        yr.iter()
                            .zip(gr)
                            .map(|(&y, &g)| ((g as f64 - y as f64 * yg) / norm) as f32),
                    );
                }
                self.accumulate(adj, *x, gx);
            }
            Op::InfoNce {
                q,
                positives,
                negatives,
                tau,
                probs,
            } => {
                let [n, d] = self.value(*q).dims2("info_nce")?;
                let k1 = probs.len() / n;
                let scale = gd[0] as f64 / (n as f64 * *tau as f64);
                let mut gq = vec![0f32; n * d];
                for i in 0..n {
                    let p = &probs[i * k1..(i + 1) * k1];
                    let mut acc = vec![0f64; d];
                    let pos = &positives.data()[i * d..(i + 1) * d];
                    for (a, &kv) in acc.iter_mut().zip(pos) {
                        *a += (p[0] - 1.0) * kv as f64;
                    }
                    for (j, neg) in negatives.data().chunks(d).enumerate() {
                        let pj = p[j + 1];
                        for (a, &kv) in acc.iter_mut().zip(neg) {
                            *a += pj * kv as f64;
                        }
                    }
                    for (o, a) in gq[i * d..(i + 1) * d].iter_mut().zip(acc) {
                        *o = (a * scale) as f32;
                    }
                }
                self.accumulate(adj, *q, gq);
            }
            Op::Mse { x, target } => {
                let xv = self.value(*x).data();
                let n = xv.len() as f64;
                let gs = gd[0] as f64;
                self.accumulate(
                    adj,
                    *x,
                    xv.iter()
                        .zip(target.data())
                        .map(|(&a, &b)| (2.0 * (a as f64 - b as f64) / n * gs) as f32)
                        .collect::<Vec<_>>(),
                );
            }
        }
        Ok(())
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn check_unit_rows(what: &str, data: &[f32], d: usize) -> Result<()> {
    for (i, row) in data.chunks(d).enumerate() {
        let norm = dot(row, row).sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Contract(format!(
                "{what} {i} has norm {norm:.6}, expected unit length"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_of_sum_is_ones() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::new(vec![2, 3], vec![0.5; 6]).unwrap());
        let s = tape.sum(p).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(p).data(), &[1.0; 6]);
    }

    #[test]
    fn untouched_param_gets_zero() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        let unused = tape.param(Tensor::from_vec(vec![7.0]));
        let s = tape.sum(p).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(unused).data(), &[0.0]);
        assert_eq!(g.params(), &[p, unused]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_nothing() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let p = tape.param(Tensor::from_vec(vec![3.0, 4.0]));
        let m = tape.mul(c, p).unwrap();
        let s = tape.sum(m).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(p).data(), &[1.0, 2.0]);
        assert_eq!(g.get(c).data(), &[0.0, 0.0]);
    }

    #[test]
    fn info_nce_uniform_logits() {
        // every logit equal -> ln(K + 1)
        let d = 4;
        let e0 = Tensor::new(vec![1, d], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let negs = Tensor::new(vec![3, d], [0.0, 1.0, 0.0, 0.0].repeat(3)).unwrap();
        let pos = Tensor::new(vec![1, d], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let mut tape = Tape::new();
        let q = tape.param(e0);
        let l = tape.info_nce(q, pos, Arc::new(negs), 0.07).unwrap();
        let v = tape.value(l).item().unwrap() as f64;
        assert!((v - 4f64.ln()).abs() < 1e-6, "{v}");
    }

    #[test]
    fn info_nce_rejects_empty_queue_and_non_unit() {
        let mut tape = Tape::new();
        let q = tape.param(Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap());
        let pos = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let empty = Arc::new(Tensor::zeros(&[0, 2]));
        assert!(matches!(
            tape.info_nce(q, pos.clone(), empty, 0.07),
            Err(Error::Contract(_))
        ));
        let bad = Arc::new(Tensor::new(vec![1, 2], vec![0.5, 0.0]).unwrap());
        assert!(matches!(tape.info_nce(q, pos, bad, 0.07), Err(Error::Contract(_))));
    }

    #[test]
    fn mse_rejects_length_mismatch() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 0.0]));
        assert!(tape.mse(x, Tensor::from_vec(vec![0.0])).is_err());
        let l = tape.mse(x, Tensor::from_vec(vec![0.0, 1.0])).unwrap();
        assert_eq!(tape.value(l).item().unwrap(), 1.0);
    }
}

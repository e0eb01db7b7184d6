//! Dense row-major `f32` tensors and the raw kernels the tape is built on.
//!
//! Tensors are immutable once built: every operation returns a fresh value.
//! Reductions accumulate in `f64`.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Side of every convolution kernel.
pub const KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(
                "tensor",
                format!("shape {:?} holds {} values, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f32>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim(
                "elementwise",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn dims4(&self, op: &'static str) -> Result<[usize; 4]> {
        match self.shape.as_slice() {
            &[n, c, h, w] => Ok([n, c, h, w]),
            other => Err(Error::dim(op, format!("expected rank 4, got {:?}", other))),
        }
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<[usize; 2]> {
        match self.shape.as_slice() {
            &[r, c] => Ok([r, c]),
            other => Err(Error::dim(op, format!("expected rank 2, got {:?}", other))),
        }
    }
}

/// Output side of a valid (unpadded) 3x3 convolution.
pub fn conv_out_side(side: usize, stride: usize) -> Option<usize> {
    if side < KERNEL || stride == 0 {
        None
    } else {
        Some((side - KERNEL) / stride + 1)
    }
}

fn check_conv(input: &Tensor, kernel: &Tensor, stride: usize) -> Result<([usize; 4], [usize; 4], usize, usize)> {
    let [n, c, h, w] = input.dims4("conv2d")?;
    let [k, kc, kh, kw] = kernel.dims4("conv2d")?;
    if stride != 1 && stride != 2 {
        return Err(Error::dim("conv2d", format!("stride {stride} not in {{1, 2}}")));
    }
    if kc != c {
        return Err(Error::dim(
            "conv2d",
            format!("axis 1: input has {c} channels, kernel expects {kc}"),
        ));
    }
    if kh != KERNEL || kw != KERNEL {
        return Err(Error::dim(
            "conv2d",
            format!("axes 2,3: kernel is {kh}x{kw}, only 3x3 supported"),
        ));
    }
    if h < KERNEL || w < KERNEL {
        return Err(Error::dim(
            "conv2d",
            format!("axes 2,3: input {h}x{w} smaller than the 3x3 window"),
        ));
    }
    let oh = (h - KERNEL) / stride + 1;
    let ow = (w - KERNEL) / stride + 1;
    Ok(([n, c, h, w], [k, kc, kh, kw], oh, ow))
}

/// Valid cross-correlation of `input[N,C,H,W]` with `kernel[K,C,3,3]`.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize) -> Result<Tensor> {
    let ([n, c, h, w], [k, ..], oh, ow) = check_conv(input, kernel, stride)?;
    let in_plane = h * w;
    let out_plane = oh * ow;
    let kdata = &kernel.data;
    let mut out = vec![0f32; n * k * out_plane];
    out.par_chunks_mut(k * out_plane)
        .enumerate()
        .for_each(|(b, out_b)| {
            let in_b = &input.data[b * c * in_plane..(b + 1) * c * in_plane];
            for oc in 0..k {
                let dst = &mut out_b[oc * out_plane..(oc + 1) * out_plane];
                for ic in 0..c {
                    let src = &in_b[ic * in_plane..(ic + 1) * in_plane];
                    let kbase = (oc * c + ic) * 9;
                    for ky in 0..KERNEL {
                        for kx in 0..KERNEL {
                            let wv = kdata[kbase + ky * KERNEL + kx];
                            for oy in 0..oh {
                                let row = &src[(oy * stride + ky) * w + kx..];
                                let drow = &mut dst[oy * ow..(oy + 1) * ow];
                                if stride == 1 {
                                    for (d, s) in drow.iter_mut().zip(row) {
                                        *d += wv * s;
                                    }
                                } else {
                                    for (ox, d) in drow.iter_mut().enumerate() {
                                        *d += wv * row[ox * stride];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    Tensor::new(vec![n, k, oh, ow], out)
}

/// Gradients of `conv2d` w.r.t. its input and kernel given the output adjoint.
/// The input gradient is skipped when `need_input` is false.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    grad_out: &Tensor,
    need_input: bool,
) -> Result<(Option<Tensor>, Tensor)> {
    let ([n, c, h, w], [k, ..], oh, ow) = check_conv(input, kernel, stride)?;
    if grad_out.shape() != [n, k, oh, ow] {
        return Err(Error::dim(
            "conv2d_backward",
            format!("adjoint shape {:?} vs output {:?}", grad_out.shape(), [n, k, oh, ow]),
        ));
    }
    let in_plane = h * w;
    let out_plane = oh * ow;
    let kdata = &kernel.data;
    let klen = kernel.numel();

    let per_sample: Vec<(Vec<f32>, Vec<f32>)> = (0..n)
        .into_par_iter()
        .map(|b| {
            let in_b = &input.data[b * c * in_plane..(b + 1) * c * in_plane];
            let go_b = &grad_out.data[b * k * out_plane..(b + 1) * k * out_plane];
            let mut gin = vec![0f32; if need_input { c * in_plane } else { 0 }];
            let mut gk = vec![0f32; klen];
            for oc in 0..k {
                let go = &go_b[oc * out_plane..(oc + 1) * out_plane];
                for ic in 0..c {
                    let src = &in_b[ic * in_plane..(ic + 1) * in_plane];
                    let kbase = (oc * c + ic) * 9;
                    for ky in 0..KERNEL {
                        for kx in 0..KERNEL {
                            let wv = kdata[kbase + ky * KERNEL + kx];
                            let mut acc = 0f32;
                            for oy in 0..oh {
                                let off = (oy * stride + ky) * w + kx;
                                let grow = &go[oy * ow..(oy + 1) * ow];
                                for (ox, &g) in grow.iter().enumerate() {
                                    acc += src[off + ox * stride] * g;
                                }
                                if need_input {
                                    let gsrc = &mut gin[ic * in_plane..(ic + 1) * in_plane];
                                    for (ox, &g) in grow.iter().enumerate() {
                                        gsrc[off + ox * stride] += wv * g;
                                    }
                                }
                            }
                            gk[kbase + ky * KERNEL + kx] += acc;
                        }
                    }
                }
            }
            (gin, gk)
        })
        .collect();

    let mut gin = Vec::with_capacity(n * c * in_plane);
    let mut gk = vec![0f32; klen];
    for (gi, gkb) in per_sample {
        gin.extend_from_slice(&gi);
        for (a, b) in gk.iter_mut().zip(&gkb) {
            *a += b;
        }
    }
    let gin = if need_input {
        Some(Tensor::new(input.shape.clone(), gin)?)
    } else {
        None
    };
    Ok((gin, Tensor::new(kernel.shape.clone(), gk)?))
}

/// `a[M,K] x b[K,N]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [m, ka] = a.dims2("matmul")?;
    let [kb, n] = b.dims2("matmul")?;
    if ka != kb {
        return Err(Error::dim(
            "matmul",
            format!("axis 1 of lhs ({ka}) vs axis 0 of rhs ({kb})"),
        ));
    }
    let mut out = vec![0f32; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..ka {
            let av = a.data[i * ka + p];
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Transpose of a rank-2 tensor.
pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let [r, c] = a.dims2("transpose")?;
    let mut out = vec![0f32; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a.data[i * c + j];
        }
    }
    Tensor::new(vec![c, r], out)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Mean over all elements, accumulated in f64.
pub fn mean(x: &Tensor) -> Result<f32> {
    if x.numel() == 0 {
        return Err(Error::EmptyInput("mean of empty tensor"));
    }
    Ok((x.sum_f64() / x.numel() as f64) as f32)
}

/// L2 normalization along the last axis (each row of a matrix, or a whole vector).
pub fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let d = *x.shape.last().ok_or(Error::ZeroNorm)?;
    if d == 0 {
        return Err(Error::ZeroNorm);
    }
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data.chunks(d) {
        let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        out.extend(row.iter().map(|&v| (v as f64 / norm) as f32));
    }
    Tensor::new(x.shape.clone(), out)
}

/// Concatenate tensors along axis 0; all trailing axes must agree.
pub fn stack_rows(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or(Error::EmptyInput("stack of zero tensors"))?;
    let tail = &first.shape[1..];
    let mut rows = 0;
    let mut data = Vec::new();
    for p in parts {
        if p.rank() == 0 || &p.shape[1..] != tail {
            return Err(Error::dim(
                "stack_rows",
                format!("{:?} vs {:?}", p.shape, first.shape),
            ));
        }
        rows += p.shape[0];
        data.extend_from_slice(&p.data);
    }
    let mut shape = vec![rows];
    shape.extend_from_slice(tail);
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn conv_of_ones_is_nine() {
        let x = Tensor::full(&[1, 1, 3, 3], 1.0);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn identity_kernel_crops_the_border() {
        let x = Tensor::new(vec![1, 1, 4, 5], (0..20).map(|v| v as f32).collect()).unwrap();
        let mut kd = vec![0.0; 9];
        kd[4] = 1.0;
        let k = Tensor::new(vec![1, 1, 3, 3], kd).unwrap();
        let y = conv2d(&x, &k, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 3]);
        assert_eq!(y.data(), &[6.0, 7.0, 8.0, 11.0, 12.0, 13.0]);
    }

    #[test]
    fn conv_output_size_with_stride_two() {
        let x = Tensor::zeros(&[2, 3, 9, 8]);
        let k = Tensor::zeros(&[4, 3, 3, 3]);
        let y = conv2d(&x, &k, 2).unwrap();
        assert_eq!(y.shape(), &[2, 4, 4, 3]);
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let x = Tensor::zeros(&[1, 2, 8, 8]);
        let k = Tensor::zeros(&[1, 3, 3, 3]);
        match conv2d(&x, &k, 1) {
            Err(Error::Dimension { detail, .. }) => assert!(detail.contains("axis 1")),
            other => panic!("unexpected {other:?}"),
        }
        let k = Tensor::zeros(&[1, 2, 3, 3]);
        assert!(conv2d(&Tensor::zeros(&[1, 2, 2, 8]), &k, 1).is_err());
        assert!(conv2d(&x, &k, 3).is_err());
    }

    #[test]
    fn elementary_ops() {
        assert_eq!(relu(&Tensor::from_vec(vec![-1.0, 2.0])).data(), &[0.0, 2.0]);
        let n = l2_normalize(&Tensor::from_vec(vec![3.0, 4.0])).unwrap();
        assert_eq!(n.data(), &[0.6, 0.8]);
        assert_eq!(mean(&Tensor::full(&[2, 2], 1.0)).unwrap(), 1.0);
        assert!(matches!(
            l2_normalize(&Tensor::from_vec(vec![0.0, 0.0])),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn matmul_small() {
        let a = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::new(vec![3, 1], vec![1., 0., -1.]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[-2.0, -2.0]);
        assert!(matmul(&a, &a).is_err());
        assert_eq!(transpose(&a).unwrap().data(), &[1., 4., 2., 5., 3., 6.]);
    }
}

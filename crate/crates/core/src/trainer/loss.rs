//! Scalar reference forms of the training losses, in `f64`.
//!
//! The trainer computes the same quantities on the autograd tape; these
//! versions serve single-sample evaluation and cross-checks.

use crate::autograd::UNIT_TOLERANCE;
use crate::error::{Error, Result};

fn check_unit(what: &str, v: &[f32]) -> Result<()> {
    let n = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::Contract(format!("{what} has norm {n}, expected 1")));
    }
    Ok(())
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// `-log(exp(q.k+/tau) / (exp(q.k+/tau) + sum_j exp(q.k-_j/tau)))`
pub fn info_nce(q: &[f32], k_pos: &[f32], negatives: &[Vec<f32>], tau: f64) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::Contract("negative queue is empty".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Contract(format!("temperature must be positive, got {tau}")));
    }
    if k_pos.len() != q.len() || negatives.iter().any(|n| n.len() != q.len()) {
        return Err(Error::dim("info_nce", "embedding widths differ"));
    }
    check_unit("query", q)?;
    check_unit("positive key", k_pos)?;
    for n in negatives {
        check_unit("negative key", n)?;
    }
    let pos = dot(q, k_pos) / tau;
    let logits: Vec<f64> = std::iter::once(pos)
        .chain(negatives.iter().map(|n| dot(q, n) / tau))
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(lse - pos)
}

/// `mean((fae - ge)^2)`
pub fn cal_loss(fae: &[f64], ge: &[f64]) -> Result<f64> {
    if fae.len() != ge.len() {
        return Err(Error::Contract(format!(
            "{} activation energies vs {} priors",
            fae.len(),
            ge.len()
        )));
    }
    if fae.is_empty() {
        return Err(Error::EmptyInput("complexity-aware loss batch"));
    }
    Ok(fae.iter().zip(ge).map(|(f, g)| (f - g).powi(2)).sum::<f64>() / fae.len() as f64)
}

/// `d cal / d fae = 2 (fae - ge) / N`
pub fn cal_grad(fae: &[f64], ge: &[f64]) -> Result<Vec<f64>> {
    cal_loss(fae, ge)?;
    let n = fae.len() as f64;
    Ok(fae.iter().zip(ge).map(|(f, g)| 2.0 * (f - g) / n).collect())
}

pub fn total_loss(l_in: f64, l_cal: f64, lambda: f64) -> f64 {
    l_in + lambda * l_cal
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;
    use crate::tensor::Tensor;
    use std::sync::Arc;

    fn e(dim: usize, i: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn uniform_logits_give_log_k_plus_one() {
        let q = e(4, 0);
        let negs = vec![e(4, 1), e(4, 2), e(4, 3)];
        // q.k+ = q.k- = 0
        let l = info_nce(&q, &e(4, 1), &negs, 0.07).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn aligned_positive_orthogonal_negative() {
        let l = info_nce(&e(2, 0), &e(2, 0), &[e(2, 1)], 0.07).unwrap();
        let expect = (1.0 + (-1.0f64 / 0.07).exp()).ln();
        assert!((l - expect).abs() < 1e-15);
        assert!((l - 6.2e-7).abs() < 1e-8);
    }

    #[test]
    fn contract_errors() {
        assert!(matches!(info_nce(&e(2, 0), &e(2, 0), &[], 0.07), Err(Error::Contract(_))));
        assert!(matches!(info_nce(&[0.5, 0.5], &e(2, 0), &[e(2, 1)], 0.07), Err(Error::Contract(_))));
        assert!(matches!(cal_loss(&[1.0], &[1.0, 2.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn cal_examples() {
        assert_eq!(cal_loss(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(cal_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cal_grad(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![1.0, -1.0]);
        let (f, g) = ([0.2, 0.9, 0.4], [0.5, 0.1, 0.4]);
        let grad = cal_grad(&f, &g).unwrap();
        for i in 0..3 {
            let h = 1e-6;
            let mut up = f;
            let mut dn = f;
            up[i] += h;
            dn[i] -= h;
            let fd = (cal_loss(&up, &g).unwrap() - cal_loss(&dn, &g).unwrap()) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn total_examples() {
        assert_eq!(total_loss(2.0, 3.0, 1.0), 5.0);
        assert_eq!(total_loss(2.0, 3.0, 0.0), 2.0);
    }

    #[test]
    fn tape_agrees_with_reference() {
        let q = vec![0.6f32, 0.8, 0.0];
        let kp = vec![0.0f32, 0.6, 0.8];
        let negs = vec![vec![1.0f32, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        let reference = info_nce(&q, &kp, &negs, 0.1).unwrap();
        let mut tape = Tape::new();
        let qv = tape.param(Tensor::new(vec![1, 3], q).unwrap());
        let neg = Tensor::new(vec![2, 3], negs.concat()).unwrap();
        let l = tape
            .info_nce(qv, Tensor::new(vec![1, 3], kp).unwrap(), Arc::new(neg), 0.1)
            .unwrap();
        assert!((tape.value(l).item().unwrap() as f64 - reference).abs() < 1e-6);
    }
}

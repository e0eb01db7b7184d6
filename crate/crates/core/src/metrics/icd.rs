//! Corpus-level complexity distribution (histogram, mean, spread).

use crate::error::{Error, Result};
use crate::io::{fmt6, CsvTable};

use super::ComplexityScore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcdStats {
    pub bins: Vec<HistogramBin>,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub stddev: f64,
}

impl IcdStats {
    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(&["bin_low", "bin_high", "mass"]);
        for b in &self.bins {
            t.row(&[fmt6(b.low), fmt6(b.high), fmt6(b.mass)]);
        }
        t.into_string()
    }
}

/// Bin of `value` among `bins` equal-width bins over `[0, 1]`; 1.0 falls in
/// the last bin.
pub fn bin_index(value: f64, bins: usize) -> usize {
    ((value.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1)
}

pub fn icd_stats(scores: &[ComplexityScore], bins: usize) -> Result<IcdStats> {
    let values: Vec<f64> = scores.iter().map(|s| s.value).collect();
    icd_stats_values(&values, bins)
}

pub fn icd_stats_values(values: &[f64], bins: usize) -> Result<IcdStats> {
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    if bins == 0 {
        return Err(Error::Parameter("bin count must be positive".into()));
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[bin_index(v, bins)] += 1;
    }
    let n = values.len() as f64;
    let bins = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| HistogramBin {
            low: i as f64 / bins as f64,
            high: (i + 1) as f64 / bins as f64,
            mass: c as f64 / n,
        })
        .collect();
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(IcdStats {
        bins,
        mean,
        stddev: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Metric;
    use proptest::prelude::*;
    use rand::Rng;

    fn scores(v: &[f64]) -> Vec<ComplexityScore> {
        v.iter().map(|&x| ComplexityScore::new(x, Metric::Ge)).collect()
    }

    #[test]
    fn constant_scores_fill_one_bin() {
        let s = icd_stats(&scores(&[0.5; 7]), 10).unwrap();
        for (i, b) in s.bins.iter().enumerate() {
            assert_eq!(b.mass, if i == 5 { 1.0 } else { 0.0 });
        }
        assert_eq!(s.stddev, 0.0);
    }

    #[test]
    fn extremes_fill_first_and_last() {
        let s = icd_stats(&scores(&[0.05, 0.95]), 10).unwrap();
        assert_eq!(s.bins[0].mass, 0.5);
        assert_eq!(s.bins[9].mass, 0.5);
        assert_eq!(s.bins[5].mass, 0.0);
    }

    #[test]
    fn uniform_draws_are_flat() {
        let mut rng = crate::seed::rng(42);
        let v: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let s = icd_stats_values(&v, 10).unwrap();
        for b in &s.bins {
            assert!((b.mass - 0.1).abs() <= 0.02, "{b:?}");
        }
    }

    #[test]
    fn needs_two_scores() {
        assert!(matches!(
            icd_stats(&scores(&[0.3]), 10),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn csv_layout() {
        let s = icd_stats_values(&[0.0, 1.0], 2).unwrap();
        assert_eq!(
            s.to_csv(),
            "bin_low,bin_high,mass\n0.000000,0.500000,0.500000\n0.500000,1.000000,0.500000\n"
        );
    }

    proptest! {
        #[test]
        fn masses_sum_to_one(v in proptest::collection::vec(0.0f64..=1.0, 2..200), bins in 1usize..40) {
            let s = icd_stats_values(&v, bins).unwrap();
            let total: f64 = s.bins.iter().map(|b| b.mass).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}

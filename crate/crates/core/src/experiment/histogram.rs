use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bin rule actually applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinRule {
    FreedmanDiaconis,
    /// Fallback used when the interquartile range is zero.
    Sturges,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub bin_width: f64,
    pub bin_count: usize,
    pub rule: BinRule,
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("samples must be finite".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Freedman–Diaconis width `2·IQR·n^{-1/3}` and `ceil(range/width)` bins.
/// Zero IQR falls back to Sturges' `ceil(log₂ n) + 1` bins over the range
/// (one unit-width bin when all samples coincide).
pub fn freedman_diaconis_bins(samples: &[f64]) -> Result<Binning> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::InvalidParameter(format!("need at least 4 samples, got {n}")));
    }
    let s = sorted_finite(samples)?;
    let range = s[n - 1] - s[0];
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    if iqr > 0.0 {
        let bin_width = 2.0 * iqr * (n as f64).cbrt().recip();
        let bin_count = ((range / bin_width).ceil() as usize).max(1);
        return Ok(Binning { bin_width, bin_count, rule: BinRule::FreedmanDiaconis });
    }
    let sturges = (n as f64).log2().ceil() as usize + 1;
    if range > 0.0 {
        Ok(Binning { bin_width: range / sturges as f64, bin_count: sturges, rule: BinRule::Sturges })
    } else {
        Ok(Binning { bin_width: 1.0, bin_count: 1, rule: BinRule::Sturges })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
    /// `count / (n · width)`, so the heights integrate to one.
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub binning: Binning,
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    /// Bins start at the sample minimum; the maximum falls in the last bin.
    pub fn new(samples: &[f64]) -> Result<Self> {
        let binning = freedman_diaconis_bins(samples)?;
        let s = sorted_finite(samples)?;
        let (lo, w, k) = match binning.rule {
            BinRule::Sturges if s[0] == s[s.len() - 1] => (s[0] - 0.5, 1.0, 1),
            _ => (s[0], binning.bin_width, binning.bin_count),
        };
        let mut counts = vec![0usize; k];
        for v in &s {
            let i = (((v - lo) / w).floor() as usize).min(k - 1);
            counts[i] += 1;
        }
        let n = s.len() as f64;
        let bins = counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| HistogramBin {
                left: lo + i as f64 * w,
                right: lo + (i + 1) as f64 * w,
                count,
                height: count as f64 / (n * w),
            })
            .collect();
        Ok(Self { binning, bins })
    }

    /// CSV with header `bin_left,bin_right,count,normalized_height`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "bin_left,bin_right,count,normalized_height")?;
        for b in &self.bins {
            writeln!(w, "{},{},{},{}", b.left, b.right, b.count, b.height)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn eight_points() {
        let s: Vec<f64> = (1..=8).map(f64::from).collect();
        let sorted = s.clone();
        assert_abs_diff_eq!(quantile_sorted(&sorted, 0.25), 2.75, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile_sorted(&sorted, 0.75), 6.25, epsilon = 1e-12);
        let b = freedman_diaconis_bins(&s).unwrap();
        assert_abs_diff_eq!(b.bin_width, 3.5, epsilon = 1e-12);
        assert_eq!(b.bin_count, 2);
        assert_eq!(b.rule, BinRule::FreedmanDiaconis);
    }

    #[test]
    fn degenerate_spread_falls_back() {
        let b = freedman_diaconis_bins(&[2.0; 10]).unwrap();
        assert_eq!(b.rule, BinRule::Sturges);
        let h = Histogram::new(&[2.0; 10]).unwrap();
        assert_eq!(h.bins.len(), 1);
        assert_eq!(h.bins[0].count, 10);
        // Zero IQR but a nonzero range.
        let b = freedman_diaconis_bins(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0]).unwrap();
        assert_eq!(b.rule, BinRule::Sturges);
        assert_eq!(b.bin_count, 4);
        assert!(freedman_diaconis_bins(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn normal_draws_match_scripted_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let s: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        // Oracle: nearest-rank quantiles on a separately sorted copy, then
        // the same width formula; the two quantile conventions differ by at
        // most one order statistic.
        let mut c = s.clone();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| c[((p * 1000.0).ceil() as usize).saturating_sub(1)];
        let width = 2.0 * (q(0.75) - q(0.25)) / 10.0;
        let oracle = ((c[999] - c[0]) / width).ceil() as i64;
        let got = freedman_diaconis_bins(&s).unwrap().bin_count as i64;
        assert!((got - oracle).abs() <= 2, "{got} vs {oracle}");
    }

    proptest! {
        #[test]
        fn histogram_accounts_for_every_sample(s in proptest::collection::vec(-100.0..100.0f64, 4..300)) {
            let h = Histogram::new(&s).unwrap();
            prop_assert_eq!(h.bins.iter().map(|b| b.count).sum::<usize>(), s.len());
            let area: f64 = h.bins.iter().map(|b| b.height * (b.right - b.left)).sum();
            prop_assert!((area - 1.0).abs() < 1e-9);
        }
    }
}

//! Empirical-distribution comparisons: total variation and chi-square
//! homogeneity with tail pooling.

use crate::numeric::chi_square_sf;
use std::collections::BTreeMap;

/// Total variation distance between the empirical PMFs of two integer samples
/// on their pooled support.
pub fn tv_distance(a: &[i64], b: &[i64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut pm: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    let wa = 1.0 / a.len() as f64;
    let wb = 1.0 / b.len() as f64;
    for &x in a {
        pm.entry(x).or_insert((0.0, 0.0)).0 += wa;
    }
    for &x in b {
        pm.entry(x).or_insert((0.0, 0.0)).1 += wb;
    }
    // accumulated 1/n weights can overshoot 1 by a few ulps
    (0.5 * pm.values().map(|&(p, q)| (p - q).abs()).sum::<f64>()).min(1.0)
}

#[derive(Clone, Copy, Debug)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
    /// True when pooling collapsed everything into one cell; `p_value` is 1
    /// by convention in that case.
    pub degenerate: bool,
}

/// Two-sample chi-square homogeneity test. Adjacent support cells are pooled
/// left-to-right until each pooled cell has expected count ≥ 5 in both rows.
pub fn chi_square_homogeneity(a: &[i64], b: &[i64]) -> ChiSquareResult {
    assert!(!a.is_empty() && !b.is_empty());
    let mut counts: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for &x in a {
        counts.entry(x).or_insert((0.0, 0.0)).0 += 1.0;
    }
    for &x in b {
        counts.entry(x).or_insert((0.0, 0.0)).1 += 1.0;
    }
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let n = na + nb;
    // a pooled cell with total count c has expected counts c·na/n and c·nb/n;
    // require both ≥ 5
    let min_total = 5.0 * n / na.min(nb);

    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for &(ca, cb) in counts.values() {
        acc.0 += ca;
        acc.1 += cb;
        if acc.0 + acc.1 >= min_total {
            cells.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 + acc.1 > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => cells.push(acc),
        }
    }
    if cells.len() < 2 {
        return ChiSquareResult {
            statistic: 0.0,
            df: 0.0,
            p_value: 1.0,
            degenerate: true,
        };
    }
    let mut stat = 0.0;
    for &(ca, cb) in &cells {
        let c = ca + cb;
        let ea = c * na / n;
        let eb = c * nb / n;
        stat += (ca - ea) * (ca - ea) / ea + (cb - eb) * (cb - eb) / eb;
    }
    let df = (cells.len() - 1) as f64;
    ChiSquareResult {
        statistic: stat,
        df,
        p_value: chi_square_sf(stat, df),
        degenerate: false,
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    assert!(!xs.is_empty());
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Empirical complementary CDF P{X ≥ n} of an integer sample.
pub fn empirical_ccdf(sample: &[i64], n: i64) -> f64 {
    sample.iter().filter(|&&x| x >= n).count() as f64 / sample.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_extremes() {
        assert_eq!(tv_distance(&[1, 2, 3], &[1, 2, 3]), 0.0);
        assert_eq!(tv_distance(&[1; 100], &[2; 100]), 1.0);
    }

    #[test]
    fn chi_square_identical_samples_is_zero() {
        let a: Vec<i64> = (0..1000).map(|k| k % 4).collect();
        let r = chi_square_homogeneity(&a, &a);
        assert!(!r.degenerate);
        assert!(r.statistic.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn chi_square_detects_disjoint_supports() {
        let a = vec![0i64; 200];
        let b = vec![1i64; 200];
        let r = chi_square_homogeneity(&a, &b);
        assert!(r.p_value < 1e-12);
    }

    #[test]
    fn degenerate_pooling_flagged() {
        let r = chi_square_homogeneity(&[5, 5, 5], &[5, 5, 5]);
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
    }
}

//! Small statistical helpers for the verification checks: binomial bands
//! around known probabilities, the Dvoretzky-Kiefer-Wolfowitz envelope for
//! empirical survival curves, a two-sample Kolmogorov-Smirnov distance, and
//! a chi-square independence statistic on contingency tables.

use ndarray::Array2;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// `z · sqrt(p(1−p)/n)` around a known success probability.
pub fn binomial_half_width(p: f64, n: usize, z: f64) -> f64 {
    z * (p * (1.0 - p) / n as f64).sqrt()
}

/// Half-width of the uniform DKW confidence band at level `alpha` for an
/// empirical CDF over `n` samples.
pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Rejection threshold for the two-sample KS statistic at level `alpha`.
pub fn ks_two_sample_threshold(n: usize, m: usize, alpha: f64) -> f64 {
    let c = ((2.0 / alpha).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Pearson chi-square independence statistic over a count table, pooling
/// nothing but skipping empty rows/columns.  Returns `(statistic, df)`;
/// `df = 0` means the table was degenerate.
pub fn chi_square_independence(table: &Array2<f64>) -> (f64, usize) {
    let row_sums: Vec<f64> = (0..table.nrows()).map(|r| table.row(r).sum()).collect();
    let col_sums: Vec<f64> = (0..table.ncols()).map(|c| table.column(c).sum()).collect();
    let total: f64 = row_sums.iter().sum();
    if total == 0.0 {
        return (0.0, 0);
    }
    let live_rows = row_sums.iter().filter(|&&s| s > 0.0).count();
    let live_cols = col_sums.iter().filter(|&&s| s > 0.0).count();
    if live_rows < 2 || live_cols < 2 {
        return (0.0, 0);
    }
    let mut stat = 0.0;
    for r in 0..table.nrows() {
        if row_sums[r] == 0.0 {
            continue;
        }
        for c in 0..table.ncols() {
            if col_sums[c] == 0.0 {
                continue;
            }
            let expected = row_sums[r] * col_sums[c] / total;
            let diff = table[(r, c)] - expected;
            stat += diff * diff / expected;
        }
    }
    (stat, (live_rows - 1) * (live_cols - 1))
}

/// Upper quantile of the chi-square distribution with `df` degrees.
pub fn chi_square_quantile(df: usize, prob: f64) -> f64 {
    ChiSquared::new(df as f64)
        .expect("positive df")
        .inverse_cdf(prob)
}

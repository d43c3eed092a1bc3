//! Sample statistics shared by the predictive checks and diagnostics.

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Type-1 quantile (inverse empirical CDF) of sorted data: no interpolation,
/// so the result is always one of the data points.
pub fn quantile_inverse_cdf<T: Copy>(sorted: &[T], p: f64) -> T {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    // levels like (1 - 0.95) / 2 carry rounding error above the exact rank
    let k = (n as f64 * p - 1e-9).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with `n - 1` denominator.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample covariance matrix (`n - 1` denominator) of the columns of `rows`.
pub fn covariance_matrix(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let k = rows.first().map(Vec::len).unwrap_or(0);
    let means: Vec<f64> = (0..k)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; k]; k];
    for r in rows {
        for i in 0..k {
            let di = r[i] - means[i];
            for j in i..k {
                cov[i][j] += di * (r[j] - means[j]);
            }
        }
    }
    let denom = n as f64 - 1.0;
    for i in 0..k {
        for j in i..k {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_linear(&xs, 0.5), 2.5);
        assert_eq!(quantile_inverse_cdf(&xs, 0.5), 2.0);
        assert_eq!(quantile_inverse_cdf(&xs, 0.51), 3.0);
        assert_eq!(quantile_inverse_cdf(&xs, 0.0), 1.0);
        assert_eq!(quantile_inverse_cdf(&xs, 1.0), 4.0);
    }

    #[test]
    fn covariance_of_linear_columns() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let c = covariance_matrix(&rows);
        assert!((c[0][0] - 2.5).abs() < 1e-12);
        assert!((c[0][1] - 5.0).abs() < 1e-12);
        assert!((c[1][1] - 10.0).abs() < 1e-12);
        assert!((variance(&[0.0, 1.0, 2.0, 3.0, 4.0]) - 2.5).abs() < 1e-12);
    }
}

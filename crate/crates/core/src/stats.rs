//! Summary statistics for hedging errors.

use serde::{Deserialize, Serialize};

use crate::error::{ArhmmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HedgingErrorStats {
    pub mean: f64,
    pub median: f64,
    pub volatility: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub min: f64,
    pub max: f64,
    pub var01: f64,
    pub var99: f64,
    pub rmse: f64,
    /// Market price minus model price; zero unless set by a backtest.
    pub bias: f64,
    pub count: usize,
}

/// Empirical `p`-quantile of sorted data with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Moments use the population convention, so `rmse^2 = mean^2 + volatility^2`.
/// Skewness and kurtosis are reported as 0 for constant samples.
pub fn hedging_error_stats(errors: &[f64]) -> Result<HedgingErrorStats> {
    if errors.is_empty() {
        return Err(ArhmmError::InvalidInput("no hedging errors".into()));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(ArhmmError::InvalidInput(
            "hedging errors must be finite".into(),
        ));
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for e in errors {
        let d = e - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    Ok(HedgingErrorStats {
        mean,
        median: quantile_sorted(&sorted, 0.5),
        volatility: m2.sqrt(),
        skewness,
        kurtosis,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        var01: quantile_sorted(&sorted, 0.01),
        var99: quantile_sorted(&sorted, 0.99),
        rmse,
        bias: 0.0,
        count: errors.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn zeros() {
        let s = hedging_error_stats(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            s,
            HedgingErrorStats {
                count: 3,
                ..Default::default()
            }
        );
    }

    #[test]
    fn plus_minus_one() {
        let s = hedging_error_stats(&[-1.0, 1.0]).unwrap();
        assert_eq!((s.rmse, s.mean, s.median), (1.0, 0.0, 0.0));
    }

    #[test]
    fn normal_shape() {
        let mut rng = crate::rng::seeded(5);
        let x: Vec<f64> = (0..1_000_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let s = hedging_error_stats(&x).unwrap();
        assert!(s.skewness.abs() < 0.05 && (s.kurtosis - 3.0).abs() < 0.05);
        assert!(s.var01 <= s.median && s.median <= s.var99);
        let ms = x.iter().map(|e| e * e).sum::<f64>() / x.len() as f64;
        assert!((s.rmse * s.rmse - ms).abs() < 1e-12);
    }

    #[test]
    fn interpolated_quantiles() {
        let sorted = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&sorted, 0.5), 3.0);
        assert!((quantile_sorted(&sorted, 0.01) - 1.04).abs() < 1e-12);
        assert!((quantile_sorted(&sorted, 0.99) - 4.96).abs() < 1e-12);
    }

    #[test]
    fn empty_rejected() {
        assert!(hedging_error_stats(&[]).is_err());
    }
}

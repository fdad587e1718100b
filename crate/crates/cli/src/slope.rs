//! Least-squares line fitting on log-log axes, for reading growth rates
//! out of error and regret curves.

use crate::HarnessError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fits `log y = slope * log x + intercept` by least squares.
///
/// All coordinates must be strictly positive and at least two points are
/// required. A constant `y` gives slope zero with `r2 = 1`.
pub fn slope_fit(points: &[(f64, f64)]) -> Result<SlopeFit, HarnessError> {
    if points.len() < 2 {
        return Err(HarnessError::NotEnoughPoints(points.len()));
    }
    for &(x, y) in points {
        if !(x > 0.0 && y > 0.0) {
            return Err(HarnessError::NonPositivePoint { x, y });
        }
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in &logs {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(x, y) in &logs {
        let fit = slope * x + intercept;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let points: Vec<(f64, f64)> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powf(-0.5)))
            .collect();
        let fit = slope_fit(&points).unwrap();
        assert!((fit.slope - (-0.5)).abs() <= 1e-12);
        assert!((fit.intercept - 3.0f64.ln()).abs() <= 1e-12);
        assert!((fit.r2 - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn constant_series_has_zero_slope() {
        let points = vec![(1.0, 4.2), (10.0, 4.2), (100.0, 4.2)];
        let fit = slope_fit(&points).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r2, 1.0);
    }

    #[test]
    fn mild_multiplicative_noise_keeps_the_slope_close() {
        // y = x^(2/3) * (1 + eps), |eps| <= 0.05, on seven points.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let points: Vec<(f64, f64)> = (0..7)
            .map(|i| {
                let x = 10.0f64 * 2.0f64.powi(i);
                let eps = rng.random_range(-0.05..0.05);
                (x, x.powf(2.0 / 3.0) * (1.0 + eps))
            })
            .collect();
        let fit = slope_fit(&points).unwrap();
        assert!((fit.slope - 2.0 / 3.0).abs() <= 0.1, "slope {}", fit.slope);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(matches!(
            slope_fit(&[(1.0, 1.0)]),
            Err(HarnessError::NotEnoughPoints(1))
        ));
        assert!(matches!(
            slope_fit(&[(1.0, 1.0), (0.0, 2.0)]),
            Err(HarnessError::NonPositivePoint { .. })
        ));
        assert!(matches!(
            slope_fit(&[(1.0, 1.0), (2.0, -2.0)]),
            Err(HarnessError::NonPositivePoint { .. })
        ));
    }
}

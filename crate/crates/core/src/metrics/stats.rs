use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compensated sum, added in the given order.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Mean and 95% normal-approximation half-width.
pub fn mean_ci(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = kahan_sum(samples.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = kahan_sum(samples.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Standard error of the mean.
pub fn std_error(samples: &[f64]) -> f64 {
    mean_ci(samples).1 / 1.96
}

/// Least-squares line through `(ln T, ln value)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Horizons whose value was not positive.
    pub dropped: Vec<f64>,
}

pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidArgument("horizons must be strictly increasing".into()));
    }
    let mut used = Vec::new();
    let mut dropped = Vec::new();
    for &(t, v) in points {
        if t > 0.0 && v > 0.0 && v.is_finite() {
            used.push((t.ln(), v.ln()));
        } else {
            dropped.push(t);
        }
    }
    if used.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "slope fit needs at least 3 positive points, got {}",
            used.len()
        )));
    }
    let n = used.len() as f64;
    let mx = kahan_sum(used.iter().map(|p| p.0)) / n;
    let my = kahan_sum(used.iter().map(|p| p.1)) / n;
    let sxx = kahan_sum(used.iter().map(|p| (p.0 - mx) * (p.0 - mx)));
    let sxy = kahan_sum(used.iter().map(|p| (p.0 - mx) * (p.1 - my)));
    let syy = kahan_sum(used.iter().map(|p| (p.1 - my) * (p.1 - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = kahan_sum(used.iter().map(|p| {
        let e = p.1 - (intercept + slope * p.0);
        e * e
    }));
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(SlopeFit { points: used, slope, intercept, r2, dropped })
}

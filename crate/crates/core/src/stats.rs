//! Small statistics helpers: least squares, Wilson intervals, order statistics.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{input, Result};

/// Ordinary least-squares line `y = slope x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Standard error of the slope (0 with two points).
    pub slope_se: f64,
    pub points: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return input("x and y must have equal length");
    }
    let n = x.len();
    if n < 2 {
        return input("a line fit needs at least two points");
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx == 0.0 {
        return input("x values must not all coincide");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_se = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
        slope_se,
        points: n,
    })
}

/// Fit of `log y` against `log x`, skipping pairs with a nonpositive entry.
/// Returns the fit and the number of skipped pairs.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Result<(LinearFit, usize)> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut skipped = 0;
    for (&a, &b) in x.iter().zip(y) {
        if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            lx.push(a.ln());
            ly.push(b.ln());
        } else {
            skipped += 1;
        }
    }
    Ok((linear_fit(&lx, &ly)?, skipped))
}

/// Wilson score interval for `k` successes in `n` trials at normal quantile `z`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (`n - 1` denominator).
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// Half-width of the normal-approximation 95% interval for the mean.
pub fn ci95_half_width(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    1.96 * std_dev(v) / (v.len() as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    quantile(v, 0.5)
}

/// Linear-interpolated empirical quantile.
pub fn quantile(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    s[lo] * (1.0 - w) + s[hi] * w
}

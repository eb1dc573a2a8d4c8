//! Log-log rate fits over N.

use std::collections::BTreeMap;

use chaoslab_core::stats::log_log_fit;
use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Distinct x values used.
    pub points: usize,
    /// Pairs dropped for a nonpositive or non-finite entry.
    pub filtered: usize,
}

/// Least squares of `log y` on `log x`. Repeated x values are averaged first.
pub fn fit_rate(x: &[f64], y: &[f64]) -> Result<RateFit> {
    if x.len() != y.len() {
        return Err(HarnessError::Format("x and y columns differ in length".into()));
    }
    let usable = |a: f64, b: f64| a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite();
    let filtered = x.iter().zip(y).filter(|(a, b)| !usable(**a, **b)).count();
    let mut groups: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for (&a, &b) in x.iter().zip(y) {
        if usable(a, b) {
            let e = groups.entry(a.to_bits()).or_insert((0.0, 0));
            e.0 += b;
            e.1 += 1;
        }
    }
    if groups.len() < 3 {
        return Err(HarnessError::Format(format!(
            "a rate fit needs at least 3 distinct positive x values, found {} ({filtered} rows filtered)",
            groups.len()
        )));
    }
    let (gx, gy): (Vec<f64>, Vec<f64>) = groups.iter().map(|(k, (s, c))| (f64::from_bits(*k), s / *c as f64)).unzip();
    let (fit, _) = log_log_fit(&gx, &gy)?;
    Ok(RateFit {
        slope: fit.slope,
        slope_se: fit.slope_se,
        intercept: fit.intercept,
        r2: fit.r2,
        points: fit.points,
        filtered,
    })
}

/// Fits two named columns of a CSV file.
pub fn fit_csv(bytes: &[u8], x_col: &str, y_col: &str) -> Result<RateFit> {
    let mut r = csv::Reader::from_reader(bytes);
    let headers = r.headers().map_err(|e| HarnessError::Format(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::Format(format!("column {name:?} not found")))
    };
    let (ix, iy) = (col(x_col)?, col(y_col)?);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for row in r.records() {
        let row = row.map_err(|e| HarnessError::Format(e.to_string()))?;
        let parse = |i: usize| {
            row.get(i)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::Format(format!("non-numeric entry {:?}", row.get(i).unwrap_or(""))))
        };
        x.push(parse(ix)?);
        y.push(parse(iy)?);
    }
    fit_rate(&x, &y)
}

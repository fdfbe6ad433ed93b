use crate::error::{Error, Result};

use super::stats::weighted_line;
use super::tau::SurvivalEstimate;

/// Exponential decay rate of a survival curve.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaFit {
    pub lambda: f64,
    pub se: f64,
    /// 95% confidence interval.
    pub ci: (f64, f64),
    /// First and last grid time of the fit window.
    pub window: (f64, f64),
    pub points: usize,
    /// Intercept of log p̂.
    pub intercept: f64,
    /// Weighted residual sum of squares per degree of freedom.
    pub reduced_chi2: f64,
}

/// Weighted least squares on log p̂ over the last half of the grid points
/// with at least 10 surviving replicas, weights 1/s.e.² of log p̂.
///
/// The standard error of log p̂ uses p̃ = (S + ½)/(n + 1) so that it stays
/// positive for exact inputs.
pub fn fit_lambda(s: &SurvivalEstimate) -> Result<LambdaFit> {
    let n = s.n as f64;
    let usable: Vec<usize> = (0..s.grid.len())
        .filter(|&i| s.p_hat[i] > 0.0 && s.p_hat[i] * n >= 10.0 - 1e-9)
        .collect();
    let tail = &usable[usable.len() / 2..];
    if tail.len() < 4 {
        return Err(Error::NonConvergence(format!(
            "degenerate tail: {} usable grid points, need at least 4",
            tail.len()
        )));
    }
    let x: Vec<f64> = tail.iter().map(|&i| s.grid[i]).collect();
    let y: Vec<f64> = tail.iter().map(|&i| s.p_hat[i].ln()).collect();
    let w: Vec<f64> = tail
        .iter()
        .map(|&i| {
            let p = (s.p_hat[i] * n + 0.5) / (n + 1.0);
            n * p / (1.0 - p).max(1e-300)
        })
        .collect();
    let (a, b, se) = weighted_line(&x, &y, &w);
    let chi2: f64 = x
        .iter()
        .zip(&y)
        .zip(&w)
        .map(|((x, y), w)| w * (y - a - b * x).powi(2))
        .sum();
    let dof = (x.len() - 2) as f64;
    Ok(LambdaFit {
        lambda: -b,
        se,
        ci: (-b - 1.96 * se, -b + 1.96 * se),
        window: (x[0], x[x.len() - 1]),
        points: x.len(),
        intercept: a,
        reduced_chi2: chi2 / dof,
    })
}

/// One point of the plateau series e^{λ̂t}p̂(t).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateauPoint {
    pub t: f64,
    pub value: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// e^{λ̂t}p̂(t) with 95% intervals. The standard error combines the
/// binomial error of p̂, taken at p̃ as in [`fit_lambda`] so that it stays
/// positive when no replica has hit, with the propagated error
/// `lambda_se` of λ̂.
pub fn plateau_series(s: &SurvivalEstimate, lambda: f64, lambda_se: f64) -> Vec<PlateauPoint> {
    let n = s.n as f64;
    s.grid
        .iter()
        .zip(&s.p_hat)
        .map(|(&t, &p)| {
            let f = (lambda * t).exp();
            let value = f * p;
            let pt = (p * n + 0.5) / (n + 1.0);
            let se = (pt * (1.0 - pt) / n).sqrt();
            let se = ((f * se).powi(2) + (t * value * lambda_se).powi(2)).sqrt();
            PlateauPoint {
                t,
                value,
                se,
                ci_lo: value - 1.96 * se,
                ci_hi: value + 1.96 * se,
            }
        })
        .collect()
}

/// Flatness of the last half of a plateau series: the largest pairwise
/// difference in units of the combined standard error, and the largest
/// excess over 1 in units of the point's standard error.
pub fn plateau_flatness(series: &[PlateauPoint]) -> (f64, f64) {
    let tail = &series[series.len() / 2..];
    let mut spread = 0.0f64;
    for (i, a) in tail.iter().enumerate() {
        for b in &tail[i + 1..] {
            let se = (a.se * a.se + b.se * b.se).sqrt();
            let d = (a.value - b.value).abs();
            spread = spread.max(if se > 0.0 {
                d / se
            } else if d > 0.0 {
                f64::INFINITY
            } else {
                0.0
            });
        }
    }
    let excess = series
        .iter()
        .map(|p| {
            let d = p.value - 1.0;
            if d <= 0.0 {
                f64::NEG_INFINITY
            } else if p.se > 0.0 {
                d / p.se
            } else {
                f64::INFINITY
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);
    (spread, excess)
}

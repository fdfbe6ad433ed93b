//! Monte Carlo estimate of the density threshold ρ_c(β₁) with a
//! batch-means confidence interval.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{BetaD, Kernel};
use crate::rng;
use crate::walk::{sample_sigma_renewal, Certifier, DEFAULT_STEP_BUDGET};

const BATCHES: usize = 64;
const RHO_TAG: u64 = 0x5248_4f43;
const POOL_TAG: u64 = 0x504f_4f4c;

/// Monte Carlo estimate of ρ_c(β₁) = 1 / E[e^{β₁σ}(1 + σ + σ²)].
#[derive(Clone, Debug, PartialEq)]
pub struct RhoC {
    pub beta1: f64,
    pub point: f64,
    /// Conservative end, 1/(mean + 3 s.e.); experiments compare against it.
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub mean: f64,
    pub se: f64,
    /// Estimate of G_σ(β₁) = E[e^{β₁σ}] and its standard error.
    pub g_hat: f64,
    pub g_se: f64,
    pub mean_sigma: f64,
    pub n_samples: usize,
}

fn batch_sizes(n: usize) -> Vec<usize> {
    (0..BATCHES)
        .map(|b| n / BATCHES + usize::from(b < n % BATCHES))
        .collect()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Estimates ρ_c from `n_samples` renewal draws of σ, with batch-means
/// standard errors. Refuses β₁ at or above the lower end of the β_d bracket.
pub fn rho_c_estimate(
    k: &Kernel,
    beta1: f64,
    beta_d: &BetaD,
    n_samples: usize,
    cert: &dyn Certifier,
    seed: u64,
) -> Result<RhoC> {
    if !(beta1 >= 0.0) || beta1 >= beta_d.lower {
        return Err(Error::Precondition(format!(
            "beta1 = {beta1} must lie in [0, {}) (lower end of the beta_d bracket)",
            beta_d.lower
        )));
    }
    if n_samples < 2 * BATCHES {
        return Err(crate::error::invalid(format!(
            "need at least {} samples",
            2 * BATCHES
        )));
    }
    let sizes = batch_sizes(n_samples);
    let batches: Vec<Result<(f64, f64, f64)>> = sizes
        .par_iter()
        .enumerate()
        .map(|(b, &size)| {
            let mut r = rng::stream(seed, 0, rng::stream_id(RHO_TAG, &[b as u64]));
            let (mut f, mut g, mut s) = (0.0, 0.0, 0.0);
            for _ in 0..size {
                let sigma = sample_sigma_renewal(k, cert, &mut r, DEFAULT_STEP_BUDGET)?.sigma;
                let e = (beta1 * sigma).exp();
                f += e * (1.0 + sigma + sigma * sigma);
                g += e;
                s += sigma;
            }
            let n = size as f64;
            Ok((f / n, g / n, s / n))
        })
        .collect();
    let batches: Vec<(f64, f64, f64)> = batches.into_iter().collect::<Result<_>>()?;
    let fs: Vec<f64> = batches.iter().map(|b| b.0).collect();
    let gs: Vec<f64> = batches.iter().map(|b| b.1).collect();
    let (mean, se) = mean_se(&fs);
    let (g_hat, g_se) = mean_se(&gs);
    let mean_sigma = batches.iter().map(|b| b.2).sum::<f64>() / BATCHES as f64;
    let lo_den = mean + 3.0 * se;
    let hi_den = mean - 3.0 * se;
    Ok(RhoC {
        beta1,
        point: 1.0 / mean,
        ci_lower: 1.0 / lo_den,
        ci_upper: if hi_den > 0.0 {
            1.0 / hi_den
        } else {
            f64::INFINITY
        },
        mean,
        se,
        g_hat,
        g_se,
        mean_sigma,
        n_samples,
    })
}

/// `n` independent renewal draws of σ, in a reproducible order.
pub fn sigma_pool(k: &Kernel, cert: &dyn Certifier, n: usize, seed: u64) -> Result<Vec<f64>> {
    let sizes = batch_sizes(n);
    let parts: Vec<Result<Vec<f64>>> = sizes
        .par_iter()
        .enumerate()
        .map(|(b, &size)| {
            let mut r = rng::stream(seed, 0, rng::stream_id(POOL_TAG, &[b as u64]));
            (0..size)
                .map(|_| Ok(sample_sigma_renewal(k, cert, &mut r, DEFAULT_STEP_BUDGET)?.sigma))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

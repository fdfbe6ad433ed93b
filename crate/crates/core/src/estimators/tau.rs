//! Survival of the hitting time τ, estimated by direct forward simulation
//! on a region large enough that the boundary bias stays below ε.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernel::Kernel;
use crate::lossnet::PatternSpec;
use crate::oracle::survival_field;
use crate::rng;
use crate::site::{self, Site};

use super::stats::Moments;

const TAU_TAG: u64 = 0x5441_5553;

/// Monte Carlo survival curve P_{ν_ρ}(τ > t).
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalEstimate {
    pub grid: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub n: usize,
    pub pattern: PatternSpec,
    pub rho: f64,
    /// Sites whose particles were simulated.
    pub region_sites: usize,
    /// Bound on the expected number of particles started outside the
    /// region that reach the pattern support by the last grid time.
    pub boundary_bias: f64,
}

/// Options of [`estimate_tau_survival`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauOptions {
    /// Allowed boundary bias ε.
    pub epsilon: f64,
}

impl Default for TauOptions {
    fn default() -> Self {
        TauOptions { epsilon: 1e-4 }
    }
}

/// Starting sites ordered by decreasing probability of reaching `target`
/// within `t_max`, cut once the remaining mass is below `epsilon / rho`.
/// Returns the sites and ρ times the remaining mass bound.
pub fn tau_region(
    k: &Kernel,
    target: &[Site],
    rho: f64,
    t_max: f64,
    epsilon: f64,
) -> Result<(Vec<Site>, f64)> {
    if rho == 0.0 {
        return Ok((Vec::new(), 0.0));
    }
    let allowed = epsilon / rho;
    let field = survival_field(k, target, &[t_max], (allowed * 1e-3).min(1e-6))?;
    let total = field.hit_mass[0].upper;
    let mut scored: Vec<(f64, f64, Site)> = field
        .sites()
        .map(|x| {
            let h = field.bracket(0, &x).complement();
            (h.upper, h.lower, x)
        })
        .filter(|(u, _, _)| *u > 0.0)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)));
    let mut covered = 0.0;
    let mut out = Vec::new();
    for (_, lo, x) in scored {
        if total - covered <= allowed {
            break;
        }
        covered += lo;
        out.push(x);
    }
    let rest = (total - covered).max(0.0);
    if rest > allowed {
        return Err(Error::Precondition(format!(
            "box certification failed: residual hitting mass {rest:e} exceeds {allowed:e}"
        )));
    }
    Ok((out, rho * rest))
}

/// Hitting time of the pattern for one replica: a stationary Poisson(ρ)
/// configuration on `region` evolved forward up to `t_max`. Returns
/// `f64::INFINITY` when the pattern is not realized by then.
pub fn sample_tau(
    k: &Kernel,
    region: &[Site],
    rho: f64,
    pattern: &PatternSpec,
    t_max: f64,
    seed: u64,
    replica: u64,
) -> f64 {
    let mut r = rng::stream(seed, replica, rng::stream_id(TAU_TAG, &[]));
    let n = rng::poisson(&mut r, rho * region.len() as f64);
    let support = pattern.support();
    let zero = pattern.as_zero().is_some();
    let mut first = f64::INFINITY;
    let mut events: Vec<(f64, u8)> = Vec::new();
    for _ in 0..n {
        let k_site = ((rng::uniform(&mut r) * region.len() as f64) as usize).min(region.len() - 1);
        let mut x = region[k_site];
        let mut t = 0.0;
        loop {
            let next = t + rng::exp1(&mut r);
            if support.contains(&x) {
                if zero {
                    first = first.min(t);
                    break;
                }
                events.push((t, 0));
                events.push((next.min(t_max), 1));
            }
            if next > t_max || (zero && next >= first) {
                break;
            }
            t = next;
            x = site::add(&x, k.offset_for(rng::uniform(&mut r)));
        }
    }
    if zero {
        return first;
    }
    let need = pattern.level() as usize + 1;
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut open = 0usize;
    for (t, tag) in events {
        if tag == 0 {
            open += 1;
            if open >= need {
                return t;
            }
        } else {
            open -= 1;
        }
    }
    f64::INFINITY
}

/// Forward Monte Carlo of P_{ν_ρ}(τ > t) on `grid`, one random stream per
/// replica, replicas in parallel.
pub fn estimate_tau_survival(
    k: &Kernel,
    rho: f64,
    pattern: &PatternSpec,
    grid: &[f64],
    replicas: usize,
    seed: u64,
    opts: &TauOptions,
) -> Result<SurvivalEstimate> {
    if grid.is_empty()
        || grid.iter().any(|t| !(*t >= 0.0 && t.is_finite()))
        || grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(invalid("grid must be finite, nonnegative and increasing"));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(invalid("density must be finite and nonnegative"));
    }
    if replicas == 0 {
        return Err(invalid("need at least one replica"));
    }
    let t_max = *grid.last().expect("nonempty grid");
    let (region, bias) = tau_region(k, &pattern.support(), rho, t_max, opts.epsilon)?;
    let taus: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|rep| {
            if region.is_empty() {
                f64::INFINITY
            } else {
                sample_tau(k, &region, rho, pattern, t_max, seed, rep)
            }
        })
        .collect();
    let mut p_hat = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    for &t in grid {
        let mut m = Moments::default();
        taus.iter()
            .for_each(|&tau| m.push(f64::from(u8::from(tau > t))));
        let p = m.mean();
        p_hat.push(p);
        se.push((p * (1.0 - p) / replicas as f64).sqrt());
    }
    Ok(SurvivalEstimate {
        grid: grid.to_vec(),
        p_hat,
        se,
        n: replicas,
        pattern: pattern.clone(),
        rho,
        region_sites: region.len(),
        boundary_bias: bias,
    })
}

//! Escape certificates: upper bounds on the chance of ever reaching a
//! target set, used to stop simulating walks that have left for good.

use crate::kernel::{minimize_phi, Kernel};
use crate::site::{Site, MAX_DIM};

/// Upper bounds on the probability of ever visiting a fixed target set.
///
/// A walk is certified as escaped at `x` once `return_bound(x) <= epsilon()`;
/// the bias of stopping there is at most ε per certified path.
pub trait Certifier: Send + Sync {
    fn return_bound(&self, x: &Site) -> f64;
    fn epsilon(&self) -> f64;
    fn target(&self) -> &[Site];

    fn certified(&self, x: &Site) -> bool {
        self.return_bound(x) <= self.epsilon()
    }
}

/// Exponential supermartingale bound.
///
/// For z with Φ(z) ≤ 1, e^{z·X_n} is a supermartingale of the jump chain, so
/// P_x(H_λ < ∞) ≤ e^{z·(x−λ)}. The bound is minimized over a fixed set of
/// boundary points of {Φ ≤ 1} found along rays from the minimizer z0.
#[derive(Clone, Debug)]
pub struct MartingaleCertifier {
    dim: usize,
    points: Vec<[f64; MAX_DIM]>,
    target: Vec<Site>,
    epsilon: f64,
    log_epsilon: f64,
}

impl MartingaleCertifier {
    /// Builds the certifier; the kernel must have nonzero drift for the
    /// bound to be useful, but any kernel is accepted.
    pub fn new(kernel: &Kernel, target: &[Site], epsilon: f64) -> Self {
        let d = kernel.dim();
        let z0 = minimize_phi(kernel, 1e-10)
            .map(|t| t.z0)
            .unwrap_or_else(|_| vec![0.0; d]);
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for a in 0..d {
            for sa in [1.0, -1.0] {
                let mut u = vec![0.0; d];
                u[a] = sa;
                dirs.push(u.clone());
                for b in (a + 1)..d {
                    for sb in [1.0, -1.0] {
                        let mut v = u.clone();
                        v[b] = sb;
                        dirs.push(v);
                    }
                }
            }
        }
        // Points are kept a few ulps inside {Φ ≤ 1} so rounding cannot
        // tighten the bound below the true probability.
        let inside = |z: &[f64]| kernel.phi(z) <= 1.0 - 4.0 * f64::EPSILON;
        let mut points = Vec::new();
        let mut p0 = [0.0; MAX_DIM];
        p0[..d].copy_from_slice(&z0);
        if inside(&z0) {
            points.push(p0);
        }
        for u in &dirs {
            let at = |s: f64| -> Vec<f64> { z0.iter().zip(u).map(|(z, v)| z + s * v).collect() };
            let mut hi = 1.0;
            while inside(&at(hi)) && hi < 1e3 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if inside(&at(mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let z = at(lo);
            if inside(&z) {
                let mut p = [0.0; MAX_DIM];
                p[..d].copy_from_slice(&z);
                points.push(p);
            }
        }
        MartingaleCertifier {
            dim: d,
            points,
            target: target.to_vec(),
            epsilon,
            log_epsilon: epsilon.ln(),
        }
    }

    fn log_bound(&self, x: &Site) -> f64 {
        let mut best = 0.0f64;
        for z in &self.points {
            let v = if self.target.len() == 1 {
                let l = &self.target[0];
                (0..self.dim)
                    .map(|k| z[k] * (x[k] - l[k]) as f64)
                    .sum::<f64>()
            } else {
                let e: Vec<f64> = self
                    .target
                    .iter()
                    .map(|l| (0..self.dim).map(|k| z[k] * (x[k] - l[k]) as f64).sum())
                    .collect();
                let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + e.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
            };
            best = best.min(v);
        }
        best
    }
}

impl Certifier for MartingaleCertifier {
    fn return_bound(&self, x: &Site) -> f64 {
        if self.target.contains(x) {
            return 1.0;
        }
        self.log_bound(x).exp().min(1.0)
    }

    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn target(&self) -> &[Site] {
        &self.target
    }

    fn certified(&self, x: &Site) -> bool {
        !self.target.contains(x) && self.log_bound(x) <= self.log_epsilon
    }
}

//! Realization-wise audits of coupled slices and the weighted discrepancy
//! between finite and infinite horizons.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::lossnet::{CoupledSlices, Occupation};
use crate::oracle::{Bracket, Horizon};
use crate::site::Site;

use super::stats::{weighted_line, Moments};

/// Kind of a violated coupling inequality.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// Zero-pattern slice above the conditioned slice.
    ZeroAboveConditioned,
    /// Conditioned slice above the free slice.
    ConditionedAboveFree,
    /// Zero-pattern slice increasing with the horizon.
    NotMonotone,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub replica: u64,
    pub horizon: usize,
    pub site: Site,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub tuples: usize,
    pub comparisons: u64,
    pub violations: Vec<Violation>,
}

fn check_ids(c: &CoupledSlices) -> Result<()> {
    let all = c
        .conditioned
        .iter()
        .chain(&c.zero)
        .chain(std::iter::once(&c.free));
    if let Some(o) = all.into_iter().find(|o| o.replica != c.replica) {
        return Err(invalid(format!(
            "refusing to compare slices of replica {} with replica {}",
            o.replica, c.replica
        )));
    }
    if c.conditioned.len() != c.horizons.len() || c.zero.len() != c.horizons.len() {
        return Err(invalid("slice tuple does not match its horizon list"));
    }
    Ok(())
}

fn push_excess(
    out: &mut Vec<Violation>,
    a: &Occupation,
    b: &Occupation,
    replica: u64,
    horizon: usize,
    kind: ViolationKind,
) {
    for site in a.excess_over(b) {
        out.push(Violation {
            replica,
            horizon,
            site,
            kind,
        });
    }
}

/// Counts sitewise violations of ζ̂_t ≤ ζ_t ≤ free and of ζ̂_{t'} ≤ ζ̂_t for
/// t < t'. Refuses tuples whose slices carry different replica ids.
pub fn domination_audit(batch: &[CoupledSlices]) -> Result<AuditReport> {
    let mut out = AuditReport {
        tuples: batch.len(),
        comparisons: 0,
        violations: Vec::new(),
    };
    for c in batch {
        check_ids(c)?;
        for j in 0..c.horizons.len() {
            push_excess(
                &mut out.violations,
                &c.zero[j],
                &c.conditioned[j],
                c.replica,
                j,
                ViolationKind::ZeroAboveConditioned,
            );
            push_excess(
                &mut out.violations,
                &c.conditioned[j],
                &c.free,
                c.replica,
                j,
                ViolationKind::ConditionedAboveFree,
            );
            if j > 0 {
                push_excess(
                    &mut out.violations,
                    &c.zero[j],
                    &c.zero[j - 1],
                    c.replica,
                    j,
                    ViolationKind::NotMonotone,
                );
            }
            out.comparisons += 2 + u64::from(j > 0);
        }
    }
    Ok(out)
}

/// Weighted discrepancy curve D̂(t) = E Σ_i w_i |ζ_t(i) − ζ_∞(i)|.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscrepancyCurve {
    pub t: Vec<f64>,
    pub d_hat: Vec<f64>,
    /// Monte Carlo standard error plus the weight-bracket half-width term.
    pub se: Vec<f64>,
    /// Fitted exponential rate r̂ and its standard error, when at least two
    /// points are positive.
    pub rate: Option<(f64, f64)>,
}

/// D̂(t) for each finite horizon, with weights from brackets (midpoints;
/// half-widths folded into the error bar), and a weighted log-linear fit.
pub fn discrepancy_decay(
    batch: &[CoupledSlices],
    weights: &(dyn Fn(&Site) -> Bracket + Sync),
) -> Result<DiscrepancyCurve> {
    let first = batch.first().ok_or_else(|| invalid("empty batch"))?;
    let horizons = &first.horizons;
    let inf = horizons
        .iter()
        .position(|h| *h == Horizon::Infinite)
        .ok_or_else(|| invalid("missing infinite-horizon slice"))?;
    for c in batch {
        check_ids(c)?;
        if c.horizons != *horizons {
            return Err(invalid("slice tuples use different horizons"));
        }
    }
    let finite: Vec<(usize, f64)> = horizons
        .iter()
        .enumerate()
        .filter_map(|(j, h)| match h {
            Horizon::Finite(t) => Some((j, *t)),
            Horizon::Infinite => None,
        })
        .collect();
    let per: Vec<Vec<(f64, f64)>> = batch
        .par_iter()
        .map(|c| {
            let z_inf = &c.conditioned[inf];
            finite
                .iter()
                .map(|&(j, _)| {
                    let z = &c.conditioned[j];
                    let (mut mid, mut half) = (0.0, 0.0);
                    let sites = z.counts.keys().chain(z_inf.counts.keys());
                    let mut seen = std::collections::BTreeSet::new();
                    for s in sites {
                        if !seen.insert(*s) {
                            continue;
                        }
                        let d = (f64::from(z.get(s)) - f64::from(z_inf.get(s))).abs();
                        if d > 0.0 {
                            let w = weights(s);
                            mid += w.mid() * d;
                            half += 0.5 * w.width() * d;
                        }
                    }
                    (mid, half)
                })
                .collect()
        })
        .collect();
    let mut t = Vec::new();
    let mut d_hat = Vec::new();
    let mut se = Vec::new();
    for (k, &(_, tk)) in finite.iter().enumerate() {
        let mut m = Moments::default();
        let mut h = Moments::default();
        for p in &per {
            m.push(p[k].0);
            h.push(p[k].1);
        }
        t.push(tk);
        d_hat.push(m.mean());
        se.push(if m.n > 1 { m.se() } else { 0.0 } + h.mean());
    }
    let pos: Vec<usize> = (0..t.len())
        .filter(|&k| d_hat[k] > 0.0 && se[k] > 0.0)
        .collect();
    let rate = (pos.len() >= 2).then(|| {
        let x: Vec<f64> = pos.iter().map(|&k| t[k]).collect();
        let y: Vec<f64> = pos.iter().map(|&k| d_hat[k].ln()).collect();
        let w: Vec<f64> = pos.iter().map(|&k| (d_hat[k] / se[k]).powi(2)).collect();
        let (_, b, sb) = weighted_line(&x, &y, &w);
        (-b, sb)
    });
    Ok(DiscrepancyCurve { t, d_hat, se, rate })
}

//! Time-0 slices of one realization, trimmed for several horizons with
//! shared labels where the clan width allows.

use crate::error::{invalid, Error, Result};
use crate::oracle::Horizon;
use crate::site::LatticeBox;

use super::trim::{Label, Realization, Trimmer};
use super::types::{Occupation, PatternSpec};

/// Options of [`coupled_conditioned_slices`].
#[derive(Clone, Debug)]
pub struct SliceOptions {
    /// Cap on rectangles labeled per horizon.
    pub budget: usize,
    /// Reuse infinite-horizon labels for finite horizons when the clan
    /// width allows it.
    pub share: bool,
    /// Record only rectangles whose time-0 position lies in this box.
    pub observe: Option<LatticeBox>,
    /// Window extensions allowed while certifying infinite-horizon labels.
    pub max_extensions: usize,
}

impl Default for SliceOptions {
    fn default() -> Self {
        SliceOptions {
            budget: 1_000_000,
            share: true,
            observe: None,
            max_extensions: 4,
        }
    }
}

/// Time-0 slices of one realization, trimmed for several horizons.
///
/// `conditioned[j]` is trimmed for the pattern with `I = [-t_j, 0]`,
/// `zero[j]` for the zero pattern on the pattern support with the same
/// interval, and `free` is untrimmed.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledSlices {
    pub replica: u64,
    pub horizons: Vec<Horizon>,
    pub conditioned: Vec<Occupation>,
    pub zero: Vec<Occupation>,
    pub free: Occupation,
    /// Finite-horizon labels taken over from the infinite horizon.
    pub shared: usize,
    /// Window extensions needed to certify infinite-horizon labels.
    pub extensions: usize,
}

fn check_horizons<R: Realization>(real: &R, horizons: &[Horizon]) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for h in horizons {
        let v = match h {
            Horizon::Finite(t) => *t,
            Horizon::Infinite => f64::INFINITY,
        };
        if !(v > prev) {
            return Err(invalid(
                "horizons must be strictly increasing with infinity last",
            ));
        }
        if v < 0.0 {
            return Err(invalid("horizons must be nonnegative"));
        }
        if v.is_finite() && v > real.max_finite_horizon() {
            return Err(invalid(format!(
                "horizon {v} beyond the realized window {}",
                real.max_finite_horizon()
            )));
        }
        if v.is_infinite() && real.infinite_horizon().is_none() {
            return Err(invalid(
                "this realization does not support the infinite horizon",
            ));
        }
        prev = v;
    }
    Ok(())
}

/// Infinite-horizon labels of the slice roots, extending the window until
/// every clan width stays above the window start plus the margin.
fn infinite_labels<R: Realization>(
    real: &mut R,
    level: u32,
    opts: &SliceOptions,
) -> Result<(Vec<usize>, Vec<Label>, usize)> {
    let mut extensions = 0;
    loop {
        let (lo, margin) = real
            .infinite_horizon()
            .ok_or_else(|| invalid("no infinite horizon"))?;
        let roots = real.slice_roots();
        let mut t = Trimmer::new(lo, level, opts.budget);
        let labels = roots
            .iter()
            .map(|&i| t.label(real, i))
            .collect::<Result<Vec<_>>>()?;
        let lowest = labels
            .iter()
            .map(|l| l.width_lo)
            .fold(f64::INFINITY, f64::min);
        if lowest >= lo + margin {
            return Ok((roots, labels, extensions));
        }
        if extensions >= opts.max_extensions {
            return Err(Error::BudgetExceeded(format!(
                "clan width reaches {lowest}, below the certified window start {}",
                lo + margin
            )));
        }
        extensions += 1;
        real.extend_window(2.0 * (-lo).max(margin))?;
    }
}

/// Coupled time-0 slices of one realization for each horizon, with labels
/// for finite horizons reused from the infinite horizon whenever the root's
/// clan width misses `(-∞, -t]`, where both trimmings coincide.
pub fn coupled_conditioned_slices<R: Realization>(
    real: &mut R,
    replica: u64,
    pattern: &PatternSpec,
    horizons: &[Horizon],
    common: Option<&Occupation>,
    opts: &SliceOptions,
) -> Result<CoupledSlices> {
    let mut support = pattern.support();
    let mut target = real.target().to_vec();
    support.sort();
    target.sort();
    if support != target {
        return Err(invalid(
            "realization visits were computed for a different support",
        ));
    }
    check_horizons(real, horizons)?;
    let level = pattern.level();
    let zero_pattern = pattern.as_zero().is_some();

    let mut extensions = 0;
    let (roots, inf) = if horizons.last() == Some(&Horizon::Infinite) && !zero_pattern {
        let (roots, labels, e) = infinite_labels(real, level, opts)?;
        extensions = e;
        (roots, Some(labels))
    } else {
        (real.slice_roots(), None)
    };
    let lo_of = |h: &Horizon, real: &R| match h {
        Horizon::Finite(t) => -*t,
        Horizon::Infinite => real.window_start(),
    };

    let observe = opts.observe.as_ref();
    let base = |h: Option<Horizon>| {
        let mut o = Occupation::new(replica, h);
        if let Some(c) = common {
            for (s, &n) in &c.counts {
                o.add(*s, n);
            }
        }
        o
    };
    let mut free = base(None);
    let mut conditioned = Vec::with_capacity(horizons.len());
    let mut zero = Vec::with_capacity(horizons.len());
    let mut shared = 0;
    for h in horizons {
        let lo = lo_of(h, real);
        let mut cond = base(Some(*h));
        let mut zslice = base(Some(*h));
        let mut trimmer = Trimmer::new(lo, level, opts.budget);
        for (k, &i) in roots.iter().enumerate() {
            let visits = real.rects()[i].hull_within(lo, 0.0).is_some();
            let kept = if zero_pattern || !visits {
                !visits
            } else if *h == Horizon::Infinite {
                inf.as_ref().map(|l| l[k].kept).unwrap_or(false)
            } else {
                match inf.as_ref().map(|l| l[k]) {
                    Some(l) if opts.share && l.width_lo > lo => {
                        shared += 1;
                        l.kept
                    }
                    _ => trimmer.label(real, i)?.kept,
                }
            };
            let Some(site) = real.rects()[i].site_now else {
                return Err(Error::Invariant(
                    "slice rectangle without a time-0 position".into(),
                ));
            };
            if observe.is_some_and(|b| !b.contains(&site)) {
                continue;
            }
            if kept {
                cond.add(site, 1);
            }
            if !visits {
                zslice.add(site, 1);
            }
        }
        conditioned.push(cond);
        zero.push(zslice);
    }
    for &i in &roots {
        if let Some(site) = real.rects()[i].site_now {
            if observe.is_none_or(|b| b.contains(&site)) {
                free.add(site, 1);
            }
        }
    }
    Ok(CoupledSlices {
        replica,
        horizons: horizons.to_vec(),
        conditioned,
        zero,
        free,
        shared,
        extensions,
    })
}

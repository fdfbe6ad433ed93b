use crate::error::{invalid, Result};
use crate::site::Site;

use super::{Certifier, Trajectory};

/// Visit structure of a trajectory with respect to a finite target set.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitSummary {
    pub target: Vec<Site>,
    /// Disjoint, sorted, closed intervals during which the path is in the target.
    pub visit_intervals: Vec<(f64, f64)>,
    /// First entry time, `f64::INFINITY` without visits.
    pub s_lower: f64,
    /// Last exit time, `f64::NEG_INFINITY` without visits.
    pub s_upper: f64,
    pub sigma: f64,
    /// Hitting time measured from the window start, `f64::INFINITY` without visits.
    pub hit_time: f64,
    pub certified: bool,
    /// Observed window; when certified its end is the certification time.
    pub window: (f64, f64),
    pub epsilon: Option<f64>,
}

impl VisitSummary {
    fn from_intervals(target: &[Site], iv: Vec<(f64, f64)>, window: (f64, f64)) -> Self {
        let (s_lower, s_upper) = match (iv.first(), iv.last()) {
            (Some(f), Some(l)) => (f.0, l.1),
            _ => (f64::INFINITY, f64::NEG_INFINITY),
        };
        let sigma = if iv.is_empty() {
            0.0
        } else {
            s_upper - s_lower
        };
        VisitSummary {
            target: target.to_vec(),
            visit_intervals: iv,
            s_lower,
            s_upper,
            sigma,
            hit_time: if s_lower.is_finite() {
                s_lower - window.0
            } else {
                f64::INFINITY
            },
            certified: false,
            window,
            epsilon: None,
        }
    }

    pub fn visits(&self) -> bool {
        !self.visit_intervals.is_empty()
    }
}

/// Closed visit intervals of `t` to `target` inside `[lo, hi]`. The window
/// must already be realized.
pub fn visit_intervals(t: &Trajectory, target: &[Site], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for (a, b, s) in t.segments(lo, hi) {
        if target.contains(&s) {
            open = Some(match open {
                Some((a0, _)) => (a0, b),
                None => (a, b),
            });
        } else if let Some(iv) = open.take() {
            out.push(iv);
        }
    }
    if let Some(iv) = open {
        out.push(iv);
    }
    out
}

/// Visit summary over `window`, optionally continued forward until the
/// certifier vouches that the walk will not come back (bias ≤ ε).
///
/// Without certification or when `budget` jumps do not suffice the summary
/// is returned with `certified = false` and the window ends at the
/// truncation point.
pub fn visit_summary(
    t: &mut Trajectory,
    target: &[Site],
    window: (f64, f64),
    certifier: Option<&dyn Certifier>,
    budget: usize,
) -> Result<VisitSummary> {
    if target.is_empty() {
        return Err(invalid("target set must be nonempty"));
    }
    let (sw0, sw1) = t.simulated_window();
    t.extend((sw0.min(window.0), sw1.max(window.1)))?;
    let Some(cert) = certifier else {
        return Ok(VisitSummary::from_intervals(
            target,
            visit_intervals(t, target, window.0, window.1),
            window,
        ));
    };
    let mut end = window.1;
    let mut certified = false;
    for _ in 0..=budget {
        let here = t.position_unchecked(end);
        if cert.certified(&here) {
            certified = true;
            break;
        }
        let next = t.next_forward_jump();
        t.extend_forward(next);
        end = next;
    }
    let mut s = VisitSummary::from_intervals(
        target,
        visit_intervals(t, target, window.0, end),
        (window.0, end),
    );
    s.certified = certified;
    s.epsilon = Some(cert.epsilon());
    if certified {
        t.set_escape_certified_after(end);
    }
    Ok(s)
}

//! Birth-order labeling of clans into kept and deleted rectangles.
//!
//! A rectangle is deleted when its kept parents, together with itself,
//! realize the pattern at some time of I; labels are resolved oldest
//! first with memoization.

use std::collections::HashMap;

use crate::error::{invalid, Error, Result};
use crate::site::Site;

use super::types::{PatternSpec, Rect};

/// A lazily materialized realization of the free rectangle process, seen
/// through the visits of each rectangle to the pattern support.
///
/// Visits are known on `[window_start(), 0]`. Rectangles alive at time 0
/// are present from the start; older ones appear as
/// [`Realization::ensure_alive_after`] is called with earlier times.
/// Indices into [`Realization::rects`] are stable.
pub trait Realization {
    fn window_start(&self) -> f64;
    fn target(&self) -> &[Site];
    fn rects(&self) -> &[Rect];
    /// Indices of rectangles with at least one visit in the window.
    fn interacting(&self) -> &[usize];
    /// Materializes every rectangle whose death is later than `b`.
    fn ensure_alive_after(&mut self, b: f64) -> Result<()>;

    /// Whether rectangle `idx` belongs to the reported slice at time 0.
    fn in_slice(&self, idx: usize) -> bool {
        self.rects()[idx].alive_at(0.0)
    }

    /// Longest finite horizon the realization can trim for.
    fn max_finite_horizon(&self) -> f64 {
        -self.window_start()
    }

    /// Lower end and certification margin for the infinite horizon, if the
    /// realization supports it.
    fn infinite_horizon(&self) -> Option<(f64, f64)> {
        None
    }

    /// Pushes the window start back to `-t` (infinite-horizon support).
    fn extend_window(&mut self, _t: f64) -> Result<()> {
        Err(invalid("this realization has a fixed window"))
    }

    fn slice_roots(&self) -> Vec<usize> {
        (0..self.rects().len())
            .filter(|&i| self.in_slice(i))
            .collect()
    }
}

/// Label of one rectangle for one conditioning interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Label {
    pub kept: bool,
    /// Lower end of the clan width (union of the members' visit hulls
    /// inside the interval); `+∞` when the rectangle has no visit there.
    pub width_lo: f64,
}

/// Birth-ordered I-trimming for the threshold pattern {η(0) > L} with
/// `I = [lo, 0]`.
///
/// Interaction uses the hull of each rectangle's visits inside `I`. A
/// rectangle can only complete the pattern at a time it sits at the
/// origin, and only rectangles whose visit hulls meet its own can be
/// there at the same time, so labels agree with those obtained from the
/// hulls of the full visit sets. Labels are memoized; a trimmer is tied to
/// one realization and one interval.
#[derive(Clone, Debug)]
pub struct Trimmer {
    lo: f64,
    level: u32,
    budget: usize,
    labels: HashMap<usize, Label>,
    parents: HashMap<usize, Vec<usize>>,
    explored: usize,
}

impl Trimmer {
    pub fn new(lo: f64, level: u32, budget: usize) -> Self {
        Trimmer {
            lo,
            level,
            budget,
            labels: HashMap::new(),
            parents: HashMap::new(),
            explored: 0,
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, 0.0)
    }

    /// Number of rectangles labeled so far.
    pub fn explored(&self) -> usize {
        self.explored
    }

    pub fn cached(&self, idx: usize) -> Option<Label> {
        self.labels.get(&idx).copied()
    }

    /// I-parents of `idx`: older rectangles alive at its birth whose visit
    /// hulls meet its own.
    fn find_parents<R: Realization>(
        &self,
        real: &mut R,
        idx: usize,
        hull: (f64, f64),
    ) -> Result<Vec<usize>> {
        let b = real.rects()[idx].birth;
        real.ensure_alive_after(b)?;
        let rects = real.rects();
        let key = rects[idx].order_key();
        let mut out = Vec::new();
        for &j in real.interacting() {
            let r = &rects[j];
            if j == idx || r.order_key() >= key || r.death <= b {
                continue;
            }
            if let Some((a, c)) = r.hull_within(self.lo, 0.0) {
                if a <= hull.1 && hull.0 <= c {
                    out.push(j);
                }
            }
        }
        Ok(out)
    }

    /// Labels rectangle `idx`, labeling its clan first.
    pub fn label<R: Realization>(&mut self, real: &mut R, idx: usize) -> Result<Label> {
        let mut stack = vec![idx];
        while let Some(&top) = stack.last() {
            if self.labels.contains_key(&top) {
                stack.pop();
                continue;
            }
            let Some(hull) = real.rects()[top].hull_within(self.lo, 0.0) else {
                self.labels.insert(
                    top,
                    Label {
                        kept: true,
                        width_lo: f64::INFINITY,
                    },
                );
                stack.pop();
                continue;
            };
            if !self.parents.contains_key(&top) {
                let p = self.find_parents(real, top, hull)?;
                self.parents.insert(top, p);
            }
            let pending: Vec<usize> = self.parents[&top]
                .iter()
                .copied()
                .filter(|p| !self.labels.contains_key(p))
                .collect();
            if !pending.is_empty() {
                if stack.len() + self.explored > self.budget {
                    return Err(Error::BudgetExceeded(format!(
                        "clan exploration exceeded {} rectangles",
                        self.budget
                    )));
                }
                stack.extend(pending);
                continue;
            }
            let parents = &self.parents[&top];
            let rects = real.rects();
            let kept: Vec<&Rect> = parents
                .iter()
                .filter(|p| self.labels[p].kept)
                .map(|&p| &rects[p])
                .collect();
            let deleted = completes_pattern(&rects[top], &kept, self.lo, self.level);
            let width_lo = parents
                .iter()
                .map(|p| self.labels[p].width_lo)
                .fold(hull.0, f64::min);
            self.labels.insert(
                top,
                Label {
                    kept: !deleted,
                    width_lo,
                },
            );
            self.explored += 1;
            stack.pop();
        }
        Ok(self.labels[&idx])
    }
}

/// Whether `r`, added to `others`, puts more than `level` rectangles at the
/// pattern support at some time of `[lo, 0]`: an exact sweep over closed
/// visit intervals.
pub fn completes_pattern(r: &Rect, others: &[&Rect], lo: f64, level: u32) -> bool {
    for (a, b) in r.visits_within(lo, 0.0) {
        if level == 0 {
            return true;
        }
        let mut events: Vec<(f64, u8)> = Vec::new();
        for o in others {
            for (x, y) in o.visits_within(a, b) {
                events.push((x, 0));
                events.push((y, 1));
            }
        }
        if max_overlap(&mut events) >= level as usize {
            return true;
        }
    }
    false
}

/// Maximal number of simultaneously open closed intervals, given their
/// start (tag 0) and end (tag 1) events.
pub(crate) fn max_overlap(events: &mut [(f64, u8)]) -> usize {
    events.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
    let mut open = 0usize;
    let mut best = 0usize;
    for &(_, tag) in events.iter() {
        if tag == 0 {
            open += 1;
            best = best.max(open);
        } else {
            open -= 1;
        }
    }
    best
}

/// Outcome of trimming the rectangles of a realization that belong to the
/// time-0 slice.
#[derive(Clone, Debug, PartialEq)]
pub struct TrimOutcome {
    pub kept: Vec<usize>,
    pub deleted: Vec<usize>,
    /// Rectangles labeled, including clan members outside the slice.
    pub explored: usize,
}

fn check_target<R: Realization>(real: &R, pattern: &PatternSpec) -> Result<()> {
    let mut a = real.target().to_vec();
    let mut b = pattern.support();
    a.sort();
    b.sort();
    if a != b {
        return Err(invalid(
            "realization visits were computed for a different support",
        ));
    }
    Ok(())
}

fn check_interval<R: Realization>(real: &R, lo: f64) -> Result<()> {
    if !(lo <= 0.0) || lo < real.window_start() {
        return Err(invalid(format!(
            "interval start {lo} outside the realized window [{}, 0]",
            real.window_start()
        )));
    }
    Ok(())
}

/// I-trimming of the slice rectangles with `I = [lo, 0]`.
///
/// Zero patterns need no clans: see [`trim_zero_lambda`].
pub fn trim_i<R: Realization>(
    real: &mut R,
    lo: f64,
    pattern: &PatternSpec,
    budget: usize,
) -> Result<TrimOutcome> {
    check_target(real, pattern)?;
    check_interval(real, lo)?;
    if pattern.as_zero().is_some() {
        return trim_zero_lambda(real, lo);
    }
    let mut t = Trimmer::new(lo, pattern.level(), budget);
    let mut out = TrimOutcome {
        kept: Vec::new(),
        deleted: Vec::new(),
        explored: 0,
    };
    for idx in real.slice_roots() {
        if t.label(real, idx)?.kept {
            out.kept.push(idx);
        } else {
            out.deleted.push(idx);
        }
    }
    out.explored = t.explored();
    Ok(out)
}

/// Zero-pattern trimming: keeps exactly the slice rectangles without a visit
/// to the support in `[lo, 0]`.
pub fn trim_zero_lambda<R: Realization>(real: &R, lo: f64) -> Result<TrimOutcome> {
    check_interval(real, lo)?;
    let mut out = TrimOutcome {
        kept: Vec::new(),
        deleted: Vec::new(),
        explored: 0,
    };
    for idx in real.slice_roots() {
        if real.rects()[idx].hull_within(lo, 0.0).is_some() {
            out.deleted.push(idx);
        } else {
            out.kept.push(idx);
        }
    }
    Ok(out)
}

/// Post-hoc check that a set of rectangles never puts more than `level`
/// of them on the support during `[lo, 0]`.
pub fn kept_set_consistent(rects: &[&Rect], lo: f64, level: u32) -> bool {
    let mut events = Vec::new();
    for r in rects {
        for (x, y) in r.visits_within(lo, 0.0) {
            events.push((x, 0));
            events.push((y, 1));
        }
    }
    max_overlap(&mut events) <= level as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(id: u64, birth: f64, visits: Vec<(f64, f64)>) -> Rect {
        Rect {
            id,
            birth,
            death: 10.0,
            u: None,
            visits,
            site_now: None,
            site_start: None,
        }
    }

    #[test]
    fn overlap_of_touching_closed_intervals_counts() {
        let mut ev = vec![(0.0, 0), (1.0, 1), (1.0, 0), (2.0, 1)];
        assert_eq!(max_overlap(&mut ev), 2);
        let mut ev = vec![(0.0, 0), (1.0, 1), (1.5, 0), (2.0, 1)];
        assert_eq!(max_overlap(&mut ev), 1);
    }

    #[test]
    fn pattern_completion_sweep() {
        let r = rect(0, 0.0, vec![(-3.0, -2.0)]);
        let a = rect(1, -1.0, vec![(-2.5, -2.2)]);
        let b = rect(2, -1.0, vec![(-2.1, -1.0)]);
        assert!(completes_pattern(&r, &[&a, &b], -5.0, 1));
        assert!(!completes_pattern(&r, &[&a, &b], -5.0, 2));
        assert!(!completes_pattern(&r, &[&a], -2.15, 1));
        assert!(completes_pattern(&r, &[], -5.0, 0));
        assert!(!completes_pattern(&r, &[], -1.0, 0));
    }
}

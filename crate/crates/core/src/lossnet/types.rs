use std::collections::BTreeMap;

use crate::error::{invalid, Result};
use crate::oracle::Horizon;
use crate::site::{Site, ORIGIN};

/// Rectangle identifier, derived from the random stream that generated the
/// rectangle, so it does not depend on materialization order.
pub type RectId = u64;

/// A rectangle as seen by the trimming algorithms: birth, death, the
/// optional uniform mark, and the visit structure of its basis.
///
/// The epoch is the half-open interval `[birth, death)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rect {
    pub id: RectId,
    pub birth: f64,
    pub death: f64,
    /// Uniform mark, present only in μ-mode.
    pub u: Option<f64>,
    /// Closed visit intervals to the pattern support inside the realized
    /// window, sorted and disjoint.
    pub visits: Vec<(f64, f64)>,
    /// Position at time 0, when known.
    pub site_now: Option<Site>,
    /// Position at the start of the realized window, when known.
    pub site_start: Option<Site>,
}

impl Rect {
    pub fn lifetime(&self) -> f64 {
        self.death - self.birth
    }

    pub fn alive_at(&self, b: f64) -> bool {
        self.birth <= b && b < self.death
    }

    /// Birth-order key with ties broken by id.
    pub fn order_key(&self) -> (f64, RectId) {
        (self.birth, self.id)
    }

    /// Hull of the visits inside `[lo, hi]`, if any.
    pub fn hull_within(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let mut a = f64::INFINITY;
        let mut b = f64::NEG_INFINITY;
        for &(x, y) in &self.visits {
            if y < lo || x > hi {
                continue;
            }
            a = a.min(x.max(lo));
            b = b.max(y.min(hi));
        }
        (a <= b).then_some((a, b))
    }

    /// Visits clipped to `[lo, hi]`.
    pub fn visits_within(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.visits
            .iter()
            .filter(move |&&(x, y)| y >= lo && x <= hi)
            .map(move |&(x, y)| (x.max(lo), y.min(hi)))
    }
}

/// Projected basis of a rectangle: the interaction interval `[s, s + sigma]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedMark {
    pub s: f64,
    pub sigma: f64,
}

impl ProjectedMark {
    pub fn end(&self) -> f64 {
        self.s + self.sigma
    }

    pub fn overlaps(&self, other: &ProjectedMark) -> bool {
        self.s <= other.end() && other.s <= self.end()
    }
}

/// The conditioning pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PatternSpec {
    /// {η(0) > L}.
    Threshold { level: u32 },
    /// Some site of Λ occupied.
    ZeroLambda { sites: Vec<Site> },
}

impl PatternSpec {
    pub fn threshold(level: u32) -> Self {
        PatternSpec::Threshold { level }
    }

    pub fn zero_lambda(sites: &[Site]) -> Result<Self> {
        if sites.is_empty() {
            return Err(invalid("the site set of a zero pattern must be nonempty"));
        }
        let mut v = sites.to_vec();
        v.sort();
        v.dedup();
        Ok(PatternSpec::ZeroLambda { sites: v })
    }

    /// Sites whose occupation the pattern reads.
    pub fn support(&self) -> Vec<Site> {
        match self {
            PatternSpec::Threshold { .. } => vec![ORIGIN],
            PatternSpec::ZeroLambda { sites } => sites.clone(),
        }
    }

    /// Number of particles on the support that is still allowed.
    pub fn level(&self) -> u32 {
        match self {
            PatternSpec::Threshold { level } => *level,
            PatternSpec::ZeroLambda { .. } => 0,
        }
    }

    /// Whether the pattern is equivalent to a zero pattern (threshold 0 at
    /// the origin, or any zero pattern).
    pub fn as_zero(&self) -> Option<Vec<Site>> {
        match self {
            PatternSpec::Threshold { level: 0 } => Some(vec![ORIGIN]),
            PatternSpec::Threshold { .. } => None,
            PatternSpec::ZeroLambda { sites } => Some(sites.clone()),
        }
    }

    /// Whether an occupation realizes the pattern.
    pub fn realized_by(&self, counts: &BTreeMap<Site, u32>) -> bool {
        match self {
            PatternSpec::Threshold { level } => counts.get(&ORIGIN).copied().unwrap_or(0) > *level,
            PatternSpec::ZeroLambda { sites } => sites
                .iter()
                .any(|s| counts.get(s).copied().unwrap_or(0) > 0),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PatternSpec::Threshold { level } => format!("threshold(L={level})"),
            PatternSpec::ZeroLambda { sites } => format!("zero(|Λ|={})", sites.len()),
        }
    }
}

/// A time slice: sparse site counts with metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Occupation {
    pub replica: u64,
    pub time: f64,
    pub horizon: Option<Horizon>,
    pub counts: BTreeMap<Site, u32>,
}

impl Occupation {
    pub fn new(replica: u64, horizon: Option<Horizon>) -> Self {
        Occupation {
            replica,
            time: 0.0,
            horizon,
            counts: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, s: Site, n: u32) {
        if n > 0 {
            *self.counts.entry(s).or_insert(0) += n;
        }
    }

    pub fn get(&self, s: &Site) -> u32 {
        self.counts.get(s).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }

    /// Sitewise `self ≤ other`; returns the offending sites.
    pub fn excess_over(&self, other: &Occupation) -> Vec<Site> {
        self.counts
            .iter()
            .filter(|(s, &c)| c > other.get(s))
            .map(|(s, _)| *s)
            .collect()
    }
}

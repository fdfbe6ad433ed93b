//! μ-mode: non-product initial laws through site-dependent birth rates
//! and the extra μ-parent relation.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::site::{self, Site};

use super::trim::{completes_pattern, Realization, TrimOutcome};
use super::types::{PatternSpec, Rect};

/// Birth rate c_i(η) of a finite-range Gibbs measure, with the floor
/// α_i/ρ ≤ c_i ≤ 1.
pub trait BirthRate: Send + Sync {
    /// Locality radius in the L∞ norm: c_i only reads η on sites within
    /// this distance of i.
    fn range(&self) -> u32;
    /// The floor α_i/ρ.
    fn floor(&self, i: &Site) -> f64;
    fn rate(&self, i: &Site, eta: &BTreeMap<Site, u32>) -> f64;
}

/// c ≡ 1: the initial law is ν_ρ itself.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnitRate;

impl BirthRate for UnitRate {
    fn range(&self) -> u32 {
        0
    }

    fn floor(&self, _i: &Site) -> f64 {
        1.0
    }

    fn rate(&self, _i: &Site, _eta: &BTreeMap<Site, u32>) -> f64 {
        1.0
    }
}

/// Constant rates c_i = α_i/ρ: the product Poisson law ν_α.
pub struct ProductRate {
    ratio: Box<dyn Fn(&Site) -> f64 + Send + Sync>,
}

impl ProductRate {
    /// `ratio(i)` is α_i/ρ.
    pub fn new(ratio: impl Fn(&Site) -> f64 + Send + Sync + 'static) -> Self {
        ProductRate {
            ratio: Box::new(ratio),
        }
    }
}

impl std::fmt::Debug for ProductRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ProductRate")
    }
}

impl BirthRate for ProductRate {
    fn range(&self) -> u32 {
        0
    }

    fn floor(&self, i: &Site) -> f64 {
        (self.ratio)(i)
    }

    fn rate(&self, i: &Site, _eta: &BTreeMap<Site, u32>) -> f64 {
        (self.ratio)(i)
    }
}

/// On-site soft exclusion c_i(η) = a + (1 − a)e^{−Jη(i)}: a product Gibbs
/// measure whose single-site weights satisfy π(n+1)/π(n) = c(n)/(n+1).
#[derive(Clone, Copy, Debug)]
pub struct SoftExclusion {
    pub floor: f64,
    pub strength: f64,
}

impl BirthRate for SoftExclusion {
    fn range(&self) -> u32 {
        0
    }

    fn floor(&self, _i: &Site) -> f64 {
        self.floor
    }

    fn rate(&self, i: &Site, eta: &BTreeMap<Site, u32>) -> f64 {
        let n = eta.get(i).copied().unwrap_or(0) as f64;
        self.floor + (1.0 - self.floor) * (-self.strength * n).exp()
    }
}

/// Outcome of [`validate_rate`].
#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub checks: usize,
    /// Σ(1 − α_i/ρ)² over the sites checked.
    pub alpha_deficit: f64,
}

fn random_config<R: Rng>(r: &mut R, center: &Site, dim: usize, radius: i32) -> BTreeMap<Site, u32> {
    let mut eta = BTreeMap::new();
    let side = 2 * radius + 1;
    let cells = side.pow(dim as u32);
    for c in 0..cells {
        let mut s = *center;
        let mut k = c;
        for x in s.iter_mut().take(dim) {
            *x += k % side - radius;
            k /= side;
        }
        let n = (rng::uniform(r) * 4.0) as u32;
        if n > 0 {
            eta.insert(s, n);
        }
    }
    eta
}

/// Samples random local configurations at each site and checks
/// α_i/ρ ≤ c_i ≤ 1, 0 < α_i/ρ ≤ 1 and that adding particles outside the
/// declared range leaves c_i unchanged.
pub fn validate_rate(
    rate: &dyn BirthRate,
    sites: &[Site],
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<RateReport> {
    const TOL: f64 = 1e-12;
    let mut r = rng::stream(seed, 0, rng::stream_id(0x5241_5445, &[]));
    let radius = rate.range() as i32;
    let mut report = RateReport {
        checks: 0,
        alpha_deficit: 0.0,
    };
    for i in sites {
        let a = rate.floor(i);
        if !(a > 0.0 && a <= 1.0 + TOL) {
            return Err(Error::Invariant(format!(
                "floor {a} at {i:?} outside (0, 1]"
            )));
        }
        report.alpha_deficit += (1.0 - a).powi(2);
        for _ in 0..samples {
            let eta = random_config(&mut r, i, dim, radius + 1);
            let c = rate.rate(i, &eta);
            if !(c >= a - TOL && c <= 1.0 + TOL) {
                return Err(Error::Invariant(format!(
                    "rate {c} at {i:?} outside [{a}, 1]: detailed balance broken"
                )));
            }
            let mut far = eta.clone();
            let mut j = *i;
            j[(report.checks) % dim] += radius + 1 + (rng::uniform(&mut r) * 3.0) as i32;
            *far.entry(j).or_insert(0) += 1;
            if (rate.rate(i, &far) - c).abs() > TOL {
                return Err(Error::Invariant(format!(
                    "rate at {i:?} depends on {j:?}, beyond the declared range {radius}"
                )));
            }
            report.checks += 1;
        }
    }
    Ok(report)
}

struct MuTrimmer<'a> {
    lo: f64,
    level: u32,
    budget: usize,
    rate: &'a dyn BirthRate,
    labels: HashMap<usize, bool>,
    parents: HashMap<usize, (Vec<usize>, Vec<usize>)>,
}

impl MuTrimmer<'_> {
    /// I-parents and μ-parents of `idx`.
    fn find_parents<R: Realization>(
        &self,
        real: &mut R,
        idx: usize,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        let b = real.rects()[idx].birth;
        real.ensure_alive_after(b)?;
        let rects = real.rects();
        let me = &rects[idx];
        let key = me.order_key();
        let hull = me.hull_within(self.lo, 0.0);
        let start = start_site(me)?;
        let u = me.u.ok_or_else(|| invalid("μ-mode needs uniform marks"))?;
        let mu_active = u > self.rate.floor(&start);
        let range = self.rate.range() as i32;
        let mut ip = Vec::new();
        let mut mp = Vec::new();
        for (j, r) in rects.iter().enumerate() {
            if j == idx || r.order_key() >= key || r.death <= b {
                continue;
            }
            if let Some((a, c)) = hull {
                if let Some((x, y)) = r.hull_within(self.lo, 0.0) {
                    if x <= c && a <= y {
                        ip.push(j);
                    }
                }
            }
            if mu_active && site::linf(&site::sub(&start_site(r)?, &start)) <= range {
                mp.push(j);
            }
        }
        Ok((ip, mp))
    }

    fn label<R: Realization>(&mut self, real: &mut R, idx: usize) -> Result<bool> {
        let mut stack = vec![idx];
        while let Some(&top) = stack.last() {
            if self.labels.contains_key(&top) {
                stack.pop();
                continue;
            }
            if !self.parents.contains_key(&top) {
                let p = self.find_parents(real, top)?;
                self.parents.insert(top, p);
            }
            let (ip, mp) = &self.parents[&top];
            let pending: Vec<usize> = ip
                .iter()
                .chain(mp.iter())
                .copied()
                .filter(|p| !self.labels.contains_key(p))
                .collect();
            if !pending.is_empty() {
                if self.labels.len() + stack.len() > self.budget {
                    return Err(Error::BudgetExceeded(format!(
                        "μ-clan exploration exceeded {} rectangles",
                        self.budget
                    )));
                }
                stack.extend(pending);
                continue;
            }
            let rects = real.rects();
            let me = &rects[top];
            let kept_i: Vec<&Rect> = ip
                .iter()
                .filter(|p| self.labels[p])
                .map(|&p| &rects[p])
                .collect();
            let mut deleted = completes_pattern(me, &kept_i, self.lo, self.level);
            let start = start_site(me)?;
            let u = me.u.unwrap_or(0.0);
            if !deleted && u > self.rate.floor(&start) {
                let mut eta = BTreeMap::new();
                for p in mp.iter().filter(|p| self.labels[p]) {
                    *eta.entry(start_site(&rects[*p])?).or_insert(0) += 1;
                }
                deleted = u > self.rate.rate(&start, &eta);
            }
            self.labels.insert(top, !deleted);
            stack.pop();
        }
        Ok(self.labels[&idx])
    }
}

fn start_site(r: &Rect) -> Result<Site> {
    r.site_start
        .ok_or_else(|| invalid("μ-mode needs positions at the start of the window"))
}

/// (I, μ)-trimming with `I = [-t, 0]`, where `-t` is the start of the
/// realized window: labels every slice rectangle using both I-parents and
/// μ-parents, deleting a rectangle when the kept predecessors alive at its
/// birth complete the pattern with it, or when its mark exceeds the birth
/// rate evaluated on the time `-t` positions of its kept μ-parents.
///
/// A rectangle with `U ≤ α_i/ρ` has no μ-parents and passes the rate test.
/// The candidate itself is not part of the configuration c_i is evaluated
/// on.
pub fn trim_i_mu<R: Realization>(
    real: &mut R,
    pattern: &PatternSpec,
    rate: &dyn BirthRate,
    budget: usize,
) -> Result<TrimOutcome> {
    let mut support = pattern.support();
    let mut target = real.target().to_vec();
    support.sort();
    target.sort();
    if support != target {
        return Err(invalid(
            "realization visits were computed for a different support",
        ));
    }
    let mut t = MuTrimmer {
        lo: real.window_start(),
        level: pattern.level(),
        budget,
        rate,
        labels: HashMap::new(),
        parents: HashMap::new(),
    };
    let mut out = TrimOutcome {
        kept: Vec::new(),
        deleted: Vec::new(),
        explored: 0,
    };
    for idx in real.slice_roots() {
        if t.label(real, idx)? {
            out.kept.push(idx);
        } else {
            out.deleted.push(idx);
        }
    }
    out.explored = t.labels.len();
    Ok(out)
}

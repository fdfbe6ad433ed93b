//! Projected clans: the clan of a rectangle seen through its visit-time
//! hull at the origin, generated as a branching process.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::estimators::Moments;
use crate::rng::{self, StreamRng};

use super::types::ProjectedMark;

const CLAN_TAG: u64 = 0x434c_414e;

/// Empirical law of σ with uniform and size-biased draws.
#[derive(Clone, Debug)]
pub struct SigmaPool {
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SigmaPool {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid(
                "σ pool must be a nonempty list of finite nonnegative values",
            ));
        }
        let mut acc = 0.0;
        let cumulative = values
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Ok(SigmaPool { values, cumulative })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.cumulative[self.values.len() - 1] / self.values.len() as f64
    }

    pub fn draw(&self, r: &mut StreamRng) -> f64 {
        let k = ((rng::uniform(r) * self.values.len() as f64) as usize).min(self.values.len() - 1);
        self.values[k]
    }

    /// Draw with probability proportional to σ.
    pub fn draw_size_biased(&self, r: &mut StreamRng) -> f64 {
        let total = self.cumulative[self.values.len() - 1];
        let x = rng::uniform(r) * total;
        let k = self
            .cumulative
            .partition_point(|&c| c <= x)
            .min(self.values.len() - 1);
        self.values[k]
    }
}

/// Bad points: an independent Poisson process on `s ≥ 0` with intensity
/// ρc₀e^{−β₁s} ds g_σ(σ)dσ in the projected coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BadPointConfig {
    pub c0: f64,
    pub beta1: f64,
}

/// Parameters of the projected clan sampler.
#[derive(Clone, Debug)]
pub struct ClanConfig {
    pub rho: f64,
    /// Escape probability P_{0,0}(H_0 = ∞): projected marks arrive at rate
    /// ρ·q per unit s.
    pub q_esc: f64,
    pub pool: Arc<SigmaPool>,
    /// Cap on clan members.
    pub budget: usize,
    pub bad: Option<BadPointConfig>,
}

/// One member of a projected clan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClanNode {
    pub mark: ProjectedMark,
    pub birth: f64,
    pub lifetime: f64,
    pub generation: usize,
    /// Member whose parent domain produced this one.
    pub parent: Option<usize>,
}

impl ClanNode {
    /// Whether `(mark, birth, lifetime)` lies in the parent domain of `self`:
    /// born earlier, alive at this birth, interaction intervals overlapping.
    fn parent_domain_contains(&self, mark: &ProjectedMark, birth: f64, lifetime: f64) -> bool {
        birth < self.birth && birth + lifetime > self.birth && self.mark.overlaps(mark)
    }
}

/// A backward clan in projected coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Clan {
    pub nodes: Vec<ClanNode>,
    /// Members per generation, the root being generation 0.
    pub generation_sizes: Vec<usize>,
    /// Union of the interaction intervals, sorted and disjoint.
    pub width: Vec<(f64, f64)>,
    /// False when the budget ran out; the clan is then unusable.
    pub complete: bool,
    /// Whether some bad point falls in a member's parent domain.
    pub bad_parent: Option<bool>,
}

impl Clan {
    pub fn root(&self) -> &ClanNode {
        &self.nodes[0]
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn width_length(&self) -> f64 {
        self.width.iter().map(|(a, b)| b - a).sum()
    }

    pub fn covers(&self, t: f64) -> bool {
        self.width.iter().any(|&(a, b)| a <= t && t <= b)
    }
}

fn union(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Points of the projected process in the parent domain of `x`, before
/// removal of previously explored domains.
fn parent_candidates(
    cfg: &ClanConfig,
    x: &ClanNode,
    r: &mut StreamRng,
) -> Vec<(ProjectedMark, f64, f64)> {
    let rate = cfg.rho * cfg.q_esc;
    let mut out = Vec::new();
    let alive_at_birth = |r: &mut StreamRng| {
        let age = rng::exp1(r);
        (x.birth - age, age + rng::exp1(r))
    };
    // Marks starting inside [s, s + σ].
    let n = rng::poisson(r, rate * x.mark.sigma);
    for _ in 0..n {
        let s = x.mark.s + rng::uniform(r) * x.mark.sigma;
        let sigma = cfg.pool.draw(r);
        let (b, l) = alive_at_birth(r);
        out.push((ProjectedMark { s, sigma }, b, l));
    }
    // Marks starting before s and reaching it: total mass ρq·E[σ], with σ
    // size-biased and the gap uniform on [0, σ].
    let n = rng::poisson(r, rate * cfg.pool.mean());
    for _ in 0..n {
        let sigma = cfg.pool.draw_size_biased(r);
        let s = x.mark.s - rng::uniform(r) * sigma;
        let (b, l) = alive_at_birth(r);
        out.push((ProjectedMark { s, sigma }, b, l));
    }
    out
}

/// Bad points in the parent domain of `x`, drawn from the envelope
/// ρc₀e^{−β₁s} on `[0, s_x + σ_x]` and kept when they overlap.
fn bad_candidates(
    cfg: &ClanConfig,
    bad: &BadPointConfig,
    x: &ClanNode,
    r: &mut StreamRng,
) -> Vec<(ProjectedMark, f64, f64)> {
    let hi = x.mark.end();
    if hi <= 0.0 {
        return Vec::new();
    }
    let mass = cfg.rho * bad.c0 * (1.0 - (-bad.beta1 * hi).exp()) / bad.beta1;
    let n = rng::poisson(r, mass);
    let mut out = Vec::new();
    for _ in 0..n {
        // Inverse transform of the truncated exponential on [0, hi].
        let u = rng::uniform(r);
        let s = -(1.0 - u * (1.0 - (-bad.beta1 * hi).exp())).ln() / bad.beta1;
        let sigma = cfg.pool.draw(r);
        let age = rng::exp1(r);
        let (b, l) = (x.birth - age, age + rng::exp1(r));
        let m = ProjectedMark { s, sigma };
        if m.overlaps(&x.mark) {
            out.push((m, b, l));
        }
    }
    out
}

/// Samples the backward clan of a root mark in projected coordinates,
/// generation by generation.
///
/// Parents of a member are the points of the projected process in its
/// parent domain that do not lie in the domain of a member explored
/// earlier, so every point of the union of domains is generated once.
pub fn sample_projected_clan(
    cfg: &ClanConfig,
    root: ProjectedMark,
    birth: f64,
    lifetime: f64,
    seed: u64,
    replica: u64,
) -> Result<Clan> {
    if !(cfg.rho >= 0.0)
        || !(cfg.q_esc >= 0.0 && cfg.q_esc <= 1.0)
        || !(root.sigma >= 0.0)
        || !(lifetime > 0.0)
    {
        return Err(invalid("invalid clan parameters"));
    }
    let mut r = rng::stream(seed, replica, rng::stream_id(CLAN_TAG, &[]));
    let mut bad_r = rng::stream(seed, replica, rng::stream_id(CLAN_TAG, &[1]));
    let mut nodes = vec![ClanNode {
        mark: root,
        birth,
        lifetime,
        generation: 0,
        parent: None,
    }];
    let mut generation_sizes = vec![1];
    let mut bad_parent = cfg.bad.map(|_| false);
    let mut complete = true;
    let mut next = 0;
    'explore: while next < nodes.len() {
        let x = nodes[next];
        for (m, b, l) in parent_candidates(cfg, &x, &mut r) {
            if nodes[..next]
                .iter()
                .any(|y| y.parent_domain_contains(&m, b, l))
            {
                continue;
            }
            if nodes.len() >= cfg.budget {
                complete = false;
                break 'explore;
            }
            let g = x.generation + 1;
            if generation_sizes.len() <= g {
                generation_sizes.push(0);
            }
            generation_sizes[g] += 1;
            nodes.push(ClanNode {
                mark: m,
                birth: b,
                lifetime: l,
                generation: g,
                parent: Some(next),
            });
        }
        if let (Some(bad), Some(false)) = (cfg.bad.as_ref(), bad_parent) {
            let hit = bad_candidates(cfg, bad, &x, &mut bad_r)
                .iter()
                .any(|(m, b, l)| {
                    !nodes[..next]
                        .iter()
                        .any(|y| y.parent_domain_contains(m, *b, *l))
                });
            bad_parent = Some(hit);
        }
        next += 1;
    }
    let width = union(nodes.iter().map(|n| (n.mark.s, n.mark.end())).collect());
    Ok(Clan {
        nodes,
        generation_sizes,
        width,
        complete,
        bad_parent,
    })
}

/// Per-generation sizes and width coverage of a sample of clans.
#[derive(Clone, Debug, PartialEq)]
pub struct ClanStatistics {
    pub clans: usize,
    pub incomplete: usize,
    /// Mean size of generation k, with standard errors.
    pub generation_means: Vec<(f64, f64)>,
    /// Grid of offsets t ≥ 0.
    pub grid: Vec<f64>,
    /// Coverage P̂(s₀ + t ∈ W) and P̂(s₀ − t ∈ W) with standard errors.
    pub psi_after: Vec<(f64, f64)>,
    pub psi_before: Vec<(f64, f64)>,
    pub mean_size: (f64, f64),
    /// Frequency of a bad parent, when recorded.
    pub bad_parent: Option<(f64, f64)>,
}

/// Summaries of complete clans; incomplete ones are counted and skipped.
pub fn clan_statistics(clans: &[Clan], generations: usize, grid: &[f64]) -> Result<ClanStatistics> {
    let usable: Vec<&Clan> = clans.iter().filter(|c| c.complete).collect();
    if usable.is_empty() {
        return Err(invalid("no complete clans"));
    }
    let gens: Vec<(f64, f64)> = (0..=generations)
        .map(|k| {
            let mut m = Moments::default();
            usable
                .iter()
                .for_each(|c| m.push(c.generation_sizes.get(k).copied().unwrap_or(0) as f64));
            (m.mean(), m.se())
        })
        .collect();
    let coverage = |sign: f64| -> Vec<(f64, f64)> {
        grid.iter()
            .map(|&t| {
                let mut m = Moments::default();
                usable.iter().for_each(|c| {
                    m.push(f64::from(u8::from(c.covers(c.root().mark.s + sign * t))))
                });
                (m.mean(), m.se())
            })
            .collect()
    };
    let mut size = Moments::default();
    usable.iter().for_each(|c| size.push(c.size() as f64));
    let bad = if usable.iter().all(|c| c.bad_parent.is_some()) {
        let mut m = Moments::default();
        usable
            .iter()
            .for_each(|c| m.push(f64::from(u8::from(c.bad_parent == Some(true)))));
        Some((m.mean(), m.se()))
    } else {
        None
    };
    Ok(ClanStatistics {
        clans: usable.len(),
        incomplete: clans.len() - usable.len(),
        generation_means: gens,
        grid: grid.to_vec(),
        psi_after: coverage(1.0),
        psi_before: coverage(-1.0),
        mean_size: (size.mean(), size.se()),
        bad_parent: bad,
    })
}

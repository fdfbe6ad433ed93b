use std::collections::BTreeMap;

use crate::error::{invalid, Result};
use crate::lossnet::Occupation;
use crate::oracle::Bracket;
use crate::site::Site;

/// Power sums of one site's counts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CountMoments {
    pub n: u64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
}

impl CountMoments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.s1 += x;
        self.s2 += x * x;
        self.s3 += x * x * x;
        self.s4 += x * x * x * x;
    }

    pub fn merge(&mut self, o: &CountMoments) {
        self.n += o.n;
        self.s1 += o.s1;
        self.s2 += o.s2;
        self.s3 += o.s3;
        self.s4 += o.s4;
    }

    pub fn mean(&self) -> f64 {
        self.s1 / self.n as f64
    }

    /// Central moments of orders 2, 3, 4 (plug-in).
    fn central(&self) -> (f64, f64, f64) {
        let n = self.n as f64;
        let m = self.mean();
        let (e2, e3, e4) = (self.s2 / n, self.s3 / n, self.s4 / n);
        let c2 = e2 - m * m;
        let c3 = e3 - 3.0 * m * e2 + 2.0 * m.powi(3);
        let c4 = e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4);
        (c2.max(0.0), c3, c4.max(0.0))
    }

    /// Unbiased variance.
    pub fn var(&self) -> f64 {
        let n = self.n as f64;
        self.central().0 * n / (n - 1.0)
    }

    /// Variance-to-mean ratio and its delta-method standard error.
    pub fn dispersion(&self) -> (f64, f64) {
        let n = self.n as f64;
        let m = self.mean();
        if m <= 0.0 {
            return (f64::NAN, f64::NAN);
        }
        let (c2, c3, c4) = self.central();
        let r = self.var() / m;
        let v = ((c4 - c2 * c2) - 2.0 * r * c3 + r * r * c2) / (n * m * m);
        (r, v.max(0.0).sqrt())
    }
}

/// Per-site moments of a sample of occupations.
pub fn site_moments(samples: &[Occupation], sites: &[Site]) -> BTreeMap<Site, CountMoments> {
    let mut out: BTreeMap<Site, CountMoments> = sites
        .iter()
        .map(|s| (*s, CountMoments::default()))
        .collect();
    for o in samples {
        for (s, m) in out.iter_mut() {
            m.push(f64::from(o.get(s)));
        }
    }
    out
}

/// Comparison at one site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiteComparison {
    pub site: Site,
    pub mean: f64,
    pub var: f64,
    pub target: f64,
    pub z: f64,
    pub dispersion: f64,
    pub dispersion_se: f64,
}

/// Per-site comparisons with aggregates max |z| and the L¹ distance of
/// the means.
#[derive(Clone, Debug, PartialEq)]
pub struct YaglomReport {
    pub n: usize,
    pub sites: Vec<SiteComparison>,
    pub max_abs_z: f64,
    pub l1_means: f64,
}

const MIN_REPLICAS: usize = 100;

fn report(n: usize, sites: Vec<SiteComparison>) -> YaglomReport {
    let max_abs_z = sites.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    let l1_means = sites.iter().map(|c| (c.mean - c.target).abs()).sum();
    YaglomReport {
        n,
        sites,
        max_abs_z,
        l1_means,
    }
}

/// Compares slices with a product Poisson law given by intensity brackets.
/// The z-score uses the Poisson variance of the target and measures the
/// distance from the mean to the bracket.
pub fn yaglom_distance(
    samples: &[Occupation],
    sites: &[Site],
    law: &dyn Fn(&Site) -> Bracket,
) -> Result<YaglomReport> {
    if samples.len() < MIN_REPLICAS {
        return Err(invalid(format!(
            "need at least {MIN_REPLICAS} replicas, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let moments = site_moments(samples, sites);
    let cmp = moments
        .iter()
        .map(|(s, m)| {
            let b = law(s);
            let mean = m.mean();
            let target = b.mid();
            let gap = if mean > b.upper {
                mean - b.upper
            } else if mean < b.lower {
                mean - b.lower
            } else {
                0.0
            };
            let se = (target.max(1.0 / n) / n).sqrt();
            let (dispersion, dispersion_se) = m.dispersion();
            SiteComparison {
                site: *s,
                mean,
                var: m.var(),
                target,
                z: gap / se,
                dispersion,
                dispersion_se,
            }
        })
        .collect();
    Ok(report(samples.len(), cmp))
}

/// Compares two independent samples of slices site by site (Welch z).
/// `target` holds the means of `reference`.
pub fn yaglom_distance_samples(
    samples: &[Occupation],
    reference: &[Occupation],
    sites: &[Site],
) -> Result<YaglomReport> {
    if samples.len() < MIN_REPLICAS || reference.len() < MIN_REPLICAS {
        return Err(invalid(format!(
            "need at least {MIN_REPLICAS} replicas in each sample"
        )));
    }
    let a = site_moments(samples, sites);
    let b = site_moments(reference, sites);
    let cmp = a
        .iter()
        .map(|(s, ma)| {
            let mb = &b[s];
            let se = (ma.var() / ma.n as f64 + mb.var() / mb.n as f64).sqrt();
            let d = ma.mean() - mb.mean();
            let z = if se > 0.0 {
                d / se
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            let (dispersion, dispersion_se) = ma.dispersion();
            SiteComparison {
                site: *s,
                mean: ma.mean(),
                var: ma.var(),
                target: mb.mean(),
                z,
                dispersion,
                dispersion_se,
            }
        })
        .collect();
    Ok(report(samples.len(), cmp))
}

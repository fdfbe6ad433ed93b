use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

use crate::error::{invalid, Error, Result};
use crate::kernel::Kernel;
use crate::site::{self, LatticeBox, Site};

use super::Bracket;

const N_MAX_BUDGET: usize = 20_000;

/// P(N > n) for N ~ Poisson(t).
fn poisson_sf(t: f64, n: usize) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    Poisson::new(t).expect("positive mean").sf(n as u64)
}

fn poisson_pmf(t: f64, n: usize) -> f64 {
    if t <= 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    Poisson::new(t).expect("positive mean").pmf(n as u64)
}

/// Upper bound on Σ_{i ∉ B} P_i(H_Λ ≤ t) for the box B of radius `radius`:
/// Σ_λ E[(N_t + 1) 1{N_t R ≥ radius + 1 − |λ|∞}].
pub fn poisson_range_bound(k: &Kernel, target: &[Site], radius: i32, t: f64) -> f64 {
    let r = k.range() as i32;
    target
        .iter()
        .map(|l| {
            let gap = radius + 1 - site::linf(l);
            if gap <= 0 {
                return f64::INFINITY;
            }
            let m = ((gap + r - 1) / r) as usize;
            let tail = |n: usize| if n == 0 { 1.0 } else { poisson_sf(t, n - 1) };
            tail(m) + t * tail(m.saturating_sub(1))
        })
        .sum()
}

/// Survival probabilities P_x(H_Λ > t) on a box, for several times.
///
/// Uniformization: with S_n(x) the probability that the first n jumps avoid
/// Λ (position at time zero included), P_x(H_Λ > t) = Σ_n π_n(t) S_n(x).
/// The box radius is r_Λ + n_max·R, so outside values are exactly 1 for every
/// n ≤ n_max and the only truncation is the Poisson tail beyond n_max.
#[derive(Clone, Debug)]
pub struct SurvivalField {
    bx: LatticeBox,
    pub times: Vec<f64>,
    pub n_max: usize,
    lower: Vec<Vec<f64>>,
    /// Per-time slack P(N_t > n_max) added to the lower value.
    pub tail: Vec<f64>,
    /// Bracket of Σ_x P_x(H_Λ ≤ t) per time.
    pub hit_mass: Vec<Bracket>,
}

fn check_times(times: &[f64], tail_tol: f64) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(invalid("times must be finite and nonnegative"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("time grid must be nondecreasing"));
    }
    if !(tail_tol > 0.0) {
        return Err(invalid("tail tolerance must be positive"));
    }
    Ok(())
}

fn choose_n_max(t_max: f64, n_target: usize, tail_tol: f64) -> Result<usize> {
    let mass_tail = |n: usize| {
        n_target as f64 * (poisson_sf(t_max, n) + t_max * poisson_sf(t_max, n.saturating_sub(1)))
    };
    let mut n = 0;
    while poisson_sf(t_max, n) >= tail_tol / 2.0 || mass_tail(n) >= tail_tol / 2.0 {
        n += 1;
        if n > N_MAX_BUDGET {
            return Err(Error::BudgetExceeded(format!(
                "tail tolerance {tail_tol:e} needs more than {N_MAX_BUDGET} jumps at t = {t_max}"
            )));
        }
    }
    Ok(n)
}

fn uniformize(
    k: &Kernel,
    target: &[Site],
    times: &[f64],
    tail_tol: f64,
    keep_fields: bool,
) -> Result<SurvivalField> {
    if target.is_empty() {
        return Err(invalid("target set must be nonempty"));
    }
    check_times(times, tail_tol)?;
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let n_max = choose_n_max(t_max, target.len(), tail_tol)?;
    let r_target = target.iter().map(site::linf).max().unwrap_or(0);
    let radius = r_target + (n_max as i32) * k.range() as i32;
    let bx = LatticeBox::new(k.dim(), radius);
    let n = bx.len();
    let m = k.offsets().len();
    let probs = k.probs().to_vec();
    let mut nbr = vec![u32::MAX; n * m];
    for i in 0..n {
        let x = bx.site_at(i);
        for (o, off) in k.offsets().iter().enumerate() {
            if let Some(j) = bx.index(&site::add(&x, off)) {
                nbr[i * m + o] = j as u32;
            }
        }
    }
    let mut is_target = vec![false; n];
    for l in target {
        is_target[bx.index(l).expect("target in box")] = true;
    }
    let mut s: Vec<f64> = is_target
        .iter()
        .map(|&t| if t { 0.0 } else { 1.0 })
        .collect();
    let mut next = vec![0.0; n];
    let mut fields: Vec<Vec<f64>> = if keep_fields {
        vec![vec![0.0; n]; times.len()]
    } else {
        Vec::new()
    };
    let mut mass = vec![0.0; times.len()];
    for step in 0..=n_max {
        let weights: Vec<f64> = times.iter().map(|&t| poisson_pmf(t, step)).collect();
        let missing: f64 = s.iter().map(|v| 1.0 - v).sum();
        for (ti, w) in weights.iter().enumerate() {
            mass[ti] += w * missing;
            if keep_fields && *w > 0.0 {
                for (f, v) in fields[ti].iter_mut().zip(&s) {
                    *f += w * v;
                }
            }
        }
        if step == n_max {
            break;
        }
        for i in 0..n {
            if is_target[i] {
                next[i] = 0.0;
                continue;
            }
            let mut acc = 0.0;
            for o in 0..m {
                let j = nbr[i * m + o];
                acc += probs[o] * if j == u32::MAX { 1.0 } else { s[j as usize] };
            }
            next[i] = acc;
        }
        std::mem::swap(&mut s, &mut next);
    }
    let tail: Vec<f64> = times.iter().map(|&t| poisson_sf(t, n_max)).collect();
    let hit_mass = times
        .iter()
        .zip(&mass)
        .map(|(&t, &lo)| {
            let slack = target.len() as f64
                * (poisson_sf(t, n_max) + t * poisson_sf(t, n_max.saturating_sub(1)));
            Bracket::new(lo, lo + slack, "uniformization")
        })
        .collect();
    Ok(SurvivalField {
        bx,
        times: times.to_vec(),
        n_max,
        lower: fields,
        tail,
        hit_mass,
    })
}

/// Survival fields for each requested time, with per-value error ≤ tail_tol.
pub fn survival_field(
    k: &Kernel,
    target: &[Site],
    times: &[f64],
    tail_tol: f64,
) -> Result<SurvivalField> {
    uniformize(k, target, times, tail_tol, true)
}

/// Brackets of Σ_x P_x(H_Λ ≤ t) over all of Z^d, one per time.
pub fn hit_mass(k: &Kernel, target: &[Site], times: &[f64], tail_tol: f64) -> Result<Vec<Bracket>> {
    Ok(uniformize(k, target, times, tail_tol, false)?.hit_mass)
}

impl SurvivalField {
    pub fn lattice_box(&self) -> &LatticeBox {
        &self.bx
    }

    /// Bracket of P_x(H_Λ > t) for the time with index `ti`.
    pub fn bracket(&self, ti: usize, x: &Site) -> Bracket {
        let tail = self.tail[ti];
        match self.bx.index(x) {
            Some(i) => {
                let lo = self.lower[ti][i];
                Bracket::new(lo, (lo + tail).min(1.0), "uniformization")
            }
            None => Bracket::new(1.0 - tail, 1.0, "uniformization"),
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.bx.sites()
    }
}

/// P_{0,i}(H_Λ > t) along a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalCurve {
    pub site: Site,
    pub target: Vec<Site>,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub error_bounds: Vec<f64>,
}

/// Survival curve of one starting site; values are bracket midpoints made
/// nonincreasing, errors are half-widths.
pub fn survival_curve(
    k: &Kernel,
    target: &[Site],
    i: &Site,
    grid: &[f64],
    tail_tol: f64,
) -> Result<SurvivalCurve> {
    let f = survival_field(k, target, grid, tail_tol)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut errs = Vec::with_capacity(grid.len());
    let mut prev = f64::INFINITY;
    for ti in 0..grid.len() {
        let b = f.bracket(ti, i);
        let mid = b.mid();
        let v = mid.min(prev);
        prev = v;
        values.push(v);
        errs.push(if v < mid { b.width() } else { b.width() / 2.0 });
    }
    Ok(SurvivalCurve {
        site: *i,
        target: target.to_vec(),
        grid: grid.to_vec(),
        values,
        error_bounds: errs,
    })
}

//! Transition kernels on Z^d: validation, duality, drift, the exponential
//! moment function Φ and its minimization.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::oracle::Bracket;
use crate::site::{self, Site, MAX_DIM};

/// Raw kernel description as read from a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub dim: usize,
    pub entries: Vec<(Vec<i32>, f64)>,
}

/// The standing assumptions a kernel must satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assumption {
    /// Nonnegative weights, no holding, weights sum to one.
    Stochastic,
    /// Finite range, offsets of the declared dimension.
    FiniteRange,
    /// Every site reachable from the origin.
    Irreducible,
    /// Nonzero drift. Flagged, never fatal at validation time.
    NonzeroDrift,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::Stochastic => "stochastic, no holding",
            Assumption::FiniteRange => "finite range",
            Assumption::Irreducible => "irreducible",
            Assumption::NonzeroDrift => "nonzero drift",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub assumption: Assumption,
    pub detail: String,
}

/// Outcome of a failed validation: every violated assumption is listed.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, v) in self.violations.iter().enumerate() {
            if n > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.assumption, v.detail)?;
        }
        Ok(())
    }
}

impl ValidationReport {
    pub fn violates(&self, a: Assumption) -> bool {
        self.violations.iter().any(|v| v.assumption == a)
    }
}

/// A validated finite-range kernel p(0, ·). Equality ignores entry order.
#[derive(Clone, Debug)]
pub struct Kernel {
    dim: usize,
    offsets: Vec<Site>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    range: u32,
    drift: [f64; MAX_DIM],
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.offsets.len() == other.offsets.len()
            && self.entries().all(|(o, p)| other.prob(o) == p)
    }
}

const NORMALIZATION_TOL: f64 = 1e-12;

/// Validates a raw kernel against the standing assumptions and records drift.
///
/// Duplicate offsets are merged. Zero drift is recorded on the kernel and
/// checked later by [`Kernel::require_drift`].
pub fn validate_kernel(spec: &KernelSpec) -> std::result::Result<Kernel, ValidationReport> {
    let mut violations = Vec::new();
    let mut push = |assumption, detail: String| violations.push(Violation { assumption, detail });
    let d = spec.dim;
    if d == 0 || d > MAX_DIM {
        push(
            Assumption::FiniteRange,
            format!("dimension {d} outside 1..={MAX_DIM}"),
        );
        return Err(ValidationReport { violations });
    }
    let mut offsets: Vec<Site> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    for (off, w) in &spec.entries {
        if off.len() != d {
            push(
                Assumption::FiniteRange,
                format!("offset {off:?} has length {} instead of {d}", off.len()),
            );
            continue;
        }
        if !w.is_finite() || *w < 0.0 {
            push(
                Assumption::Stochastic,
                format!("weight {w} of {off:?} is not a nonnegative number"),
            );
            continue;
        }
        if off.iter().all(|&c| c == 0) {
            push(
                Assumption::Stochastic,
                "zero offset present (p(i,i) must vanish)".into(),
            );
            continue;
        }
        if *w == 0.0 {
            continue;
        }
        let s = site::site(off);
        match offsets.iter().position(|o| *o == s) {
            Some(k) => probs[k] += w,
            None => {
                offsets.push(s);
                probs.push(*w);
            }
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        push(
            Assumption::Stochastic,
            format!("weights sum to {total}, not 1"),
        );
    }
    if offsets.is_empty() {
        push(
            Assumption::Irreducible,
            "no offset with positive weight".into(),
        );
    } else if let Some(detail) = irreducibility_defect(d, &offsets) {
        push(Assumption::Irreducible, detail);
    }
    if !violations.is_empty() {
        return Err(ValidationReport { violations });
    }
    Ok(Kernel::from_parts(d, offsets, probs))
}

impl Kernel {
    fn from_parts(dim: usize, offsets: Vec<Site>, probs: Vec<f64>) -> Kernel {
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        let range = offsets
            .iter()
            .map(|o| site::l1(o) as u32)
            .max()
            .unwrap_or(0);
        let mut drift = [0.0; MAX_DIM];
        for (o, p) in offsets.iter().zip(&probs) {
            for k in 0..dim {
                drift[k] += p * o[k] as f64;
            }
        }
        Kernel {
            dim,
            offsets,
            probs,
            cumulative,
            range,
            drift,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Maximal L1 norm of an offset.
    pub fn range(&self) -> u32 {
        self.range
    }

    pub fn offsets(&self) -> &[Site] {
        &self.offsets
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Site, f64)> {
        self.offsets.iter().zip(self.probs.iter().copied())
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift[..self.dim]
    }

    pub fn has_drift(&self) -> bool {
        self.drift().iter().any(|c| c.abs() > 1e-14)
    }

    /// Errors unless the kernel has nonzero drift, as conditioned experiments need.
    pub fn require_drift(&self) -> Result<()> {
        if self.has_drift() {
            Ok(())
        } else {
            Err(Error::InvalidKernel(
                "zero drift: kernel allowed for oracle use only".into(),
            ))
        }
    }

    /// The dual kernel p*(0, i) = p(0, −i).
    pub fn dual(&self) -> Kernel {
        Kernel::from_parts(
            self.dim,
            self.offsets.iter().map(site::neg).collect(),
            self.probs.clone(),
        )
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries().all(|(o, p)| {
            let m = site::neg(o);
            self.offsets
                .iter()
                .position(|x| *x == m)
                .is_some_and(|k| (self.probs[k] - p).abs() <= 1e-15)
        })
    }

    /// Maps a uniform variate in [0,1) to an offset.
    #[inline]
    pub fn offset_for(&self, u: f64) -> &Site {
        let x = u * self.cumulative[self.cumulative.len() - 1];
        for (k, c) in self.cumulative.iter().enumerate() {
            if x < *c {
                return &self.offsets[k];
            }
        }
        &self.offsets[self.offsets.len() - 1]
    }

    /// Probability p(0, i) of a single offset.
    pub fn prob(&self, offset: &Site) -> f64 {
        self.offsets
            .iter()
            .position(|o| o == offset)
            .map_or(0.0, |k| self.probs[k])
    }

    fn dot(&self, z: &[f64], o: &Site) -> f64 {
        (0..self.dim).map(|k| z[k] * o[k] as f64).sum()
    }

    /// Φ(z) = Σ_i p(0,i) e^{z·i}. Returns `f64::INFINITY` on overflow.
    ///
    /// When some exponent exceeds 500 in absolute value the sum is taken in
    /// shifted form e^m Σ p e^{z·i − m}.
    pub fn phi(&self, z: &[f64]) -> f64 {
        let dots: Vec<f64> = self.offsets.iter().map(|o| self.dot(z, o)).collect();
        let big = dots.iter().any(|x| x.abs() > 500.0);
        if !big {
            return dots.iter().zip(&self.probs).map(|(x, p)| p * x.exp()).sum();
        }
        let m = dots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = dots
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| p * (x - m).exp())
            .sum();
        let v = m + s.ln();
        if v > 709.0 {
            f64::INFINITY
        } else {
            v.exp()
        }
    }

    /// Analytic gradient Σ p i e^{z·i}.
    pub fn phi_gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (o, p) in self.entries() {
            let w = p * self.dot(z, o).exp();
            for k in 0..self.dim {
                g[k] += w * o[k] as f64;
            }
        }
        g
    }

    /// Analytic Hessian Σ p i iᵀ e^{z·i}, row-major.
    pub fn phi_hessian(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim;
        let mut h = vec![vec![0.0; d]; d];
        for (o, p) in self.entries() {
            let w = p * self.dot(z, o).exp();
            for a in 0..d {
                for b in 0..d {
                    h[a][b] += w * (o[a] * o[b]) as f64;
                }
            }
        }
        h
    }

    pub fn into_arc(self) -> Arc<Kernel> {
        Arc::new(self)
    }
}

/// Returns a description of why the offsets fail to generate Z^d as a
/// semigroup, or `None` when they do.
fn irreducibility_defect(d: usize, offsets: &[Site]) -> Option<String> {
    let det = lattice_index(d, offsets);
    if det != 1 {
        return Some(if det == 0 {
            "offsets span a proper subspace".to_string()
        } else {
            format!("offsets span a sublattice of index {det}")
        });
    }
    // The group is Z^d; the semigroup equals it iff every ±e_k is reachable.
    let range = offsets.iter().map(site::l1).max().unwrap_or(1);
    let radius = (4 * range * d as i32).max(4);
    let bx = site::LatticeBox::new(d, radius);
    let mut seen = vec![false; bx.len()];
    let start = bx.index(&site::ORIGIN).expect("origin in box");
    seen[start] = true;
    let mut queue = std::collections::VecDeque::from([site::ORIGIN]);
    while let Some(x) = queue.pop_front() {
        for o in offsets {
            let y = site::add(&x, o);
            if let Some(i) = bx.index(&y) {
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(y);
                }
            }
        }
    }
    for k in 0..d {
        for sign in [1, -1] {
            let mut e = site::ORIGIN;
            e[k] = sign;
            if !seen[bx.index(&e).expect("unit vector in box")] {
                return Some(format!(
                    "unit vector {} not reachable (support lies in a half-space)",
                    site::fmt_site(&e, d)
                ));
            }
        }
    }
    None
}

/// Index of the lattice generated by `offsets` in Z^d (0 when rank < d),
/// computed by integer row reduction.
fn lattice_index(d: usize, offsets: &[Site]) -> i64 {
    let mut rows: Vec<Vec<i64>> = offsets
        .iter()
        .map(|o| o[..d].iter().map(|&c| c as i64).collect())
        .collect();
    let mut det: i64 = 1;
    let mut r0 = 0;
    for col in 0..d {
        // Euclid on column `col` among rows r0.. until a single nonzero remains.
        loop {
            let mut nz: Vec<usize> = (r0..rows.len()).filter(|&r| rows[r][col] != 0).collect();
            if nz.len() <= 1 {
                break;
            }
            nz.sort_by_key(|&r| rows[r][col].abs());
            let p = nz[0];
            for &r in &nz[1..] {
                let q = rows[r][col] / rows[p][col];
                let pivot = rows[p].clone();
                for (x, y) in rows[r].iter_mut().zip(&pivot) {
                    *x -= q * y;
                }
            }
        }
        match (r0..rows.len()).find(|&r| rows[r][col] != 0) {
            Some(p) => {
                rows.swap(r0, p);
                det *= rows[r0][col].abs();
                r0 += 1;
            }
            None => return 0,
        }
    }
    det
}

/// Result of minimizing Φ.
#[derive(Clone, Debug, PartialEq)]
pub struct TiltSolution {
    pub z0: Vec<f64>,
    pub phi_min: f64,
    pub beta: f64,
    pub gradient_norm_at_z0: f64,
    pub iterations: usize,
    pub tol: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes Φ by damped Newton steps with backtracking, falling back to a
/// gradient step when the Newton direction is unusable.
pub fn minimize_phi(k: &Kernel, tol: f64) -> Result<TiltSolution> {
    if !(tol > 0.0) {
        return Err(crate::error::invalid("tolerance must be positive"));
    }
    const MAX_ITER: usize = 500;
    let d = k.dim();
    let mut z = vec![0.0; d];
    let mut f = k.phi(&z);
    for it in 0..MAX_ITER {
        let g = k.phi_gradient(&z);
        let gn = norm(&g);
        if gn <= tol {
            return Ok(TiltSolution {
                beta: 1.0 - f,
                phi_min: f,
                z0: z,
                gradient_norm_at_z0: gn,
                iterations: it,
                tol,
            });
        }
        let h = k.phi_hessian(&z);
        let hm = DMatrix::from_fn(d, d, |a, b| h[a][b]);
        let gv = DVector::from_column_slice(&g);
        let newton = hm.lu().solve(&(-&gv)).filter(|s| s.dot(&gv) < 0.0);
        let dir: Vec<f64> = match newton {
            Some(s) => s.iter().copied().collect(),
            None => g.iter().map(|x| -x).collect(),
        };
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..80 {
            let trial: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let ft = k.phi(&trial);
            // Near the minimum the decrease drops below the resolution of Φ;
            // a shrinking gradient then decides.
            let flat = ft.is_finite()
                && ft - f <= 8.0 * f64::EPSILON * f
                && norm(&k.phi_gradient(&trial)) < gn;
            if ft.is_finite() && ft <= f + 1e-4 * step * slope || flat {
                z = trial;
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Rounding floor reached: accept only if the gradient is already tiny.
            if gn <= tol * 1e3 {
                return Ok(TiltSolution {
                    beta: 1.0 - f,
                    phi_min: f,
                    z0: z,
                    gradient_norm_at_z0: gn,
                    iterations: it,
                    tol,
                });
            }
            return Err(Error::NonConvergence(format!(
                "line search failed at iteration {it} with gradient norm {gn:e}"
            )));
        }
    }
    Err(Error::NonConvergence(format!(
        "no convergence in {MAX_ITER} iterations"
    )))
}

/// β_d = min(β, escape probability), carried as a bracket.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaD {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub beta: f64,
    pub escape: Bracket,
}

pub fn beta_d(tilt: &TiltSolution, escape: Bracket) -> Result<BetaD> {
    if !(escape.upper > 0.0 && escape.upper <= 1.0 && escape.lower >= 0.0) {
        return Err(crate::error::invalid(format!(
            "escape probability bracket [{}, {}] not inside (0,1]",
            escape.lower, escape.upper
        )));
    }
    let b = tilt.beta;
    Ok(BetaD {
        value: b.min(escape.mid()),
        lower: b.min(escape.lower),
        upper: b.min(escape.upper),
        beta: b,
        escape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec1() -> KernelSpec {
        KernelSpec {
            dim: 1,
            entries: vec![(vec![1], 0.7), (vec![-1], 0.3)],
        }
    }

    #[test]
    fn lattice_index_detects_sublattices() {
        assert_eq!(lattice_index(1, &[site::site(&[2])]), 2);
        assert_eq!(lattice_index(1, &[site::site(&[2]), site::site(&[-3])]), 1);
        assert_eq!(
            lattice_index(2, &[site::site(&[1, 1]), site::site(&[1, -1])]),
            2
        );
        assert_eq!(lattice_index(2, &[site::site(&[1, 0])]), 0);
    }

    #[test]
    fn one_sided_support_is_reducible() {
        let r = validate_kernel(&KernelSpec {
            dim: 1,
            entries: vec![(vec![1], 1.0)],
        })
        .unwrap_err();
        assert!(r.violates(Assumption::Irreducible));
    }

    #[test]
    fn duplicate_offsets_merge() {
        let k = validate_kernel(&KernelSpec {
            dim: 1,
            entries: vec![(vec![1], 0.5), (vec![1], 0.2), (vec![-1], 0.3)],
        })
        .unwrap();
        assert_eq!(k, validate_kernel(&spec1()).unwrap());
    }

    #[test]
    fn offset_sampler_respects_cumulative() {
        let k = validate_kernel(&spec1()).unwrap();
        assert_eq!(k.offset_for(0.0)[0], 1);
        assert_eq!(k.offset_for(0.69)[0], 1);
        assert_eq!(k.offset_for(0.71)[0], -1);
    }
}

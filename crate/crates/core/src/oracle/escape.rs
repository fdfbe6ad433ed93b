//! Escape and hitting probabilities from a lattice harmonic solve with
//! rigorous two-sided brackets.

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::site::{self, LatticeBox, Site};
use crate::walk::{Certifier, MartingaleCertifier};

use super::Bracket;

/// Bracketed escape probabilities h(x) = P_x(H_Λ = ∞) on an L∞ box.
///
/// The harmonic system is solved twice by Gauss–Seidel sweeps: once from
/// below with outer boundary values set to a certified lower bound of the
/// escape probability (the exponential supermartingale bound, often 0), once
/// from above with outer boundary values 1. Both iterations are monotone,
/// so the bracket is valid after every sweep.
#[derive(Clone, Debug)]
pub struct EscapeField {
    kernel: Kernel,
    bx: LatticeBox,
    target: Vec<Site>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    outside: MartingaleCertifier,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 200_000;

/// Solves on the box of the given radius.
pub fn escape_probability(k: &Kernel, target: &[Site], box_radius: i32) -> Result<EscapeField> {
    if target.is_empty() {
        return Err(crate::error::invalid("target set must be nonempty"));
    }
    let d = k.dim();
    let bx = LatticeBox::new(d, box_radius);
    if target.iter().any(|l| !bx.contains(l)) {
        return Err(crate::error::invalid("box must contain the target set"));
    }
    let outside = MartingaleCertifier::new(k, target, 0.0);
    let n = bx.len();
    let m = k.offsets().len();
    let probs = k.probs().to_vec();
    let mut nbr = vec![u32::MAX; n * m];
    let mut out_lo = vec![0.0; n * m];
    let mut is_target = vec![false; n];
    for l in target {
        is_target[bx.index(l).expect("target inside box")] = true;
    }
    for i in 0..n {
        let x = bx.site_at(i);
        for (o, off) in k.offsets().iter().enumerate() {
            let y = site::add(&x, off);
            match bx.index(&y) {
                Some(j) => nbr[i * m + o] = j as u32,
                None => out_lo[i * m + o] = (1.0 - outside.return_bound(&y)).max(0.0),
            }
        }
    }
    // Downstream sites first: information from the far boundary travels
    // against the drift in a single sweep.
    let drift = k.drift().to_vec();
    let mut order: Vec<usize> = (0..n).filter(|&i| !is_target[i]).collect();
    let proj = |i: usize| -> f64 {
        let x = bx.site_at(i);
        (0..d).map(|a| drift[a] * x[a] as f64).sum()
    };
    order.sort_by(|&a, &b| proj(b).total_cmp(&proj(a)).then(a.cmp(&b)));
    let mut lower = vec![0.0; n];
    let mut upper: Vec<f64> = is_target
        .iter()
        .map(|&t| if t { 0.0 } else { 1.0 })
        .collect();
    let mut sweeps = 0;
    loop {
        let mut delta = 0.0f64;
        for &i in &order {
            let mut lo = 0.0;
            let mut up = 0.0;
            for o in 0..m {
                let j = nbr[i * m + o];
                if j == u32::MAX {
                    lo += probs[o] * out_lo[i * m + o];
                    up += probs[o];
                } else {
                    lo += probs[o] * lower[j as usize];
                    up += probs[o] * upper[j as usize];
                }
            }
            delta = delta.max((lo - lower[i]).abs()).max((up - upper[i]).abs());
            lower[i] = lo;
            upper[i] = up.max(lo);
        }
        sweeps += 1;
        if delta < 1e-15 {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NonConvergence(format!(
                "harmonic solve on radius {box_radius}: change {delta:e} after {sweeps} sweeps"
            )));
        }
    }
    Ok(EscapeField {
        kernel: k.clone(),
        bx,
        target: target.to_vec(),
        lower,
        upper,
        outside,
        sweeps,
    })
}

/// Doubles the box radius until every query site has bracket width ≤ `tol`.
pub fn escape_probability_adaptive(
    k: &Kernel,
    target: &[Site],
    query: &[Site],
    tol: f64,
    max_radius: i32,
) -> Result<EscapeField> {
    let reach = target
        .iter()
        .chain(query)
        .map(site::linf)
        .max()
        .unwrap_or(0);
    let mut r = (reach + 4 * k.range() as i32).max(8);
    loop {
        let f = escape_probability(k, target, r)?;
        let width = query
            .iter()
            .map(|q| f.bracket(q).width())
            .chain(std::iter::once(f.after_first_step(&site::ORIGIN).width()))
            .fold(0.0f64, f64::max);
        if width <= tol {
            return Ok(f);
        }
        if r >= max_radius {
            return Err(Error::BudgetExceeded(format!(
                "escape bracket width {width:e} > {tol:e} at maximal radius {r}"
            )));
        }
        r = (2 * r).min(max_radius);
    }
}

impl EscapeField {
    pub fn radius(&self) -> i32 {
        self.bx.radius
    }

    pub fn lattice_box(&self) -> &LatticeBox {
        &self.bx
    }

    pub fn target_sites(&self) -> &[Site] {
        &self.target
    }

    /// Bracket of P_x(H_Λ = ∞).
    pub fn bracket(&self, x: &Site) -> Bracket {
        match self.bx.index(x) {
            Some(i) => Bracket::new(self.lower[i], self.upper[i], "harmonic"),
            None => Bracket::new(
                (1.0 - self.outside.return_bound(x)).max(0.0),
                1.0,
                "supermartingale",
            ),
        }
    }

    /// Bracket of P_x(H_Λ < ∞).
    pub fn hit_bracket(&self, x: &Site) -> Bracket {
        self.bracket(x).complement()
    }

    /// Escape probability after one jump from `x`: Σ_j p(x,j) h(j).
    pub fn after_first_step(&self, x: &Site) -> Bracket {
        let (mut lo, mut up) = (0.0, 0.0);
        for (o, p) in self.kernel.entries() {
            let b = self.bracket(&site::add(x, o));
            lo += p * b.lower;
            up += p * b.upper;
        }
        Bracket::new(lo, up.max(lo), "harmonic")
    }
}

/// Escape certification from harmonic brackets: the return probability
/// from `x` is bounded by the upper end of the hitting bracket.
#[derive(Clone, Debug)]
pub struct BracketCertifier {
    field: EscapeField,
    epsilon: f64,
}

impl EscapeField {
    pub fn certifier(self, epsilon: f64) -> BracketCertifier {
        BracketCertifier {
            field: self,
            epsilon,
        }
    }
}

impl Certifier for BracketCertifier {
    fn return_bound(&self, x: &Site) -> f64 {
        self.field.hit_bracket(x).upper
    }

    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn target(&self) -> &[Site] {
        &self.field.target
    }
}

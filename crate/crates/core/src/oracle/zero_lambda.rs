//! Closed forms for the zero pattern: the conditioned slice is a product
//! Poisson law thinned by non-hitting probabilities.

use crate::error::{invalid, Result};
use crate::kernel::Kernel;
use crate::site::Site;

use super::{
    escape_probability_adaptive, survival_field, Bracket, EscapeField, Horizon, SurvivalField,
};

/// Poisson intensities ρ·P*_{0,i}(H_Λ > t) of the conditioned product law.
#[derive(Clone, Debug)]
pub struct ProductLaw {
    pub rho: f64,
    pub horizon: Horizon,
    source: LawSource,
}

#[derive(Clone, Debug)]
enum LawSource {
    Finite(SurvivalField),
    Infinite(EscapeField),
}

impl ProductLaw {
    /// Intensity bracket at site `i`.
    pub fn intensity(&self, i: &Site) -> Bracket {
        let b = match &self.source {
            LawSource::Finite(f) => f.bracket(0, i),
            LawSource::Infinite(e) => e.bracket(i),
        };
        Bracket::new(self.rho * b.lower, self.rho * b.upper, b.method)
    }
}

/// Product law of the slice conditioned on avoiding Λ up to `horizon`,
/// computed with the dual kernel. For the infinite horizon the escape
/// bracket of the dual walk is used, with width at most `tol` on the sites
/// of `Λ` and their neighbours.
pub fn zero_lambda_product_law(
    k: &Kernel,
    target: &[Site],
    rho: f64,
    horizon: Horizon,
    tol: f64,
) -> Result<ProductLaw> {
    if !(rho > 0.0) {
        return Err(invalid("density must be positive"));
    }
    let dual = k.dual();
    let source = match horizon {
        Horizon::Finite(t) => LawSource::Finite(survival_field(&dual, target, &[t], tol)?),
        Horizon::Infinite => {
            LawSource::Infinite(escape_probability_adaptive(&dual, target, target, tol, 64)?)
        }
    };
    Ok(ProductLaw {
        rho,
        horizon,
        source,
    })
}

/// P_{ν_ρ}(τ̂ > t) = exp(−ρ Σ_i P_{0,i}(H_Λ ≤ t)) for each time, bracketed.
pub fn zero_lambda_tau_survival(
    k: &Kernel,
    target: &[Site],
    rho: f64,
    times: &[f64],
    tail_tol: f64,
) -> Result<Vec<Bracket>> {
    if !(rho >= 0.0) {
        return Err(invalid("density must be nonnegative"));
    }
    let mass = super::hit_mass(k, target, times, tail_tol)?;
    Ok(mass
        .iter()
        .map(|m| Bracket::new((-rho * m.upper).exp(), (-rho * m.lower).exp(), "thinning"))
        .collect())
}

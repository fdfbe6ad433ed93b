//! Deterministic lattice numerics: bracketed escape probabilities,
//! survival probabilities by uniformization, the density threshold ρ_c and
//! closed-form laws for the empty-set pattern.

mod calibrate;
mod escape;
mod rho_c;
mod survival;
mod zero_lambda;

pub use calibrate::{calibrate, Calibration};
pub use escape::{escape_probability, escape_probability_adaptive, BracketCertifier, EscapeField};
pub use rho_c::{rho_c_estimate, sigma_pool, RhoC};
pub use survival::{
    hit_mass, poisson_range_bound, survival_curve, survival_field, SurvivalCurve, SurvivalField,
};
pub use zero_lambda::{zero_lambda_product_law, zero_lambda_tau_survival, ProductLaw};

/// A certified interval for a real quantity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    pub method: &'static str,
}

impl Bracket {
    pub fn new(lower: f64, upper: f64, method: &'static str) -> Self {
        debug_assert!(lower <= upper, "bracket [{lower}, {upper}] inverted");
        Bracket {
            lower,
            upper,
            method,
        }
    }

    pub fn exact(v: f64) -> Self {
        Bracket::new(v, v, "exact")
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64, slack: f64) -> bool {
        v >= self.lower - slack && v <= self.upper + slack
    }

    /// Bracket of 1 − x.
    pub fn complement(&self) -> Bracket {
        Bracket::new(1.0 - self.upper, 1.0 - self.lower, self.method)
    }
}

/// Time horizon with an explicit infinity sentinel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

impl Horizon {
    pub fn label(&self) -> String {
        match self {
            Horizon::Finite(t) => format!("{t}"),
            Horizon::Infinite => "inf".into(),
        }
    }
}

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::rng;
use crate::site::{self, Site, ORIGIN};

use super::Certifier;

/// Default cap on jumps per certified path.
pub const DEFAULT_STEP_BUDGET: usize = 1_000_000;

fn budget_error(budget: usize) -> Error {
    Error::BudgetExceeded(format!("escape not certified within {budget} jumps"))
}

/// Excursion from the origin: starts at Y ~ p(0,·) and runs until it
/// re-enters the origin. Returns the excursion duration (sum of holding
/// times away from the origin) or `None` on certified escape.
pub fn sample_excursion<R: Rng + ?Sized>(
    k: &Kernel,
    cert: &dyn Certifier,
    rng: &mut R,
    budget: usize,
) -> Result<Option<f64>> {
    let mut x: Site = *k.offset_for(rng::uniform(rng));
    let mut h = 0.0;
    for _ in 0..budget {
        if x == ORIGIN {
            return Ok(Some(h));
        }
        if cert.certified(&x) {
            return Ok(None);
        }
        h += rng::exp1(rng);
        x = site::add(&x, k.offset_for(rng::uniform(rng)));
    }
    Err(budget_error(budget))
}

/// First return time H_0 to the origin for a walk started there, counting
/// the initial holding time; `None` on certified escape.
pub fn sample_return_time<R: Rng + ?Sized>(
    k: &Kernel,
    cert: &dyn Certifier,
    rng: &mut R,
    budget: usize,
) -> Result<Option<f64>> {
    let tau = rng::exp1(rng);
    Ok(sample_excursion(k, cert, rng, budget)?.map(|h| tau + h))
}

/// σ by direct simulation from the origin until escape certification:
/// the last exit time from the origin.
pub fn sample_sigma_direct<R: Rng + ?Sized>(
    k: &Kernel,
    cert: &dyn Certifier,
    rng: &mut R,
    budget: usize,
) -> Result<f64> {
    let mut x = ORIGIN;
    let mut t = 0.0;
    let mut last_exit = 0.0;
    for _ in 0..budget {
        if x == ORIGIN {
            t += rng::exp1(rng);
            last_exit = t;
        } else if cert.certified(&x) {
            return Ok(last_exit);
        } else {
            t += rng::exp1(rng);
        }
        x = site::add(&x, k.offset_for(rng::uniform(rng)));
    }
    Err(budget_error(budget))
}

/// One draw of the renewal construction of σ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenewalDraw {
    pub sigma: f64,
    /// Number of returning excursions.
    pub kappa: u32,
}

/// σ assembled from exponential waits at the origin and returning
/// excursions, stopping at the first certified non-returning excursion.
pub fn sample_sigma_renewal<R: Rng + ?Sized>(
    k: &Kernel,
    cert: &dyn Certifier,
    rng: &mut R,
    budget: usize,
) -> Result<RenewalDraw> {
    let mut sigma = rng::exp1(rng);
    let mut kappa = 0u32;
    loop {
        match sample_excursion(k, cert, rng, budget)? {
            Some(h) => {
                sigma += h + rng::exp1(rng);
                kappa += 1;
            }
            None => return Ok(RenewalDraw { sigma, kappa }),
        }
    }
}

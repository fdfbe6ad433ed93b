use crate::error::{Error, Result};
use crate::kernel::{beta_d, minimize_phi, BetaD, Kernel, TiltSolution};
use crate::site::ORIGIN;
use crate::walk::MartingaleCertifier;

use super::{escape_probability_adaptive, rho_c_estimate, Bracket, EscapeField, RhoC};

/// Tilt rate, escape probability, β_d, β₁ and ρ̂_c of a drifted kernel.
#[derive(Clone, Debug)]
pub struct Calibration {
    pub tilt: TiltSolution,
    /// Escape field of the primal walk from the origin.
    pub escape: EscapeField,
    /// P_{0,0}(H_0 = ∞).
    pub q_esc: Bracket,
    pub beta_d: BetaD,
    pub beta1: f64,
    pub rho_c: RhoC,
}

impl Calibration {
    /// Errors unless ρ lies below the conservative end of the ρ̂_c interval.
    pub fn check_density(&self, rho: f64) -> Result<()> {
        if rho >= self.rho_c.ci_lower {
            return Err(Error::Precondition(format!(
                "density {rho} is not below the lower confidence end {} of rho_c({})",
                self.rho_c.ci_lower, self.beta1
            )));
        }
        Ok(())
    }
}

/// Computes the calibration; `beta1 = None` picks half the lower end of the
/// β_d bracket.
pub fn calibrate(
    k: &Kernel,
    beta1: Option<f64>,
    n_sigma: usize,
    epsilon: f64,
    seed: u64,
) -> Result<Calibration> {
    k.require_drift()?;
    let tilt = minimize_phi(k, 1e-10)?;
    let escape = escape_probability_adaptive(k, &[ORIGIN], &[ORIGIN], 1e-6, 256)?;
    let q_esc = escape.after_first_step(&ORIGIN);
    let bd = beta_d(&tilt, q_esc)?;
    let beta1 = beta1.unwrap_or(bd.lower / 2.0);
    let cert = MartingaleCertifier::new(k, &[ORIGIN], epsilon);
    let rho_c = rho_c_estimate(k, beta1, &bd, n_sigma, &cert, seed)?;
    Ok(Calibration {
        tilt,
        escape,
        q_esc,
        beta_d: bd,
        beta1,
        rho_c,
    })
}

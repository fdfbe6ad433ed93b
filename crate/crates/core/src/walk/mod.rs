//! Continuous-time random-walk trajectories, visit structure and the two
//! samplers of the visit width σ.

mod certify;
mod sigma;
mod trajectory;
mod visits;

pub use certify::{Certifier, MartingaleCertifier};
pub use sigma::{
    sample_excursion, sample_return_time, sample_sigma_direct, sample_sigma_renewal, RenewalDraw,
    DEFAULT_STEP_BUDGET,
};
pub use trajectory::{sample_path, Trajectory};
pub use visits::{visit_intervals, visit_summary, VisitSummary};

/// Default certification bias ε.
pub const DEFAULT_EPSILON: f64 = 1e-4;

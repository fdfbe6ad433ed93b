//! Monte Carlo estimators, fits and audits.

mod audit;
mod fit;
pub mod stats;
mod tau;
mod yaglom;

pub use audit::{
    discrepancy_decay, domination_audit, AuditReport, DiscrepancyCurve, Violation, ViolationKind,
};
pub use fit::{fit_lambda, plateau_flatness, plateau_series, LambdaFit, PlateauPoint};
pub use stats::{ks_two_sample, mean_se, weighted_line, Moments};
pub use tau::{estimate_tau_survival, sample_tau, tau_region, SurvivalEstimate, TauOptions};
pub use yaglom::{
    site_moments, yaglom_distance, yaglom_distance_samples, CountMoments, SiteComparison,
    YaglomReport,
};

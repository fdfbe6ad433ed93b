//! Independent asymmetric random walks on Z^d conditioned to avoid a local
//! increasing pattern.
//!
//! The crate is organized bottom-up:
//!
//! * [`kernel`]: transition kernels, Φ and the tilt rate β;
//! * [`walk`]: exact continuous-time trajectories, visit structure, σ samplers;
//! * [`oracle`]: bracketed lattice numerics used as ground truth;
//! * [`lossnet`]: the rectangle process, clans of ancestors and trimming;
//! * [`estimators`]: Monte Carlo estimators, fits and audits;
//! * [`io`]: CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod error;
pub mod estimators;
pub mod io;
pub mod kernel;
pub mod lossnet;
pub mod oracle;
pub mod rng;
pub mod site;
pub mod walk;

pub use error::{Error, Result};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

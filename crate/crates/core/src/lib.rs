//! Simulation and verification toolkit for a univariate discrete-time
//! marked Hawkes process.
//!
//! At each integer time t the process emits a Poisson-distributed batch of
//! events with conditional mean `lambda_t = nu + sum_s alpha(s) X_{t-s}`,
//! where each event carries a positive i.i.d. mark and `X_u` is the mark
//! total of step u. Under the stability condition
//! `|alpha|_1 * E[mark] < 1` the cumulative count `N_t` and mark mass `L_t`
//! obey a law of large numbers and a central limit theorem with explicit
//! constants.
//!
//! The crate provides:
//!
//! - [`model`]: kernels, mark laws, and parameter validation with exact
//!   norms and moments;
//! - [`theory`]: the limit and bound formulas plus an exact moment
//!   recursion;
//! - [`simulate`]: reproducible parallel path generation (and the 0-1
//!   baseline process);
//! - [`stats`]: ensemble summaries, Kolmogorov-Smirnov verification, and
//!   martingale diagnostics;
//! - [`oracle`]: exhaustive small-scale enumeration used to cross-check the
//!   simulator.

pub mod model;
pub mod numeric;
pub mod oracle;
pub mod poisson;
pub mod rng;
pub mod simulate;
pub mod special;
pub mod stats;
pub mod theory;

pub use model::{ExcitationKernel, MarkDistribution, ModelError, ModelParams};
pub use simulate::{PathResult, RecordMode, SimulationConfig};
pub use theory::TheoreticalLimits;

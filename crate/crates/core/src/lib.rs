//! Loss-adjusted posteriors (LAP).
//!
//! Expert opinion about an *observable* quantity (median survival, a change
//! from baseline, a concordance probability) is encoded as a probability
//! distribution and attached to a model through an exponentiated loss:
//!
//! ```text
//! log target(θ) = log p(θ) + log L(data | θ) + Σ log belief(g(θ)) + corrections
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`math`]: densities, quantiles, special functions and the correlation
//!   matrix transforms every other module depends on.
//! * [`loss`]: parameter spaces, expert beliefs, loss terms and the composable
//!   [`loss::TargetDensity`].
//! * [`sampler`]: adaptive random-walk Metropolis with convergence diagnostics.
//! * [`solvers`]: closed-form and root-finding elicitation arithmetic.
//! * [`models`]: the exponential survival, multivariate normal and
//!   repeated-measures reference models.

pub mod error;
pub mod loss;
pub mod math;
pub mod models;
pub mod sampler;
pub mod solvers;

pub use error::{LapError, Result};

/// Engine version recorded in job provenance.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

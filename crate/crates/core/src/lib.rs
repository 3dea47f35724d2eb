//! Rate-optimal transmit power allocation and receive power splitting for a
//! point-to-point SWIPT link whose receiver harvests energy with one or more
//! saturating rectifier circuits.
//!
//! - [`eh_model`]: rate and harvested-energy functions.
//! - [`solver`]: closed-form optimal policy, circuit-count selection and the
//!   time-switching baseline.
//! - [`oracle`]: independent brute-force grid search used for verification.
//! - [`verify`]: randomized solver-versus-oracle comparison.
//! - [`channel`]: seeded Rician fading draws.
//! - [`experiments`]: Monte Carlo rate-energy sweeps and their persistence.

pub mod channel;
pub mod eh_model;
pub mod error;
pub mod experiments;
pub mod oracle;
pub mod solver;
pub mod verify;

pub use eh_model::{EHModelKind, SystemParams};
pub use error::{Error, InfeasibleReason, Result};
pub use solver::{PolicySolution, Scheme, SolverOptions};

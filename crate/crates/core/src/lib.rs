//! Numerical core for comparing interacting N-particle flows with their
//! mean-field (Vlasov-type) description.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs; randomness is always passed in as an explicitly
//! seeded generator (see [`rng`]).
//!
//! Layout:
//!
//! - [`phase`], [`kernel`], [`dynamics`]: phase points, d-body kernels and the
//!   microscopic flow (explicit one-step map and RK4 reference).
//! - [`density`], [`meanfield`], [`vlasov`]: density representations, the
//!   effective one-particle flow and the self-consistent Vlasov solver.
//! - [`metrics`]: L1 and bounded-Lipschitz distances, the weighted Lipschitz
//!   norm, the shake operator and marginal estimation.
//! - [`lln`]: law-of-large-numbers deviation experiments.
//! - [`alpha`]: the independence functional on finite models and upper bounds.
//! - [`lp`], [`stats`]: small linear-programming and statistics helpers.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod alpha;
pub mod density;
pub mod dynamics;
pub mod error;
pub mod kernel;
pub mod lln;
pub mod lp;
pub mod meanfield;
pub mod metrics;
pub mod phase;
pub mod rng;
pub mod stats;
pub mod vlasov;

pub use error::{Error, Result};
pub use phase::{Configuration, PhasePoint};

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

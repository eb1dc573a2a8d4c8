//! Distances and functionals on densities and samples.
//!
//! - [`histogram`]: sparse histograms, L1 distances and multinomial fluctuation bounds.
//! - [`bl`]: bracketing estimates of the bounded-Lipschitz distance.
//! - [`weighted`]: the weighted Lipschitz norm
//!   `sup_{|a| <= |b|} (1 + |a|)^10 |g(a) - g(b)| / |a - b|` and the shake operator.
//! - [`marginal`]: pooled s-marginal estimation from repeated runs.

pub mod bl;
pub mod histogram;
pub mod marginal;
pub mod weighted;

pub use bl::{bounded_lipschitz_distance, BlBracket, BlEvaluator, BlOptions, EmpiricalMeasure};
pub use histogram::{binomial_mad, l1_distance, l1_from_samples, product_l1, BinSpec, Histogram};
pub use marginal::{estimate_marginal, run_marginal, MarginalEstimate, MarginalOptions};
pub use weighted::{
    radial_integral, shake, shake_constant, shake_normalized, sphere_area, weighted_lipschitz_norm, weighted_quotient,
    Radial, Shaken, WeightedNormEstimate, WeightedNormOptions,
};

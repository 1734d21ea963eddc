//! Bayesian principal stratification for randomized trials with one-sided
//! treatment switching and right-censored time-to-event outcomes.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure given its
//! inputs and an explicit random generator: Weibull primitives, the trial data
//! model and synthetic generator, the complete- and observed-data densities,
//! the data-augmentation MCMC, causal estimands, Kaplan–Meier curves,
//! Gelman–Rubin diagnostics and posterior predictive checks.
//!
//! File formats, configuration and the command-line driver live in the
//! `switchstrat` crate.

#![no_std]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod diagnostics;
pub mod error;
pub mod estimands;
pub mod km;
pub mod math;
pub mod model;
pub mod ppc;
pub mod sampler;
pub mod trial;
pub mod weibull;

pub use error::{Error, Result};
pub use model::{Param, PriorSpec, Theta};
pub use trial::{AugmentedUnit, Arm, Dataset, PatientRecord, SwitchStatus};
pub use weibull::WeibullParams;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Random generator used by every stochastic routine in the crate.
pub type ChainRng = rand_chacha::ChaCha8Rng;

/// Builds the generator for stream `stream` of a master seed.
///
/// Streams are independent ChaCha streams of the same key, so chain `k` of a
/// run never shares numbers with chain `j`.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChainRng {
    use rand::SeedableRng;
    let mut rng = ChainRng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

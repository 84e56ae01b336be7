//! Multilevel splitting for rare-event probabilities.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the algorithmic
//! pieces: the Markov chain models, importance functions built from
//! subsolutions, splitting mechanisms, the splitting engine, reference
//! oracles and the statistics used to report estimates. Parallel batches,
//! configuration files and the command line live in the `levelsplit` crate.
//!
//! A single run of the splitting algorithm starts one particle of weight one,
//! lets it evolve until it crosses the next level of the importance function,
//! and there replaces it by a random number of offspring with reduced weights.
//! The sum of the weights of the particles that reach the target set is an
//! unbiased sample of the hitting probability whenever the mechanism's
//! expected total weight equals one.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod engine;
pub mod error;
pub mod importance;
pub mod mechanism;
pub mod models;
pub mod oracle;
pub mod rng;
pub mod stats;

pub use engine::{run_sa, run_sa_traced, SampleRecord, DEFAULT_PARTICLE_CAP};
pub use error::Error;
pub use importance::{AffinePiece, Hamiltonian, ImportanceScheme, Subsolution, VerificationReport};
pub use mechanism::{MechanismEntry, SplittingMechanism};
pub use models::{Buffer, ModeRates, ModelKind, ModelSpec, ModelState, Point, TandemRates};
pub use stats::EstimateSummary;

pub type Result<T, E = Error> = core::result::Result<T, E>;

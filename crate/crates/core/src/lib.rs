//! Reorder-Slice-Compute private data analysis.
//!
//! The crate is organised bottom-up:
//!
//! * [`mech`] holds the standard building blocks (geometric and Laplace
//!   samplers, exponential and choosing mechanisms, AboveThreshold).
//! * [`rsc`] is the slicing engine with noisy slice sizes and delayed compute.
//! * [`sync`] contains the synchronization mapping and the simulator/data-holder
//!   pair used to audit the engine empirically.
//! * [`treelog`] solves the private interior point problem.
//! * [`quasiconcave`] covers cumulative adjacency and quasi-concave optimization.
//! * [`learners`] builds threshold and rectangle learners on top of the above.
//! * [`experiments`] is the plumbing behind the `rsc` command-line tool.
//!
//! Every randomized routine takes an explicit `&mut R: Rng` and consumes no
//! other source of randomness, so a fixed seed reproduces a run exactly.

pub mod error;
pub mod experiments;
pub mod learners;
pub mod mech;
pub mod quasiconcave;
pub mod rsc;
pub mod stats;
pub mod sync;
pub mod treelog;

pub use error::{Error, Result};
pub use mech::PrivacyBudget;

//! Merging of dependent uncertainty sets via synthetic statistics,
//! aggregation, and test inversion.
//!
//! Given only `L` uncertainty sets (interval unions or label sets) and their
//! control levels, the crate builds a merged set with a finite-sample
//! coverage guarantee. The pipeline is:
//!
//! 1. partition the candidate space into cells on which membership in every
//!    input set is constant ([`sets`]),
//! 2. generate one synthetic p-value or e-value per (study, cell)
//!    ([`synthetic`]),
//! 3. aggregate the per-study statistics with a rule matching the dependence
//!    regime ([`aggregate`]),
//! 4. keep the cells whose aggregated statistic passes the test-inversion
//!    threshold ([`merge`]).
//!
//! [`extensions`] generalizes the synthesis step to risk-controlled sets and
//! multiple-testing rejection sets; [`simlab`] is a reproducible Monte Carlo
//! harness that estimates coverage and expected size of the merged sets.

pub mod aggregate;
mod error;
pub mod extensions;
pub mod merge;
pub mod numerics;
pub mod sets;
pub mod simlab;
pub mod synthetic;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;

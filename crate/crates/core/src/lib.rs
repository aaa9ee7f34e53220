//! Fractional calculus, fractional Brownian motion with `H < 1/2`,
//! mollified local times, the mollified-drift SDE scheme and its Girsanov
//! density, plus a verifier suite for the Gaussian and combinatorial
//! identities behind the moment estimates.

pub mod error;
pub mod fbm;
pub mod frac_calculus;
pub mod girsanov;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod local_time;
pub mod quadrature;
pub mod sde;
pub mod special;
pub mod stats;
pub mod studies;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{GridFunction, TimeGrid};
pub use harness::SeedSpec;

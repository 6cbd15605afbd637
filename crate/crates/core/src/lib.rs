//! Merton portfolio choice with a recursive entropy-perturbed utility.
//!
//! The crate solves the reduced HJB equation for the optimal Gaussian policy,
//! simulates the randomized wealth dynamics, computes small-temperature
//! expansions of the policy bias and the wealth loss, and covers several
//! variants (additive perturbation, wealth-scaled temperature, CARA utility,
//! the BSDE form).

pub mod error;
pub mod io;
pub mod market;
pub mod pde;
pub mod hjb;
pub mod asymptotics;
pub mod rng;
pub mod simulate;
pub mod variants;
pub mod scenario;
pub mod pipeline;
pub mod acceptance;

pub use error::{Error, Result};

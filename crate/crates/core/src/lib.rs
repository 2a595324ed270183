//! Finite-difference black-box attacks (ZOO, QL/NES) against small softmax
//! classifiers, the output-randomization defense `d(p) = p + ε`, and the
//! tooling to measure how that defense corrupts finite-difference gradients.

pub mod analysis;
pub mod attacks;
pub mod cli;
pub mod data;
pub mod defense;
pub mod error;
pub mod harness;
pub mod loss;
pub mod model;
pub mod normal;
pub mod oracle;
pub mod prob;
pub mod rng;

pub use error::{Error, Result};

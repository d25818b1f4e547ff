//! Discretized inference for hybrid Bayesian networks.
#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod aggregate;
pub mod cg;
pub mod dd;
pub mod discretize;
pub mod error;
pub mod expr;
pub mod factor;
pub mod fixtures;
pub mod gbp;
pub mod jt;
pub mod math;
pub mod model;
pub mod region;

pub use error::{Error, Result};

//! Simulation of primary frequency control provided by a population of
//! thermostatically controlled refrigerators, with the closed-form analysis
//! used to tune it.

// Negated comparisons reject NaN parameters along with out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod controller;
pub mod doors;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod output;
pub mod population;
pub mod rng;
pub mod scenario;
pub mod signals;
pub mod thermal;

pub use error::{Error, Result};

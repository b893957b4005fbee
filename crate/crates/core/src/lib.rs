//! Simulation and analysis of time-frequency entangled photon pairs:
//! time-tag streams, joint temporal and spectral intensity matrices, and
//! entanglement and steering certificates with bootstrap uncertainties.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod coincidence;
pub mod config;
pub mod error;
pub mod matrix;
pub mod pipeline;
pub mod report;
pub mod source;
pub mod spectral;
pub mod stats;
pub mod tagio;
pub mod tags;

pub use error::{Error, Result};

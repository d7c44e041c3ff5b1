//! Noisy-label training laboratory.
//!
//! The crate is organised bottom-up:
//!
//! * [`noise`] builds and classifies transition matrices and instance-dependent noise fields.
//! * [`data`] loads IDX image files, generates the Gaussian-cluster synthetic set and splits data.
//! * [`losses`] holds the training losses and their forward/backward corrections.
//! * [`estimators`] provides the MLP, the CART tree and oracle posteriors.
//! * [`training`] runs the epoch loop with the NES, ES and WES stopping policies.
//! * [`risk`] turns the 0-1 risk theory (affine map, covariance band, worst-case bounds,
//!   g-vectors) into functions.
//! * [`harness`] wires everything into config-driven experiments that write CSV.
//!
//! Labels are 0-based everywhere: a `c`-class problem uses labels `0..c`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod losses;
pub mod noise;
pub mod risk;
pub mod rng;
pub mod simplex;
pub mod training;

pub use error::{Error, Result};
pub use simplex::{ArgMax, Probs};

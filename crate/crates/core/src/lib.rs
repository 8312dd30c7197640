//! Likelihood-free grasp planning.
//!
//! A grasp is planned as the maximum a posteriori hand configuration
//! `p(h | S = 1, i) ∝ r(h, S = 1, i) p(h)`, where the likelihood-to-evidence
//! ratio `r` is learned by a classifier from simulated episodes.

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod distributions;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod hand;
pub mod nets;
pub mod persist;
pub mod planner;
pub mod ratio;
pub mod world;

mod serde_vec3;

pub use error::{Error, Result};
pub use geometry::{TangentVector, UnitQuaternion};
pub use hand::{GraspType, HandConfig};

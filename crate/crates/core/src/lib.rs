//! Multi-vehicle flocking with a shared deterministic-policy-gradient
//! controller.
//!
//! Vehicles follow unicycle kinematics, observe neighbors, obstacles and a
//! reference waypoint through fixed-size anchor-grid images, and act through
//! one actor network trained from every vehicle's experience.

// Guards such as `!(x > 0.0)` are written that way so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod ddpg;
pub mod error;
pub mod eval;
pub mod exec;
pub mod export;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod observation;
pub mod replay;
pub mod reward;
pub mod rng;
pub mod run;
pub mod sim;
pub mod trainer;

pub use error::{Error, Result};

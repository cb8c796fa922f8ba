//! Simulation and policy search for a two-link, eight-cable tensegrity hopper.
//!
//! Layers, bottom up:
//!
//! - [`dynamics`]: rigid bodies, tension-only cables, penalty ground contact.
//! - [`model`]: the hopper geometry, observations and tilt metrics.
//! - [`env`]: the balancing task (reset, step, reward, termination) and rollouts.
//! - [`policy`]: the linear policy, its state normalizer and checkpoints.
//! - [`ars`]: Augmented Random Search.
//! - [`harness`]: experiment protocols, run configuration and CSV outputs.

pub mod ars;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod harness;
pub mod model;
pub mod policy;

pub use error::{Error, Result};

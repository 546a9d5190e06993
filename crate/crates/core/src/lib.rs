//! Mini reactive molecular dynamics engine with a threaded runtime.

pub mod bonded;
pub mod config;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod forcefield;
pub mod geometry;
pub mod ghost;
pub mod kernels;
pub mod md;
pub mod neighbor;
pub mod parallel;
pub mod qeq;
pub mod species;
pub mod system;

pub use error::{ReaxError, Result};
pub use forcefield::ForceField;
pub use geometry::{SimBox, Vec3};
pub use system::SystemState;

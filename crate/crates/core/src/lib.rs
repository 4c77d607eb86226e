//! Simulation laboratory for activated random walks on Z^d.

pub mod clock;
pub mod config;
pub mod couplings;
pub mod estimators;
pub mod experiment;
pub mod lattice;
pub mod occupation;
pub mod rng;
pub mod particlewise;
pub mod sitewise;
pub mod stats;
pub mod verify;

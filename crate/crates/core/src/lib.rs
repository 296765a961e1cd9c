//! Simulation and analysis of interacting piecewise-linear trajectories,
//! the Moran model they approximate, and the supporting branching processes.

pub mod analysis;
pub mod branching;
pub mod input;
pub mod moran;
pub mod pit;
pub mod quad;
pub mod rng;

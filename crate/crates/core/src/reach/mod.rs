//! Stochastic reach-avoid planning on a discretized (x, y, heading) grid.

pub mod kernel;
pub mod params;
pub mod solver;

pub use kernel::{build_kernel, kernel_cache_key, load_or_build_kernel, TransitionKernel};
pub use params::{AircraftParams, CONTROLS, VARIANCE_FLOOR};
pub use solver::{solve, Policy, ReachAvoidProblem, ValueFunction};

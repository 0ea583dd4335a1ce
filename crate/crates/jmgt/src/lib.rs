//! Numerical laboratory for the Jordan–Moore–Gibson–Thompson equation with
//! exponentially fading memory.
//!
//! The crate is organised bottom-up: [`medium_kernel`] holds parameters and
//! kernels, [`fourier_mode`] the per-frequency generator, [`history_state`]
//! and [`solver`] the torus discretization, [`energy`] the norms and
//! functionals, [`decay_lab`] the radial Fourier experiments and [`oracle`]
//! brute-force references used by the tests.

pub mod decay_lab;
pub mod energy;
pub mod error;
pub mod fourier_mode;
pub mod history_state;
pub mod linalg;
pub mod medium_kernel;
pub mod numerics;
pub mod oracle;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use medium_kernel::{MediumParams, MemoryKernel};

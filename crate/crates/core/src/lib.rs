//! Pseudo-spectral solver for linear scalar equations driven by the
//! stochastic 2D Navier-Stokes equations on the torus, with Lyapunov,
//! spectral-median and first-chaos diagnostics.

pub mod chaos;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod initial;
pub mod noise;
pub mod norms;
pub mod ops;
pub mod quadrature;
pub mod scalar;
pub mod simulation;
pub mod snapshot;
pub mod transform;

pub use error::{Error, Result};
pub use field::{SpectralField, VectorField};
pub use grid::{DealiasFraction, WaveGrid, Wavenumber};

//! Numerical toolkit for the semi-classical Hartree equation written in
//! density-operator form: spectral grids, finite-rank operator algebra,
//! propagators, phase-space transforms and the estimate harness.

pub mod error;
pub mod density;
pub mod grid;
pub mod phase_space;
pub mod propagate;
pub mod harness;
pub mod identities;

pub use error::{Error, Result};
pub use density::{x_sigma_norm, Generator, LowRankOperator, NormLedger, Symmetry, Weight};
pub use grid::{C64, Direction, Field, Grid, Space};

//! Numerical toolkit for functional Itô calculus on multivariate Lévy paths.
//!
//! The crate simulates Lévy paths through their Lévy–Itô decomposition,
//! computes Dupire horizontal and vertical derivatives of path functionals,
//! evaluates integrals against Brownian local time by a forward/backward
//! (time-reversal) representation, and checks Itô-type change-of-variable
//! formulas term by term with Monte Carlo statistics.

pub mod config;
pub mod ensemble;
pub mod functional;
pub mod ito;
pub mod levy;
pub mod localtime;
pub mod operators;
pub mod paths;
pub mod quadrature;
pub mod runner;
pub mod stats;

pub use functional::{FunctionalHandle, Regularity, ScalarField};
pub use levy::{LevyModel, SimulatedLevyPath, SpectralDecomp};
pub use paths::{CadlagPath, PathView, TimeGrid};

//! Numerical toolkit for the interior-degenerate wave equation
//! `phi_tt - div(|x|^alpha grad phi) = f` on a box containing the origin.
//!
//! Modules, bottom-up:
//! - [`weight`]: the degenerate weight, its regularization and the multiplier constants.
//! - [`grid`] / [`operator`]: tensor grids and the flux-form operator A_h.
//! - [`spectral`]: eigenbases, modal projection, Hardy/Poincare checks.
//! - [`wave`]: spectral Galerkin and leapfrog solvers, controlled system.
//! - [`observability`]: boundary-flux observability experiments and approximation sweeps.
//! - [`hum`]: boundary null control by conjugate gradient on the HUM operator.
//! - [`verify`]: the invariant suite behind `degenwave verify`.

pub mod error;
pub mod grid;
pub mod hum;
pub mod linalg;
pub mod observability;
pub mod operator;
pub mod quadrature;
pub mod spectral;
pub mod verify;
pub mod wave;
pub mod weight;

pub use error::{Error, Result};
pub use grid::Grid;
pub use operator::{assemble_operator, OperatorMatrix};
pub use spectral::{compute_eigs, EigenBasis};
pub use weight::{constants, MultiplierConstants, WeightParams};

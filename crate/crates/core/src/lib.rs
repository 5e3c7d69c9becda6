//! Fractional p-Laplacian with the nonlocal Neumann (normal p-derivative)
//! boundary operator on an interval.
//!
//! The crate discretizes the Gagliardo energy over `R² \ (CΩ)²` with
//! piecewise-linear elements on `Ω = (a, b)` plus a truncated exterior
//! collar, and builds on it:
//!
//! * [`eigen`]: eigenpairs of the p-Neumann problem with residual certificates,
//! * [`evolution`]: the nonlocal p-heat flow by proximal (implicit) Euler,
//! * [`stationary`]: the coercive source problem and constant-sign
//!   mountain-pass solutions of the superlinear problem,
//! * [`pointops`]: pointwise operator and Neumann-derivative evaluation and
//!   the nonlocal divergence / integration-by-parts identities.
//!
//! The normalization constant of the operator is fixed to one.

pub mod cli_io;
pub mod eigen;
pub mod error;
pub mod evolution;
pub mod forms;
pub mod geometry;
pub mod pointops;
pub mod quadrature;
pub mod solvers;
pub mod stationary;

pub use error::{Error, Result};
pub use forms::{DualVector, FormValue};
pub use geometry::{DiscreteFunction, Field, Interval, Mesh, Params, Region};
pub use quadrature::QuadTable;

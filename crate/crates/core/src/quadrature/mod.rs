//! Kernel, truncation tail and quadrature for the nonlocal double integral.

pub mod adaptive;
pub mod rules;
mod table;

pub use table::{build_quad_table, PairBlock, PairKind, QuadPoint, QuadTable, TailReport};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, Params};

/// `|x - y|^{-(1 + ps)}`; fails on the diagonal.
pub fn kernel(x: f64, y: f64, params: &Params) -> Result<f64> {
    if x == y {
        return Err(Error::Singular(x));
    }
    Ok(kernel_unchecked(x, y, params.ps()))
}

#[inline]
pub(crate) fn kernel_unchecked(x: f64, y: f64, ps: f64) -> f64 {
    let d = (x - y).abs();
    if ps == 1.0 {
        1.0 / (d * d)
    } else {
        d.powf(-1.0 - ps)
    }
}

/// `∫_d^∞ t^{-1-ps} dt = d^{-ps} / ps`.
pub(crate) fn one_sided_tail(d: f64, ps: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Geometry(format!(
            "point lies on or beyond the collar edge (distance {d})"
        )));
    }
    Ok(d.powf(-ps) / ps)
}

/// Kernel mass `∫ k(x, y) dy` over `y` outside the collar, for `x` in `Ω`.
///
/// This is the weight the truncation drops from every interaction of `x`.
pub fn tail_weight(x: f64, mesh: &Mesh, params: &Params) -> Result<f64> {
    if !mesh.omega.contains_closed(x) {
        return Err(Error::Domain(format!("tail weight requested at {x}, outside Ω")));
    }
    let (lo, hi) = mesh.collar_bounds();
    let ps = params.ps();
    Ok(one_sided_tail(x - lo, ps)? + one_sided_tail(hi - x, ps)?)
}

//! Eigenpairs of the fractional p-Laplacian with the p-Neumann condition.
//!
//! The first eigenvalue is zero with constant eigenfunctions. A nontrivial
//! pair is found by minimizing the Rayleigh quotient `φ(u) / ∫_Ω |u|^p` over
//! functions with `∫_Ω J_p(u) = 0`, which excludes the constants. The
//! constraint is eliminated by a constant shift: `w ↦ w + c(w)` with `c(w)`
//! the unique root of `c ↦ ∫_Ω J_p(w + c)`. On that set the shift direction
//! is orthogonal to the quotient's gradient, so the reduced gradient is the
//! gradient of the quotient itself. Pairs are certified only by the residual
//! of the weak equation.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{mass_matrix, FormEvaluator};
use crate::geometry::{min_max, DiscreteFunction, Mesh, Params};
use crate::quadrature::QuadTable;
use crate::solvers::{dual_norm, minimize, DescentConfig, Objective, SolveStats};

/// Residual level below which a pair counts as certified.
pub const CERTIFY_TOL: f64 = 1e-6;
/// Nodal threshold for the sign-change test.
pub const SIGN_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub lambda: f64,
    /// Normalized to `∫_Ω |u|^p = 1`.
    pub u: DiscreteFunction,
    /// Dual norm of `form_gradient(u) - λ mass_gradient(u)`.
    pub residual: f64,
    pub certified: bool,
    pub sign_changes: bool,
    pub linf_interior: f64,
    pub linf_exterior: f64,
    pub stats: Option<SolveStats>,
}

/// One row of the eigen report.
#[derive(Clone, Debug, Serialize)]
pub struct EigenSummary {
    pub lambda: f64,
    pub residual: f64,
    pub certified: bool,
    pub sign_changes: bool,
    pub linf_interior: f64,
    pub linf_exterior: f64,
    pub iterations: usize,
}

impl EigenPair {
    fn assemble(
        u: DiscreteFunction,
        lambda: f64,
        ev: &FormEvaluator,
        stats: Option<SolveStats>,
    ) -> Result<Self> {
        let residual = residual_raw(u.values(), lambda, ev)?;
        let (linf_interior, linf_exterior) = sup_norms(&u);
        let mut pair = Self {
            lambda,
            u,
            residual,
            certified: residual <= CERTIFY_TOL,
            sign_changes: false,
            linf_interior,
            linf_exterior,
            stats,
        };
        pair.sign_changes = sign_change_check(&pair);
        Ok(pair)
    }

    pub fn summary(&self) -> EigenSummary {
        EigenSummary {
            lambda: self.lambda,
            residual: self.residual,
            certified: self.certified,
            sign_changes: self.sign_changes,
            linf_interior: self.linf_interior,
            linf_exterior: self.linf_exterior,
            iterations: self.stats.as_ref().map_or(0, |s| s.iterations),
        }
    }
}

fn check_table(mesh: &Mesh, table: &QuadTable) -> Result<()> {
    if table.mesh().as_ref() != mesh {
        return Err(Error::Usage("table was built on a different mesh".into()));
    }
    Ok(())
}

/// `φ(u) / ∫_Ω |u|^p` with `φ = [u]^p / 2`.
pub fn rayleigh(u: &DiscreteFunction, table: &QuadTable, params: &Params) -> Result<f64> {
    if !u.same_mesh(table.mesh()) {
        return Err(Error::Usage("function and table live on different meshes".into()));
    }
    let ev = FormEvaluator::new(table, params)?;
    let mass = ev.mass(u.values())?;
    if !(mass > 0.0) {
        return Err(Error::Domain("Rayleigh quotient of a function with zero mass".into()));
    }
    Ok(ev.seminorm(u.values())? / 2.0 / mass)
}

fn residual_raw(u: &[f64], lambda: f64, ev: &FormEvaluator) -> Result<f64> {
    let n = u.len();
    let mut fg = vec![0.0; n];
    let mut mg = vec![0.0; n];
    ev.seminorm_and_gradient(u, &mut fg)?;
    ev.mass_and_gradient(u, &mut mg)?;
    let r: Vec<f64> = fg.iter().zip(&mg).map(|(f, m)| f - lambda * m).collect();
    Ok(dual_norm(&r, &ev.mesh().lumped_weights()))
}

/// Dual norm of `form_gradient(u) - λ mass_gradient(u)`.
pub fn eigen_residual(u: &DiscreteFunction, lambda: f64, table: &QuadTable, params: &Params) -> Result<f64> {
    if !u.same_mesh(table.mesh()) {
        return Err(Error::Usage("function and table live on different meshes".into()));
    }
    let ev = FormEvaluator::new(table, params)?;
    residual_raw(u.values(), lambda, &ev)
}

fn sup_norms(u: &DiscreteFunction) -> (f64, f64) {
    let sup = |(lo, hi): (f64, f64)| lo.abs().max(hi.abs());
    let interior = sup(u.interior_range());
    let exterior = if u.mesh().n_exterior == 0 { 0.0 } else { sup(u.exterior_range()) };
    (interior, exterior)
}

/// `λ = 0` with the normalized constant `|Ω|^{-1/p}`.
pub fn first_eigenpair(mesh: &Arc<Mesh>, table: &QuadTable, params: &Params) -> Result<EigenPair> {
    check_table(mesh, table)?;
    let ev = FormEvaluator::new(table, params)?;
    let c = mesh.omega.length().powf(-1.0 / params.p);
    let u = DiscreteFunction::constant(table.mesh().clone(), c);
    EigenPair::assemble(u, 0.0, &ev, None)
}

/// Quotient as a function of the unshifted variable `w`.
struct ReducedQuotient<'a> {
    ev: FormEvaluator<'a>,
}

impl ReducedQuotient<'_> {
    /// Shift `c` with `∫_Ω J_p(w + c) = 0`; the map is increasing in `c`.
    fn shift(&self, w: &[f64]) -> Result<f64> {
        let (lo, hi) = min_max(w[self.ev.mesh().interior_nodes()].iter().copied());
        if !(hi > lo) {
            return Err(Error::Domain("constant iterate: the quotient is undefined".into()));
        }
        let scale = hi.abs().max(lo.abs());
        let phi = |c: f64| {
            let shifted: Vec<f64> = w.iter().map(|x| x + c).collect();
            self.ev.mean_constraint(&shifted)
        };
        crate::solvers::root_find_monotone(phi, (-hi, -lo), 1e-15 * scale)
    }

    fn project(&self, w: &[f64]) -> Result<Vec<f64>> {
        let c = self.shift(w)?;
        Ok(w.iter().map(|x| x + c).collect())
    }
}

impl Objective for ReducedQuotient<'_> {
    fn value(&self, w: &[f64]) -> Result<f64> {
        let u = self.project(w)?;
        Ok(self.ev.seminorm(&u)? / 2.0 / self.ev.mass(&u)?)
    }

    fn value_and_gradient(&self, w: &[f64], grad: &mut [f64]) -> Result<f64> {
        let u = self.project(w)?;
        let p = self.ev.p();
        let mut mg = vec![0.0; u.len()];
        let semi = self.ev.seminorm_and_gradient(&u, grad)?;
        let mass = self.ev.mass_and_gradient(&u, &mut mg)?;
        let r = semi / 2.0 / mass;
        for (g, m) in grad.iter_mut().zip(&mg) {
            *g = p * (*g - r * m) / mass;
        }
        Ok(r)
    }
}

/// Default descent settings for eigen solves.
pub fn eigen_descent_config() -> DescentConfig {
    DescentConfig::default().with_grad_tol(1e-9)
}

/// Nontrivial pair by constrained descent from `seed`.
pub fn next_eigenpair(
    mesh: &Arc<Mesh>,
    table: &QuadTable,
    params: &Params,
    seed: &DiscreteFunction,
) -> Result<EigenPair> {
    next_eigenpair_with(mesh, table, params, seed, &eigen_descent_config())
}

pub fn next_eigenpair_with(
    mesh: &Arc<Mesh>,
    table: &QuadTable,
    params: &Params,
    seed: &DiscreteFunction,
    cfg: &DescentConfig,
) -> Result<EigenPair> {
    check_table(mesh, table)?;
    if !seed.same_mesh(mesh) {
        return Err(Error::Usage("seed lives on a different mesh".into()));
    }
    let obj = ReducedQuotient { ev: FormEvaluator::new(table, params)? };
    let mut w0 = obj.project(seed.values())?;
    let m0 = obj.ev.mass(&w0)?;
    w0.iter_mut().for_each(|x| *x /= m0.powf(1.0 / params.p));
    let metric = mesh.lumped_weights();
    let min = minimize(&obj, &w0, &metric, cfg)?.require_converged("next_eigenpair")?;
    let mut u = obj.project(&min.x)?;
    let mass = obj.ev.mass(&u)?;
    u.iter_mut().for_each(|x| *x /= mass.powf(1.0 / params.p));
    let lambda = obj.ev.seminorm(&u)? / 2.0 / obj.ev.mass(&u)?;
    let u = DiscreteFunction::new(table.mesh().clone(), u)?;
    let pair = EigenPair::assemble(u, lambda, &obj.ev, Some(min.stats))?;
    if !pair.certified {
        log::warn!("eigenpair NOT CERTIFIED: residual {:.3e}", pair.residual);
    }
    Ok(pair)
}

/// Runs independent seeds in parallel and returns their results in order.
pub fn explore_seeds(
    mesh: &Arc<Mesh>,
    table: &QuadTable,
    params: &Params,
    seeds: &[DiscreteFunction],
) -> Vec<Result<EigenPair>> {
    seeds
        .par_iter()
        .map(|seed| next_eigenpair(mesh, table, params, seed))
        .collect()
}

/// True iff the interior nodal values take both signs beyond `SIGN_TOL`.
pub fn sign_change_check(pair: &EigenPair) -> bool {
    let (lo, hi) = pair.u.interior_range();
    lo < -SIGN_TOL && hi > SIGN_TOL
}

/// Sup norms over interior and exterior nodes.
pub fn linf_equality_check(pair: &EigenPair, mesh: &Mesh, params: &Params) -> Result<(f64, f64)> {
    params.validate()?;
    if !pair.u.same_mesh(mesh) {
        return Err(Error::Usage("pair lives on a different mesh".into()));
    }
    Ok(sup_norms(&pair.u))
}

/// Generalized eigenvalues of the `p = 2` problem, ascending. Exterior
/// values are eliminated by the Schur complement, which leaves
/// `S u = λ M u` on the nodes of `Ω̄`.
pub fn dense_spectrum(table: &QuadTable, params: &Params) -> Result<Vec<f64>> {
    table.check_params(params)?;
    let k = table.dense_form_matrix()?;
    let mesh = table.mesh();
    let m = mass_matrix(mesh);
    let int: Vec<usize> = mesh.interior_nodes().collect();
    let ext: Vec<usize> = mesh.exterior_nodes().collect();
    let sub = |a: &DMatrix<f64>, r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| a[(r[i], c[j])]);
    let mut s = sub(&k, &int, &int);
    if !ext.is_empty() {
        let kee = sub(&k, &ext, &ext)
            .cholesky()
            .ok_or_else(|| Error::Internal("exterior block is not positive definite".into()))?;
        let kei = sub(&k, &ext, &int);
        s -= kei.transpose() * kee.solve(&kei);
    }
    let mii = sub(&m, &int, &int)
        .cholesky()
        .ok_or_else(|| Error::Internal("mass matrix is not positive definite".into()))?;
    let l = mii.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Internal("singular mass factor".into()))?;
    let c = &linv * s * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

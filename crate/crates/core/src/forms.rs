//! Discrete Gagliardo energy, `Lᵖ` mass and their first variations.
//!
//! Energies and gradients are assembled from the same [`QuadTable`], so the
//! gradient is the exact derivative of the discrete energy.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{DiscreteFunction, Mesh, Params};
use crate::quadrature::rules::{gauss_legendre, Rule};
use crate::quadrature::{QuadPoint, QuadTable};

/// Points per parallel work unit. Partial sums are combined in chunk order,
/// so results do not depend on the thread count.
const CHUNK: usize = 4096;

/// `|t|^{p-2} t`, with `J_p(0) = 0`.
pub fn j_p(t: f64, p: f64) -> f64 {
    Power::new(p).j(t)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Power {
    p: f64,
}

impl Power {
    pub(crate) fn new(p: f64) -> Self {
        Self { p }
    }

    #[inline]
    pub(crate) fn abs_pow(self, t: f64) -> f64 {
        if self.p == 2.0 {
            t * t
        } else if self.p == 3.0 {
            let a = t.abs();
            a * a * a
        } else {
            t.abs().powf(self.p)
        }
    }

    #[inline]
    pub(crate) fn j(self, t: f64) -> f64 {
        if self.p == 2.0 {
            t
        } else if self.p == 3.0 {
            t.abs() * t
        } else if t == 0.0 {
            0.0
        } else {
            t.abs().powf(self.p - 2.0) * t
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FormValue {
    pub seminorm_p: f64,
    pub phi: f64,
    pub mass_p: f64,
    pub full_norm_p: f64,
}

impl FormValue {
    fn new(seminorm_p: f64, mass_p: f64) -> Self {
        let phi = seminorm_p / 2.0;
        Self {
            seminorm_p,
            phi,
            mass_p,
            full_norm_p: phi + mass_p,
        }
    }
}

/// First variation of a functional, one component per node (its action on
/// the nodal hat functions).
#[derive(Clone, Debug)]
pub struct DualVector {
    mesh: Arc<Mesh>,
    components: Vec<f64>,
}

impl DualVector {
    pub fn new(mesh: Arc<Mesh>, components: Vec<f64>) -> Result<Self> {
        if components.len() != mesh.n_nodes() {
            return Err(Error::Usage(format!(
                "{} components for a mesh with {} nodes",
                components.len(),
                mesh.n_nodes()
            )));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("dual vector has non-finite entries".into()));
        }
        Ok(Self { mesh, components })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn into_components(self) -> Vec<f64> {
        self.components
    }

    /// Action on `v`: `Σ c_i v_i`.
    pub fn pair(&self, v: &DiscreteFunction) -> Result<f64> {
        if !v.same_mesh(&self.mesh) {
            return Err(Error::Usage("pairing across different meshes".into()));
        }
        Ok(crate::solvers::dot(&self.components, v.values()))
    }

    /// `sqrt(Σ c_i² / m_i)` with lumped nodal weights `m_i`.
    pub fn dual_norm(&self) -> f64 {
        crate::solvers::dual_norm(&self.components, &self.mesh.lumped_weights())
    }

    /// `self - lambda * other`.
    pub fn axpy(&self, lambda: f64, other: &DualVector) -> Result<DualVector> {
        if !Arc::ptr_eq(&self.mesh, &other.mesh) && *self.mesh != *other.mesh {
            return Err(Error::Usage("combining dual vectors across meshes".into()));
        }
        let c = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a - lambda * b)
            .collect();
        DualVector::new(self.mesh.clone(), c)
    }
}

/// Evaluates energies and gradients on raw nodal vectors for one table.
pub struct FormEvaluator<'a> {
    table: &'a QuadTable,
    power: Power,
    mass_rule: Rule,
}

impl<'a> FormEvaluator<'a> {
    pub fn new(table: &'a QuadTable, params: &Params) -> Result<Self> {
        table.check_params(params)?;
        Ok(Self {
            table,
            power: Power::new(params.p),
            mass_rule: gauss_legendre(table.quad_order()),
        })
    }

    pub fn table(&self) -> &QuadTable {
        self.table
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.table.mesh()
    }

    pub fn p(&self) -> f64 {
        self.power.p
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        let n = self.table.mesh().n_nodes();
        if u.len() != n {
            return Err(Error::Usage(format!("{} values for a mesh with {n} nodes", u.len())));
        }
        Ok(())
    }

    /// `Σ w |u(x) - u(y)|^p`.
    pub fn seminorm(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        let pw = self.power;
        let partials: Vec<f64> = self
            .table
            .points()
            .par_chunks(CHUNK)
            .map(|chunk| chunk.iter().map(|q| q.w * pw.abs_pow(difference(u, q))).sum())
            .collect();
        Ok(partials.iter().sum())
    }

    /// Seminorm and the form gradient `½ Σ w J_p(Δu) Δφ_i` written to `grad`.
    pub fn seminorm_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_len(u)?;
        self.check_len(grad)?;
        let pw = self.power;
        let n = u.len();
        let partials: Vec<(f64, Vec<f64>)> = self
            .table
            .points()
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; n];
                let mut sum = 0.0;
                for q in chunk {
                    let d = difference(u, q);
                    sum += q.w * pw.abs_pow(d);
                    let c = 0.5 * q.w * pw.j(d);
                    scatter(&mut g, q, c);
                }
                (sum, g)
            })
            .collect();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for (s, g) in partials {
            total += s;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        Ok(total)
    }

    /// Diagonal of the Hessian of `φ/p`, `½ (p-1) Σ w |Δu|^{p-2} Δφ_i²`, with
    /// `|Δu|` floored at `floor` so that it stays finite and positive for
    /// every `p`. Used only as a preconditioner.
    pub fn hessian_diagonal(&self, u: &[f64], floor: f64) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let p = self.power.p;
        let n = u.len();
        let partials: Vec<Vec<f64>> = self
            .table
            .points()
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut h = vec![0.0; n];
                for q in chunk {
                    let c = 0.5 * (p - 1.0) * q.w * difference(u, q).abs().max(floor).powf(p - 2.0);
                    let (ex, ey) = (q.ex as usize, q.ey as usize);
                    let coef = [(ex, 1.0 - q.lx), (ex + 1, q.lx), (ey, -(1.0 - q.ly)), (ey + 1, -q.ly)];
                    for (i, a) in coef {
                        // Δφ_i collects both ends when ex and ey share a node
                        let d: f64 = coef.iter().filter(|(j, _)| *j == i).map(|(_, b)| b).sum();
                        h[i] += c * d * a;
                    }
                }
                h
            })
            .collect();
        let mut out = vec![0.0; n];
        for h in partials {
            out.iter_mut().zip(h).for_each(|(a, b)| *a += b);
        }
        Ok(out)
    }

    /// `½ Σ w J_p(Δu) Δv`, the form gradient at `u` applied to `v`.
    pub fn pairing(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        self.check_len(v)?;
        let pw = self.power;
        let partials: Vec<f64> = self
            .table
            .points()
            .par_chunks(CHUNK)
            .map(|chunk| {
                chunk
                    .iter()
                    .map(|q| 0.5 * q.w * pw.j(difference(u, q)) * difference(v, q))
                    .sum()
            })
            .collect();
        Ok(partials.iter().sum())
    }

    /// `∫_Ω |u|^p` by the Gauss rule on interior elements.
    pub fn mass(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        let mesh = self.table.mesh();
        let mut total = 0.0;
        for e in mesh.interior_elements() {
            let h = mesh.element_length(e);
            for (&t, &w) in self.mass_rule.nodes.iter().zip(&self.mass_rule.weights) {
                let val = u[e] * (1.0 - t) + u[e + 1] * t;
                total += h * w * self.power.abs_pow(val);
            }
        }
        Ok(total)
    }

    /// Mass and `∫_Ω J_p(u) φ_i` written to `grad`.
    pub fn mass_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_len(u)?;
        self.check_len(grad)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mesh = self.table.mesh();
        let mut total = 0.0;
        for e in mesh.interior_elements() {
            let h = mesh.element_length(e);
            for (&t, &w) in self.mass_rule.nodes.iter().zip(&self.mass_rule.weights) {
                let val = u[e] * (1.0 - t) + u[e + 1] * t;
                total += h * w * self.power.abs_pow(val);
                let c = h * w * self.power.j(val);
                grad[e] += c * (1.0 - t);
                grad[e + 1] += c * t;
            }
        }
        Ok(total)
    }

    /// `∫_Ω J_p(u)` by the same rule.
    pub fn mean_constraint(&self, u: &[f64]) -> f64 {
        let mesh = self.table.mesh();
        let mut total = 0.0;
        for e in mesh.interior_elements() {
            let h = mesh.element_length(e);
            for (&t, &w) in self.mass_rule.nodes.iter().zip(&self.mass_rule.weights) {
                total += h * w * self.power.j(u[e] * (1.0 - t) + u[e + 1] * t);
            }
        }
        total
    }

    /// `∫_Ω f φ_i` for a pointwise source, same rule.
    pub fn load_vector(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mesh = self.table.mesh();
        let mut out = vec![0.0; mesh.n_nodes()];
        for e in mesh.interior_elements() {
            let (x0, x1) = mesh.element_bounds(e);
            let h = x1 - x0;
            for (&t, &w) in self.mass_rule.nodes.iter().zip(&self.mass_rule.weights) {
                let c = h * w * f(x0 + t * h);
                out[e] += c * (1.0 - t);
                out[e + 1] += c * t;
            }
        }
        out
    }
}

#[inline]
fn difference(u: &[f64], q: &QuadPoint) -> f64 {
    let (ex, ey) = (q.ex as usize, q.ey as usize);
    let ux = u[ex] + q.lx * (u[ex + 1] - u[ex]);
    let uy = u[ey] + q.ly * (u[ey + 1] - u[ey]);
    ux - uy
}

#[inline]
fn scatter(g: &mut [f64], q: &QuadPoint, c: f64) {
    let (ex, ey) = (q.ex as usize, q.ey as usize);
    g[ex] += c * (1.0 - q.lx);
    g[ex + 1] += c * q.lx;
    g[ey] -= c * (1.0 - q.ly);
    g[ey + 1] -= c * q.ly;
}

fn check_mesh(u: &DiscreteFunction, table: &QuadTable) -> Result<()> {
    if !u.same_mesh(table.mesh()) {
        return Err(Error::Usage("function and quadrature table live on different meshes".into()));
    }
    Ok(())
}

pub fn gagliardo(u: &DiscreteFunction, table: &QuadTable, params: &Params) -> Result<FormValue> {
    check_mesh(u, table)?;
    let ev = FormEvaluator::new(table, params)?;
    Ok(FormValue::new(ev.seminorm(u.values())?, ev.mass(u.values())?))
}

pub fn form_gradient(u: &DiscreteFunction, table: &QuadTable, params: &Params) -> Result<DualVector> {
    check_mesh(u, table)?;
    let ev = FormEvaluator::new(table, params)?;
    let mut g = vec![0.0; u.values().len()];
    ev.seminorm_and_gradient(u.values(), &mut g)?;
    DualVector::new(u.mesh().clone(), g)
}

/// `∫_Ω |u|^p` with the Gauss rule of order `params.quad_order`.
pub fn mass_p(u: &DiscreteFunction, params: &Params) -> Result<f64> {
    let (rule, pw) = (gauss_legendre(params.quad_order), Power::new(params.p));
    let mesh = u.mesh();
    let v = u.values();
    let mut total = 0.0;
    for e in mesh.interior_elements() {
        let h = mesh.element_length(e);
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            total += h * w * pw.abs_pow(v[e] * (1.0 - t) + v[e + 1] * t);
        }
    }
    Ok(total)
}

pub fn mass_gradient(u: &DiscreteFunction, params: &Params) -> Result<DualVector> {
    params.validate()?;
    let (rule, pw) = (gauss_legendre(params.quad_order), Power::new(params.p));
    let mesh = u.mesh();
    let v = u.values();
    let mut g = vec![0.0; v.len()];
    for e in mesh.interior_elements() {
        let h = mesh.element_length(e);
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            let c = h * w * pw.j(v[e] * (1.0 - t) + v[e + 1] * t);
            g[e] += c * (1.0 - t);
            g[e + 1] += c * t;
        }
    }
    DualVector::new(mesh.clone(), g)
}

/// Product of the interior consistent mass matrix with nodal values:
/// `(M v)_i = ∫_Ω v φ_i`, exact for piecewise-linear `v`.
pub fn mass_apply(mesh: &Mesh, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for e in mesh.interior_elements() {
        let h = mesh.element_length(e);
        out[e] += h * (2.0 * v[e] + v[e + 1]) / 6.0;
        out[e + 1] += h * (v[e] + 2.0 * v[e + 1]) / 6.0;
    }
    out
}

/// Consistent `P1` mass matrix of the interior elements (`n_nodes²`, zero
/// rows on the collar).
pub fn mass_matrix(mesh: &Mesh) -> DMatrix<f64> {
    let n = mesh.n_nodes();
    let mut m = DMatrix::zeros(n, n);
    for e in mesh.interior_elements() {
        let h = mesh.element_length(e);
        m[(e, e)] += h / 3.0;
        m[(e + 1, e + 1)] += h / 3.0;
        m[(e, e + 1)] += h / 6.0;
        m[(e + 1, e)] += h / 6.0;
    }
    m
}

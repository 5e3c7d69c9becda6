//! Domain, parameters and the piecewise-linear discretization of `Ω` and its
//! exterior collar.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An open interval `(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(Error::Config(format!("degenerate interval ({a}, {b})")));
        }
        Ok(Interval { a, b })
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    /// Closed-interval membership `a <= x <= b`.
    pub fn contains_closed(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }
}

/// Model and discretization parameters.
///
/// `p > 1`, `0 < s < 1`, `r > p` and a positive collar radius are enforced by
/// [`Params::validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub p: f64,
    pub s: f64,
    /// Superlinear exponent of the model nonlinearity; only read by `stationary`.
    pub r: f64,
    pub collar_radius: f64,
    pub quad_order: usize,
    pub tol_solver: f64,
    pub tol_quad: f64,
}

impl Params {
    pub const DEFAULT_QUAD_ORDER: usize = 6;
    pub const DEFAULT_TOL_SOLVER: f64 = 1e-8;
    pub const DEFAULT_TOL_QUAD: f64 = 1e-6;

    /// Parameters with defaults: `r = p + 1`, collar radius 1, quadrature
    /// order 6.
    pub fn new(p: f64, s: f64) -> Result<Self> {
        let params = Params {
            p,
            s,
            r: p + 1.0,
            collar_radius: 1.0,
            quad_order: Self::DEFAULT_QUAD_ORDER,
            tol_solver: Self::DEFAULT_TOL_SOLVER,
            tol_quad: Self::DEFAULT_TOL_QUAD,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_r(mut self, r: f64) -> Result<Self> {
        self.r = r;
        self.validate()?;
        Ok(self)
    }

    pub fn with_collar_radius(mut self, radius: f64) -> Result<Self> {
        self.collar_radius = radius;
        self.validate()?;
        Ok(self)
    }

    pub fn with_quad_order(mut self, order: usize) -> Result<Self> {
        self.quad_order = order;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 1.0) {
            return Err(Error::Config(format!("p must be > 1, got {}", self.p)));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Config(format!("s must lie in (0,1), got {}", self.s)));
        }
        if !(self.r.is_finite() && self.r > self.p) {
            return Err(Error::Config(format!(
                "r must be > p = {}, got {}",
                self.p, self.r
            )));
        }
        if !(self.collar_radius.is_finite() && self.collar_radius > 0.0) {
            return Err(Error::Config(format!(
                "collar_radius must be > 0, got {}",
                self.collar_radius
            )));
        }
        if self.quad_order == 0 {
            return Err(Error::Config("quad_order must be positive".into()));
        }
        if !(self.tol_solver > 0.0) || !(self.tol_quad > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// The product `p·s` that sets the kernel decay `|x-y|^{-(1+ps)}`.
    pub fn ps(&self) -> f64 {
        self.p * self.s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Interior,
    Exterior,
}

/// Uniform partition of `Ω` and of the two collar pieces `[a-R, a]`,
/// `[b, b+R]`.
///
/// Nodes are numbered left to right; element `e` spans nodes `e` and `e+1`.
/// `a` and `b` are nodes and carry the `Interior` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub omega: Interval,
    pub n_interior: usize,
    pub n_exterior: usize,
    pub collar_radius: f64,
    nodes: Vec<f64>,
    node_region: Vec<Region>,
}

impl Mesh {
    pub fn uniform(omega: Interval, n_interior: usize, collar_radius: f64, n_exterior: usize) -> Result<Self> {
        if !(omega.a.is_finite() && omega.b.is_finite()) || omega.b <= omega.a {
            return Err(Error::Config(format!(
                "degenerate interval ({}, {})",
                omega.a, omega.b
            )));
        }
        if n_interior < 2 {
            return Err(Error::Config(format!(
                "n_interior must be >= 2, got {n_interior}"
            )));
        }
        if n_exterior < 1 {
            return Err(Error::Config(format!(
                "n_exterior must be >= 1, got {n_exterior}"
            )));
        }
        if !(collar_radius.is_finite() && collar_radius > 0.0) {
            return Err(Error::Config(format!(
                "collar radius must be > 0, got {collar_radius}"
            )));
        }
        let (a, b) = (omega.a, omega.b);
        let h_in = (b - a) / n_interior as f64;
        let h_ex = collar_radius / n_exterior as f64;
        let mut nodes = Vec::with_capacity(n_interior + 2 * n_exterior + 1);
        let mut node_region = Vec::with_capacity(nodes.capacity());
        for k in 0..n_exterior {
            nodes.push(a - collar_radius + k as f64 * h_ex);
            node_region.push(Region::Exterior);
        }
        for k in 0..=n_interior {
            // hit the endpoints exactly
            let x = if k == n_interior { b } else { a + k as f64 * h_in };
            nodes.push(x);
            node_region.push(Region::Interior);
        }
        for k in 1..=n_exterior {
            let x = if k == n_exterior {
                b + collar_radius
            } else {
                b + k as f64 * h_ex
            };
            nodes.push(x);
            node_region.push(Region::Exterior);
        }
        Ok(Mesh {
            omega,
            n_interior,
            n_exterior,
            collar_radius,
            nodes,
            node_region,
        })
    }

    /// Mesh whose collar spacing matches the interior spacing as closely as
    /// an integer element count allows.
    pub fn matched(omega: Interval, n_interior: usize, collar_radius: f64) -> Result<Self> {
        let h = omega.length() / n_interior.max(1) as f64;
        let n_ext = ((collar_radius / h).round() as usize).max(1);
        Self::uniform(omega, n_interior, collar_radius, n_ext)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node_region(&self, i: usize) -> Region {
        self.node_region[i]
    }

    pub fn element_nodes(&self, e: usize) -> (usize, usize) {
        (e, e + 1)
    }

    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        (self.nodes[e], self.nodes[e + 1])
    }

    pub fn element_length(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    pub fn element_region(&self, e: usize) -> Region {
        if self.interior_elements().contains(&e) {
            Region::Interior
        } else {
            Region::Exterior
        }
    }

    pub fn interior_elements(&self) -> std::ops::Range<usize> {
        self.n_exterior..self.n_exterior + self.n_interior
    }

    /// Node indices carrying the `Interior` tag (including `a` and `b`).
    pub fn interior_nodes(&self) -> std::ops::Range<usize> {
        self.n_exterior..self.n_exterior + self.n_interior + 1
    }

    pub fn exterior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(move |&i| self.node_region[i] == Region::Exterior)
    }

    pub fn interior_spacing(&self) -> f64 {
        self.omega.length() / self.n_interior as f64
    }

    /// Left and right end of the collar, `a - R` and `b + R`.
    pub fn collar_bounds(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    /// Half the total length of the elements adjacent to each node; the
    /// lumped-mass weights used for dual norms.
    pub fn lumped_weights(&self) -> Vec<f64> {
        let n = self.n_nodes();
        let mut w = vec![0.0; n];
        for e in 0..self.n_elements() {
            let h = self.element_length(e);
            w[e] += 0.5 * h;
            w[e + 1] += 0.5 * h;
        }
        w
    }

    /// Element containing `x`, or `None` outside the collar.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.collar_bounds();
        if !(x >= lo && x <= hi) {
            return None;
        }
        let idx = self.nodes.partition_point(|&node| node <= x);
        Some(idx.saturating_sub(1).min(self.n_elements() - 1))
    }
}

/// Uniform mesh of `Ω ∪ collar`.
pub fn build_mesh(omega: Interval, n_interior: usize, collar_radius: f64, n_exterior: usize) -> Result<Mesh> {
    Mesh::uniform(omega, n_interior, collar_radius, n_exterior)
}

/// Anything that can be sampled at a point of the real line.
pub trait Field {
    fn at(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Field for F {
    fn at(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Piecewise-linear function on `Ω ∪ collar`, given by its nodal values.
///
/// Beyond the collar the function is treated as unknown: the energy omits
/// those pairs and reports the omitted kernel mass separately (see
/// [`crate::quadrature::tail_weight`]). [`Field::at`] returns zero there.
#[derive(Clone, Debug)]
pub struct DiscreteFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::Input(format!(
                "expected {} nodal values, got {}",
                mesh.n_nodes(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite value at node {i}")));
        }
        Ok(DiscreteFunction { mesh, values })
    }

    pub fn constant(mesh: Arc<Mesh>, c: f64) -> Self {
        let n = mesh.n_nodes();
        DiscreteFunction {
            mesh,
            values: vec![c; n],
        }
    }

    /// Nodal interpolant of `f` on every node of the mesh.
    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = mesh.nodes().iter().map(|&x| f(x)).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite sample at node {i} (x = {})",
                mesh.nodes()[i]
            )));
        }
        Ok(DiscreteFunction { mesh, values })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        DiscreteFunction::new(self.mesh.clone(), values)
    }

    pub fn scaled(&self, t: f64) -> Self {
        DiscreteFunction {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| t * v).collect(),
        }
    }

    pub fn interior_values(&self) -> &[f64] {
        &self.values[self.mesh.interior_nodes()]
    }

    /// `(min, max)` over interior nodes.
    pub fn interior_range(&self) -> (f64, f64) {
        min_max(self.interior_values().iter().copied())
    }

    /// `(min, max)` over exterior nodes.
    pub fn exterior_range(&self) -> (f64, f64) {
        min_max(self.mesh.exterior_nodes().map(|i| self.values[i]))
    }

    pub fn same_mesh(&self, mesh: &Mesh) -> bool {
        std::ptr::eq(self.mesh.as_ref(), mesh) || self.mesh.as_ref() == mesh
    }
}

impl Field for DiscreteFunction {
    fn at(&self, x: f64) -> f64 {
        match self.mesh.locate(x) {
            None => 0.0,
            Some(e) => {
                let (x0, x1) = self.mesh.element_bounds(e);
                let t = (x - x0) / (x1 - x0);
                (1.0 - t) * self.values[e] + t * self.values[e + 1]
            }
        }
    }
}

pub fn interpolate(mesh: &Arc<Mesh>, f: impl Fn(f64) -> f64) -> Result<DiscreteFunction> {
    DiscreteFunction::interpolate(mesh.clone(), f)
}

pub(crate) fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn mesh_counts_and_nodes() {
        let m = build_mesh(unit(), 4, 1.0, 2).unwrap();
        assert_eq!(m.n_nodes(), 4 + 2 * 2 + 1);
        assert_eq!(m.n_elements(), 8);
        let expected = [-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0];
        for (x, e) in m.nodes().iter().zip(expected) {
            assert!((x - e).abs() < 1e-15);
        }

        let m = build_mesh(unit(), 2, 0.5, 1).unwrap();
        assert_eq!(m.n_elements(), 4);
        assert_eq!(m.nodes(), &[-0.5, 0.0, 0.5, 1.0, 1.5]);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(build_mesh(unit(), 0, 1.0, 1).is_err());
        assert!(build_mesh(unit(), 4, 1.0, 0).is_err());
        assert!(build_mesh(unit(), 4, 0.0, 1).is_err());
        assert!(Interval::new(1.0, 1.0).is_err());
    }

    #[test]
    fn region_tags_partition_nodes() {
        let m = build_mesh(Interval::new(-0.5, 2.0).unwrap(), 5, 0.7, 3).unwrap();
        for (i, &x) in m.nodes().iter().enumerate() {
            match m.node_region(i) {
                Region::Interior => assert!(m.omega.contains_closed(x)),
                Region::Exterior => assert!(!(x > m.omega.a && x < m.omega.b)),
            }
        }
        for e in 0..m.n_elements() {
            let (x0, x1) = m.element_bounds(e);
            let straddles = x0 < m.omega.a && x1 > m.omega.a || x0 < m.omega.b && x1 > m.omega.b;
            assert!(!straddles);
            let dist = if x1 <= m.omega.a {
                m.omega.a - x0
            } else if x0 >= m.omega.b {
                x1 - m.omega.b
            } else {
                0.0
            };
            assert!(dist <= m.collar_radius + 1e-12);
        }
    }

    #[test]
    fn refinement_is_nested() {
        let coarse = build_mesh(unit(), 4, 1.0, 2).unwrap();
        let fine = build_mesh(unit(), 8, 1.0, 4).unwrap();
        for x in coarse.nodes() {
            assert!(fine.nodes().iter().any(|y| (x - y).abs() < 1e-14));
        }
    }

    #[test]
    fn interpolation_samples_nodes() {
        let m = Arc::new(build_mesh(unit(), 2, 0.5, 1).unwrap());
        let one = DiscreteFunction::interpolate(m.clone(), |_| 1.0).unwrap();
        assert!(one.values().iter().all(|&v| v == 1.0));
        let id = DiscreteFunction::interpolate(m.clone(), |x| x).unwrap();
        assert_eq!(id.interior_values(), &[0.0, 0.5, 1.0]);
        assert!((id.at(0.3) - 0.3).abs() < 1e-15);
        assert!(DiscreteFunction::interpolate(m, |x| 1.0 / x).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(2.0, 0.5).is_ok());
        assert!(Params::new(1.0, 0.5).is_err());
        assert!(Params::new(2.0, 1.5).is_err());
        assert!(Params::new(2.0, 0.5).unwrap().with_r(2.0).is_err());
        assert!(Params::new(2.0, 0.5).unwrap().with_collar_radius(-1.0).is_err());
    }
}

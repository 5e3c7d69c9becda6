use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::rules::{gauss_jacobi, gauss_legendre, Rule};
use super::{kernel_unchecked, tail_weight};
use crate::error::{Error, Result};
use crate::geometry::{Mesh, Params, Region};

/// Number of Gauss–Jacobi nodes in the separation variable of the
/// identical and touching rules. The integrands there are exactly
/// `ρ^p · (smooth in angle)` for piecewise-linear data, so one node already
/// integrates the radial part exactly.
const RADIAL_NODES: usize = 2;

/// Panels per angular piece of the touching rule. `|Δu|^p` has a kink in
/// the angle wherever `u(x) = u(y)` along a ray, at a data-dependent
/// position, so the angular rule is composite rather than high order.
const THETA_PANELS: usize = 8;

/// Sub-rectangles per axis for separated pairs: `|Δu|^p` has a kink along
/// the data-dependent line `u(x) = u(y)`, so these rules are composite too.
/// Pairs closer than 1.5 times their own size get the finer split.
const FAR_SPLITS: usize = 2;
const NEAR_SPLITS: usize = 4;

/// One quadrature point of the double integral.
///
/// The point sits in elements `ex` (for `x`) and `ey` (for `y`) at local
/// coordinates `lx, ly ∈ [0, 1]`. The weight already contains the kernel
/// and the singularity-resolving Jacobian, so a double integral is
/// `Σ w · G(u(x) - u(y))`.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub ex: u32,
    pub ey: u32,
    pub lx: f64,
    pub ly: f64,
    pub w: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PairKind {
    Identical,
    Touching,
    Separated,
}

/// Points for the unordered element pair `{e, f}`, `e <= f`.
#[derive(Clone, Debug)]
pub struct PairBlock {
    pub e: usize,
    pub f: usize,
    pub kind: PairKind,
    pub range: Range<usize>,
}

/// Neglected kernel mass beyond the collar, per interior node.
#[derive(Clone, Debug, Serialize)]
pub struct TailReport {
    pub per_node: Vec<(f64, f64)>,
    pub max: f64,
    /// Set when some node sees more than [`TailReport::FLAG_THRESHOLD`] of
    /// omitted kernel mass on one side.
    pub insufficient: bool,
}

impl TailReport {
    pub const FLAG_THRESHOLD: f64 = 1.0;
}

/// Element-pair quadrature for the Gagliardo double integral over
/// `R² \ (CΩ)²`, truncated to the collar.
///
/// Blocks are stored once per unordered pair. The integrands in use,
/// `|Δu|^p` and `J_p(Δu)·Δv`, are symmetric under swapping `x` and `y`, so
/// the `(F, E)` half is folded into the weights of the `(E, F)` block.
///
/// The rules on identical and touching pairs divide out `ρ^p` (distance to
/// the singular set), which makes them exact in the radial variable for
/// integrands that are positively `p`-homogeneous in the difference of
/// piecewise-linear data. Both integrands above qualify; other integrands
/// must not be fed through this table.
#[derive(Clone, Debug)]
pub struct QuadTable {
    mesh: Arc<Mesh>,
    p: f64,
    s: f64,
    quad_order: usize,
    points: Vec<QuadPoint>,
    blocks: Vec<PairBlock>,
    tail: TailReport,
}

impl QuadTable {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn points(&self) -> &[QuadPoint] {
        &self.points
    }

    pub fn blocks(&self) -> &[PairBlock] {
        &self.blocks
    }

    pub fn block_points(&self, block: &PairBlock) -> &[QuadPoint] {
        &self.points[block.range.clone()]
    }

    pub fn tail_report(&self) -> &TailReport {
        &self.tail
    }

    /// Physical coordinates `(x, y)` of a point.
    pub fn coords(&self, q: &QuadPoint) -> (f64, f64) {
        let (x0, x1) = self.mesh.element_bounds(q.ex as usize);
        let (y0, y1) = self.mesh.element_bounds(q.ey as usize);
        (x0 + q.lx * (x1 - x0), y0 + q.ly * (y1 - y0))
    }

    /// Fails unless `params` carries the `(p, s)` the table was built for.
    pub fn check_params(&self, params: &Params) -> Result<()> {
        if params.p != self.p || params.s != self.s {
            return Err(Error::Usage(format!(
                "table built for (p, s) = ({}, {}), called with ({}, {})",
                self.p, self.s, params.p, params.s
            )));
        }
        Ok(())
    }

    /// Dense matrix `K` with `K_ij = ½ ∬ Δφ_i Δφ_j k`, so that the first
    /// variation at `p = 2` is `K u` and `φ(u) = uᵀ K u`.
    pub fn dense_form_matrix(&self) -> Result<DMatrix<f64>> {
        if self.p != 2.0 {
            return Err(Error::Usage(format!(
                "dense form matrix is only defined for p = 2, table has p = {}",
                self.p
            )));
        }
        let n = self.mesh.n_nodes();
        let mut k = DMatrix::<f64>::zeros(n, n);
        for q in &self.points {
            let (ex, ey) = (q.ex as usize, q.ey as usize);
            let idx = [ex, ex + 1, ey, ey + 1];
            let dv = [1.0 - q.lx, q.lx, -(1.0 - q.ly), -q.ly];
            for a in 0..4 {
                for b in 0..4 {
                    k[(idx[a], idx[b])] += 0.5 * q.w * dv[a] * dv[b];
                }
            }
        }
        Ok(k)
    }
}

/// Build the pair table for `mesh` and `(p, s, quad_order)` from `params`.
pub fn build_quad_table(mesh: Arc<Mesh>, params: &Params) -> Result<QuadTable> {
    params.validate()?;
    let q = params.quad_order;
    let legendre = gauss_legendre(q);
    let theta_rule = gauss_legendre(q);
    let radial_touch = gauss_jacobi(RADIAL_NODES, params.p - params.ps());
    let radial_ident = gauss_jacobi(RADIAL_NODES, params.p - 1.0 - params.ps());
    let ctx = RuleContext {
        mesh: &mesh,
        p: params.p,
        ps: params.ps(),
        legendre: &legendre,
        theta: &theta_rule,
        radial_touch: &radial_touch,
        radial_ident: &radial_ident,
    };

    let m = mesh.n_elements();
    let mut pairs = Vec::new();
    for e in 0..m {
        for f in e..m {
            if mesh.element_region(e) == Region::Exterior && mesh.element_region(f) == Region::Exterior {
                continue;
            }
            pairs.push((e, f));
        }
    }
    let rules: Vec<(PairKind, Vec<QuadPoint>)> = pairs
        .par_iter()
        .map(|&(e, f)| ctx.pair_rule(e, f))
        .collect();

    let mut points = Vec::with_capacity(rules.iter().map(|r| r.1.len()).sum());
    let mut blocks = Vec::with_capacity(rules.len());
    for ((e, f), (kind, pts)) in pairs.into_iter().zip(rules) {
        let start = points.len();
        points.extend(pts);
        blocks.push(PairBlock {
            e,
            f,
            kind,
            range: start..points.len(),
        });
    }
    let tail = tail_report(&mesh, params)?;
    Ok(QuadTable {
        mesh,
        p: params.p,
        s: params.s,
        quad_order: q,
        points,
        blocks,
        tail,
    })
}

fn tail_report(mesh: &Mesh, params: &Params) -> Result<TailReport> {
    let ps = params.ps();
    let (lo, hi) = mesh.collar_bounds();
    let mut per_node = Vec::new();
    let mut max = 0.0_f64;
    let mut worst_side = 0.0_f64;
    for i in mesh.interior_nodes() {
        let x = mesh.nodes()[i];
        let t = tail_weight(x, mesh, params)?;
        per_node.push((x, t));
        max = max.max(t);
        let side = super::one_sided_tail(x - lo, ps)?.max(super::one_sided_tail(hi - x, ps)?);
        worst_side = worst_side.max(side);
    }
    Ok(TailReport {
        per_node,
        max,
        insufficient: worst_side > TailReport::FLAG_THRESHOLD,
    })
}

struct RuleContext<'a> {
    mesh: &'a Mesh,
    p: f64,
    ps: f64,
    legendre: &'a Rule,
    theta: &'a Rule,
    radial_touch: &'a Rule,
    radial_ident: &'a Rule,
}

impl RuleContext<'_> {
    fn pair_rule(&self, e: usize, f: usize) -> (PairKind, Vec<QuadPoint>) {
        debug_assert!(e <= f);
        if e == f {
            (PairKind::Identical, self.identical(e))
        } else if f == e + 1 {
            (PairKind::Touching, self.touching(e, f))
        } else {
            (PairKind::Separated, self.separated(e, f))
        }
    }

    /// Relative coordinates `t = x - y` on the diagonal square; the integrand
    /// is `(h - t)·t^{p-1-ps}` times a constant, integrated by Gauss–Jacobi.
    fn identical(&self, e: usize) -> Vec<QuadPoint> {
        let h = self.mesh.element_length(e);
        let beta = self.p - 1.0 - self.ps;
        let scale = h.powf(beta + 2.0);
        self.radial_ident
            .nodes
            .iter()
            .zip(&self.radial_ident.weights)
            .map(|(&r, &wr)| QuadPoint {
                ex: e as u32,
                ey: e as u32,
                lx: 0.5 * (1.0 + r),
                ly: 0.5 * (1.0 - r),
                // both triangles x > y and x < y
                w: 2.0 * scale * wr * (1.0 - r) / (h * r).powf(self.p),
            })
            .collect()
    }

    /// Shared vertex `v`; `ξ = v - x`, `η = y - v`, polar split
    /// `ρ = ξ + η`, `θ = ξ/ρ`, with the angular range cut where the radial
    /// limit switches from the right element to the left one.
    fn touching(&self, e: usize, f: usize) -> Vec<QuadPoint> {
        let h1 = self.mesh.element_length(e);
        let h2 = self.mesh.element_length(f);
        let gamma = self.p - self.ps;
        let split = h1 / (h1 + h2);
        let mut out = Vec::with_capacity(2 * THETA_PANELS * self.theta.nodes.len() * self.radial_touch.nodes.len());
        let panels = panels(0.0, split).chain(panels(split, 1.0));
        for (lo, hi) in panels {
            for (theta, wt) in self.theta.mapped(lo, hi) {
                let rho_max = if theta <= split {
                    h2 / (1.0 - theta)
                } else {
                    h1 / theta
                };
                let radial = rho_max.powf(gamma + 1.0);
                for (&r, &wr) in self.radial_touch.nodes.iter().zip(&self.radial_touch.weights) {
                    let rho = rho_max * r;
                    let xi = rho * theta;
                    let eta = rho * (1.0 - theta);
                    out.push(QuadPoint {
                        ex: e as u32,
                        ey: f as u32,
                        lx: (1.0 - xi / h1).clamp(0.0, 1.0),
                        ly: (eta / h2).clamp(0.0, 1.0),
                        w: 2.0 * wt * radial * wr / rho.powf(self.p),
                    });
                }
            }
        }
        out
    }

    /// Composite tensor Gauss rule.
    fn separated(&self, e: usize, f: usize) -> Vec<QuadPoint> {
        let (x0, x1) = self.mesh.element_bounds(e);
        let (y0, y1) = self.mesh.element_bounds(f);
        let gap = y0 - x1;
        let size = (x1 - x0).max(y1 - y0);
        let n_split = if gap < 1.5 * size { NEAR_SPLITS } else { FAR_SPLITS };
        let splits: Vec<(f64, f64)> = (0..n_split)
            .map(|k| (k as f64 / n_split as f64, (k + 1) as f64 / n_split as f64))
            .collect();
        let (hx, hy) = (x1 - x0, y1 - y0);
        let mut out = Vec::with_capacity(splits.len().pow(2) * self.legendre.nodes.len().pow(2));
        for &(ax, bx) in &splits {
            for (lx, wx) in self.legendre.mapped(ax, bx) {
                let x = x0 + lx * hx;
                for &(ay, by) in &splits {
                    for (ly, wy) in self.legendre.mapped(ay, by) {
                        let y = y0 + ly * hy;
                        out.push(QuadPoint {
                            ex: e as u32,
                            ey: f as u32,
                            lx,
                            ly,
                            w: 2.0 * wx * wy * hx * hy * kernel_unchecked(x, y, self.ps),
                        });
                    }
                }
            }
        }
        out
    }
}

fn panels(lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> {
    let w = (hi - lo) / THETA_PANELS as f64;
    (0..THETA_PANELS).map(move |k| (lo + k as f64 * w, lo + (k + 1) as f64 * w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, Interval};

    fn table(n: usize, p: f64, s: f64) -> QuadTable {
        let mesh = Arc::new(build_mesh(Interval::new(0.0, 1.0).unwrap(), n, 0.5, n / 2).unwrap());
        build_quad_table(mesh, &Params::new(p, s).unwrap()).unwrap()
    }

    #[test]
    fn no_exterior_exterior_pairs_and_positive_weights() {
        let t = table(4, 1.5, 0.75);
        for b in t.blocks() {
            assert!(
                t.mesh.element_region(b.e) == Region::Interior || t.mesh.element_region(b.f) == Region::Interior
            );
        }
        assert!(t.points().iter().all(|q| q.w > 0.0 && q.w.is_finite()));
    }

    #[test]
    fn covers_every_admissible_pair_once() {
        let t = table(4, 2.0, 0.5);
        let m = t.mesh.n_elements();
        let n_int = t.mesh.n_interior;
        let n_ext = m - n_int;
        let expected = n_int * (n_int + 1) / 2 + n_int * n_ext;
        assert_eq!(t.blocks().len(), expected);
    }

    #[test]
    fn identical_rule_is_exact_for_linear_data() {
        // ∬_{[0,h]²} |x-y|^{p-1-ps} = 2 h^{β+2} / ((β+1)(β+2))
        let t = table(4, 3.0, 0.25);
        let (p, ps) = (3.0, 0.75);
        let beta = p - 1.0 - ps;
        for b in t.blocks().iter().filter(|b| b.kind == PairKind::Identical) {
            let h = t.mesh.element_length(b.e);
            let sum: f64 = t
                .block_points(b)
                .iter()
                .map(|q| q.w * ((q.lx - q.ly) * h).abs().powf(p))
                .sum();
            let exact = 2.0 * h.powf(beta + 2.0) / ((beta + 1.0) * (beta + 2.0));
            assert!((sum - exact).abs() < 1e-13 * exact);
        }
    }
}

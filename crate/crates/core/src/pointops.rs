//! Pointwise evaluation of the operator and of the nonlocal Neumann
//! derivative, the Neumann extension, and the nonlocal divergence and
//! integration-by-parts checks.
//!
//! All integrals in `y` are truncated to the collar, as in the energy. Both
//! calculus identities then hold exactly for the truncated operators, so
//! the residuals reported here measure quadrature error only.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{FormEvaluator, Power};
use crate::geometry::{min_max, DiscreteFunction, Field, Mesh, Params, Region};
use crate::quadrature::adaptive::{integrate, integrate_pieces, Tolerance};
use crate::quadrature::rules::{gauss_legendre, Rule};
use crate::quadrature::{kernel_unchecked, tail_weight, QuadTable};
use crate::solvers::root_find_monotone;

/// Part of the PV window, next to the singularity, handled by the local
/// Taylor model instead of sampling `u`.
const TAYLOR_FRACTION: f64 = 1e-2;

/// Panels of the graded rule on the collar element touching `∂Ω`.
const BOUNDARY_PANELS: usize = 4;

/// Points sampled to bound the oscillation of `u` for tail estimates.
const OSC_SAMPLES: usize = 64;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PointEval {
    pub value: f64,
    /// Half-width of the symmetric cancellation window.
    pub pv_inner_radius: f64,
    pub quad_error_est: f64,
    /// Estimate of the truncated contribution beyond the collar, assuming the
    /// oscillation of `u` there does not exceed its oscillation on the collar.
    pub tail_bound: f64,
}

fn tolerance(params: &Params) -> Tolerance {
    Tolerance::new(1e-13, params.tol_quad * 1e-3)
}

/// Exponent making `t = z^m` flatten `t^{p-1-ps}`-type endpoint behaviour.
fn grading_exponent(params: &Params) -> f64 {
    (2.0 / (params.p - params.ps())).ceil().max(1.0)
}

fn check_interior(mesh: &Mesh, x: f64) -> Result<()> {
    if !(x > mesh.omega.a && x < mesh.omega.b) {
        return Err(Error::Domain(format!(
            "operator evaluated at {x}, outside the open interval ({}, {})",
            mesh.omega.a, mesh.omega.b
        )));
    }
    Ok(())
}

fn check_exterior(mesh: &Mesh, x: f64) -> Result<()> {
    if mesh.omega.contains_closed(x) {
        return Err(Error::Domain(format!(
            "Neumann derivative evaluated at {x}, inside the closed domain"
        )));
    }
    Ok(())
}

fn tail_estimate(u: &dyn Fn(f64) -> f64, ux: f64, x: f64, mesh: &Mesh, params: &Params) -> Result<f64> {
    let (lo, hi) = mesh.collar_bounds();
    let osc = (0..=OSC_SAMPLES)
        .map(|k| (ux - u(lo + (hi - lo) * k as f64 / OSC_SAMPLES as f64)).abs())
        .fold(0.0, f64::max);
    Ok(tail_weight(x, mesh, params)? * osc.powf(params.p - 1.0))
}

/// `∫ J_p(u(x) - u(y)) |x - y|^{-1-ps} dy` over `y` in the collar outside
/// `(x - δ, x + δ)`.
fn outer_part(
    u: &dyn Fn(f64) -> f64,
    ux: f64,
    x: f64,
    delta: f64,
    extra_breaks: &[f64],
    mesh: &Mesh,
    params: &Params,
) -> (f64, f64) {
    let pw = Power::new(params.p);
    let ps = params.ps();
    let (lo, hi) = mesh.collar_bounds();
    let f = |y: f64| pw.j(ux - u(y)) * kernel_unchecked(x, y, ps);
    let mut value = 0.0;
    let mut error = 0.0;
    for (start, end) in [(lo, x - delta), (x + delta, hi)] {
        if end <= start {
            continue;
        }
        let mut breaks = vec![start, end];
        breaks.extend(
            [mesh.omega.a, mesh.omega.b]
                .iter()
                .chain(extra_breaks)
                .copied()
                .filter(|&t| t > start && t < end),
        );
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let r = integrate_pieces(f, &breaks, tolerance(params));
        value += r.value;
        error += r.error;
    }
    (value, error)
}

/// `∫_0^{t_f} t^{p-2-ps} [J_p(a - bt) - J_p(a + bt)] dt`, the paired
/// integrand for the local model `u(x ± t) = u(x) ± a t + b t²`.
fn taylor_part(a: f64, b: f64, t_floor: f64, params: &Params) -> (f64, f64) {
    let pw = Power::new(params.p);
    let (p, ps) = (params.p, params.ps());
    let m = grading_exponent(params);
    // [J(a - bt) - J(a + bt)] / t without cancellation for small bt
    let ratio = |t: f64| {
        let eps = b * t;
        if a != 0.0 && eps.abs() < 1e-4 * a.abs() {
            -2.0 * b * (p - 1.0) * a.abs().powf(p - 2.0)
        } else {
            (pw.j(a - eps) - pw.j(a + eps)) / t
        }
    };
    // t = t_f z^m
    let g = |z: f64| {
        let t = t_floor * z.powf(m);
        if t == 0.0 {
            return 0.0;
        }
        ratio(t) * t.powf(p - 1.0 - ps) * t_floor * m * z.powf(m - 1.0)
    };
    let r = integrate(g, 0.0, 1.0, tolerance(params));
    (r.value, r.error)
}

/// Principal-value evaluation of the operator at an interior point `x` for a
/// `C²` function.
///
/// Inside `(x - δ, x + δ)` the contributions of `x + t` and `x - t` are
/// paired, which cancels the leading singularity. The innermost part,
/// `t < δ/100`, uses the quadratic Taylor model of `u` at `x` (coefficients
/// by central differences) instead of sampling `u`, where rounding in
/// `u(x) - u(x ± t)` would dominate.
pub fn eval_plap<F: Fn(f64) -> f64>(u: F, x: f64, mesh: &Mesh, params: &Params, window: f64) -> Result<PointEval> {
    params.validate()?;
    check_interior(mesh, x)?;
    if !(window > 0.0) {
        return Err(Error::Usage(format!("PV window must be positive, got {window}")));
    }
    let (lo, hi) = mesh.collar_bounds();
    let reach = (x - lo).min(hi - x);
    let mut delta = window;
    if delta >= reach {
        log::warn!("PV window {window} reaches past the collar at x = {x}; shrinking to {}", 0.5 * reach);
        delta = 0.5 * reach;
    }
    let ux = u(x);
    let pw = Power::new(params.p);
    let ps = params.ps();

    let h = 1e-3 * delta;
    let (up, um) = (u(x + h), u(x - h));
    let a = (up - um) / (2.0 * h);
    let b = (up - 2.0 * ux + um) / (2.0 * h * h);
    let t_floor = TAYLOR_FRACTION * delta;
    let (model, model_err) = taylor_part(a, b, t_floor, params);

    let paired = |t: f64| (pw.j(ux - u(x + t)) + pw.j(ux - u(x - t))) * t.powf(-1.0 - ps);
    let window_part = integrate(paired, t_floor, delta, tolerance(params));

    let (outer, outer_err) = outer_part(&u, ux, x, delta, &[], mesh, params);
    Ok(PointEval {
        value: model + window_part.value + outer,
        pv_inner_radius: delta,
        quad_error_est: model_err + window_part.error + outer_err,
        tail_bound: tail_estimate(&u, ux, x, mesh, params)?,
    })
}

/// The operator applied to a piecewise-linear function at a point that is
/// not a node. Inside the window reaching to the nearest node `u` is
/// linear, so the paired integrand vanishes identically there.
pub fn eval_plap_discrete(u: &DiscreteFunction, x: f64, params: &Params) -> Result<PointEval> {
    params.validate()?;
    let mesh = u.mesh();
    check_interior(mesh, x)?;
    let e = mesh.locate(x).ok_or_else(|| Error::Internal(format!("no element holds {x}")))?;
    let (x0, x1) = mesh.element_bounds(e);
    let delta = (x - x0).min(x1 - x);
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("{x} is a mesh node; the operator of a kinked function is not evaluated there")));
    }
    let f = |y: f64| u.at(y);
    let ux = u.at(x);
    let (value, error) = outer_part(&f, ux, x, delta, mesh.nodes(), mesh, params);
    Ok(PointEval {
        value,
        pv_inner_radius: delta,
        quad_error_est: error,
        tail_bound: tail_estimate(&f, ux, x, mesh, params)?,
    })
}

/// An exterior point `x` described by its side of `Ω` and its distance to
/// `∂Ω`. Graded rules put points far closer to `∂Ω` than the spacing of
/// floating-point numbers near `b`, so `x` itself cannot carry `d`.
#[derive(Clone, Copy, Debug)]
struct Outside {
    /// `-1` left of `Ω`, `+1` right of it.
    side: f64,
    d: f64,
}

impl Outside {
    fn of(x: f64, mesh: &Mesh) -> Self {
        if x < mesh.omega.a {
            Outside { side: -1.0, d: mesh.omega.a - x }
        } else {
            Outside { side: 1.0, d: x - mesh.omega.b }
        }
    }

    fn near(&self, mesh: &Mesh) -> f64 {
        if self.side < 0.0 {
            mesh.omega.a
        } else {
            mesh.omega.b
        }
    }

    fn x(&self, mesh: &Mesh) -> f64 {
        self.near(mesh) + self.side * self.d
    }
}

/// `∫_Ω J_p(u(x) - u(y)) |x - y|^{-1-ps} dy` for a function given pointwise,
/// by adaptive quadrature graded toward the nearer end of `Ω`. For `x`
/// within `10⁻⁴` interior spacings of `∂Ω`, `u` is assumed smooth across it.
pub fn eval_neumann_fn<F: Fn(f64) -> f64>(u: F, x: f64, mesh: &Mesh, params: &Params) -> Result<f64> {
    params.validate()?;
    check_exterior(mesh, x)?;
    Ok(neumann_fn(&u, Outside::of(x, mesh), mesh, params))
}

/// In offsets from the nearer end `c` of `Ω`: `x = c + side·d` and
/// `y = c - side·σ`, so `|x - y| = d + σ` exactly.
fn neumann_fn<F: Fn(f64) -> f64>(u: &F, out: Outside, mesh: &Mesh, params: &Params) -> f64 {
    let pw = Power::new(params.p);
    let ps = params.ps();
    // the model assumes u smooth across ∂Ω; it is only needed when x is near
    let eta = NEAR_MODEL_FRACTION * mesh.interior_spacing();
    let eta = if out.d < eta { eta } else { 0.0 };
    let g = near_offset(u, out.near(mesh), eta);
    let gx = g(out.side * out.d);
    let mut breaks = graded_breaks(mesh.omega.length(), out.d);
    if eta > 0.0 && eta < mesh.omega.length() {
        breaks.push(eta);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
    }
    let f = |sigma: f64| pw.j(gx - g(-out.side * sigma)) * (out.d + sigma).powf(-1.0 - ps);
    integrate_pieces(f, &breaks, tolerance(params)).value
}

/// Within this fraction of the interior spacing of `∂Ω`, differences
/// `u(x) - u(y)` come from a local model instead of sampled values.
const NEAR_MODEL_FRACTION: f64 = 1e-4;

/// `t ↦ u(c + t) - u(c)`, by a quadratic Taylor model for `|t| < eta`.
/// Sampling both values there would lose most digits of a difference that
/// the kernel then multiplies by `|x - y|^{-1-ps}`.
fn near_offset<F: Fn(f64) -> f64>(u: &F, c: f64, eta: f64) -> impl Fn(f64) -> f64 + '_ {
    let h = 1e-3;
    let uc = u(c);
    let (u1p, u1m, u2p, u2m) = (u(c + h), u(c - h), u(c + 2.0 * h), u(c - 2.0 * h));
    let d1 = (8.0 * (u1p - u1m) - (u2p - u2m)) / (12.0 * h);
    let d2 = (u1p - 2.0 * uc + u1m) / (2.0 * h * h);
    move |t: f64| {
        if t.abs() < eta {
            t * (d1 + d2 * t)
        } else {
            u(c + t) - uc
        }
    }
}

/// Breakpoints of `[0, len]` starting at `d` and doubling in size, for an
/// integrand singular at distance `d` before `0`.
fn graded_breaks(len: f64, d: f64) -> Vec<f64> {
    let mut breaks = vec![0.0];
    let mut step = d;
    while breaks.last().unwrap() + step < len {
        breaks.push(breaks.last().unwrap() + step);
        step *= 2.0;
    }
    breaks.push(len);
    breaks
}

/// Quadrature for `∫_Ω G(y) |x - y|^{-1-ps} dy` at one exterior point `x`:
/// Gauss rules of order `quad_order` per interior element, geometrically
/// subdivided toward `x` on elements closer to `x` than their length.
///
/// Points are held as offsets `σ` from the boundary node nearest to `x`,
/// and values on the element at that node are formed as slope times `σ`.
#[derive(Clone, Debug)]
pub struct NeumannRule {
    pub x: f64,
    /// Index of the boundary node nearest to `x`.
    node: usize,
    /// Interior element touching that node.
    adjacent: usize,
    /// `-1` left of `Ω`, `+1` right of it.
    side: f64,
    /// Element index, local coordinate in `[0, 1]`, kernel-weighted weight,
    /// offset `σ` from the node.
    points: Vec<(usize, f64, f64, f64)>,
}

impl NeumannRule {
    pub fn new(x: f64, mesh: &Mesh, params: &Params) -> Result<Self> {
        check_exterior(mesh, x)?;
        let rule = gauss_legendre(params.quad_order);
        Ok(Self::with_rule(Outside::of(x, mesh), mesh, params.ps(), &rule))
    }

    fn with_rule(out: Outside, mesh: &Mesh, ps: f64, rule: &Rule) -> Self {
        let int = mesh.interior_nodes();
        let (node, adjacent) = if out.side < 0.0 { (int.start, int.start) } else { (int.end - 1, int.end - 2) };
        let c = mesh.nodes()[node];
        let mut points = Vec::new();
        for e in mesh.interior_elements() {
            let (y0, y1) = mesh.element_bounds(e);
            let h = y1 - y0;
            // σ-range of the element, smaller end first
            let (s0, s1) = if out.side < 0.0 { (y0 - c, y1 - c) } else { (c - y1, c - y0) };
            let dist = out.d + s0;
            let pieces: Vec<f64> = if dist < h {
                graded_breaks(h, dist).into_iter().map(|o| s0 + o).collect()
            } else {
                vec![s0, s1]
            };
            for w in pieces.windows(2) {
                for (sigma, ws) in rule.mapped(w[0], w[1]) {
                    let l = if out.side < 0.0 { (sigma - s0) / h } else { (s1 - sigma) / h };
                    points.push((e, l, ws * (out.d + sigma).powf(-1.0 - ps), sigma));
                }
            }
        }
        Self { x: out.x(mesh), node, adjacent, side: out.side, points }
    }

    /// Kernel weight and `u(y_k) - u(node)` for every quadrature point.
    fn offsets<'a>(&'a self, u: &'a [f64], mesh: &Mesh) -> impl Iterator<Item = (f64, f64)> + 'a {
        let (e, c) = (self.adjacent, self.node);
        let slope = (u[e + 1] - u[e]) / mesh.element_length(e);
        self.points.iter().map(move |&(k, l, w, sigma)| {
            let g = if k == e {
                -self.side * slope * sigma
            } else {
                u[k] + l * (u[k + 1] - u[k]) - u[c]
            };
            (w, g)
        })
    }

    /// `Σ w J_p(t - u(y_k))` for nodal values `u` on `mesh` (only interior
    /// ones are read).
    pub fn apply(&self, t: f64, u: &[f64], mesh: &Mesh, p: f64) -> f64 {
        self.apply_offset(t - u[self.node], u, mesh, p)
    }

    /// [`NeumannRule::apply`] with `t` given as its offset `t - u(node)`.
    fn apply_offset(&self, gx: f64, u: &[f64], mesh: &Mesh, p: f64) -> f64 {
        let pw = Power::new(p);
        self.offsets(u, mesh).map(|(w, g)| w * pw.j(gx - g)).sum()
    }

    /// `Σ w u(y_k) / Σ w`, the root of [`NeumannRule::apply`] at `p = 2`.
    pub fn weighted_mean(&self, u: &[f64], mesh: &Mesh) -> f64 {
        let (num, den) = self.offsets(u, mesh).fold((0.0, 0.0), |(n, d), (w, g)| (n + w * g, d + w));
        u[self.node] + num / den
    }
}

/// Nonlocal Neumann derivative of a discrete function at an exterior point
/// of the collar.
pub fn eval_neumann(u: &DiscreteFunction, x: f64, params: &Params) -> Result<f64> {
    params.validate()?;
    let mesh = u.mesh();
    let (lo, hi) = mesh.collar_bounds();
    if !(x >= lo && x <= hi) {
        return Err(Error::Domain(format!("{x} lies outside the collar [{lo}, {hi}]")));
    }
    check_exterior(mesh, x)?;
    Ok(neumann_discrete(u, Outside::of(x, mesh), params))
}

fn neumann_discrete(u: &DiscreteFunction, out: Outside, params: &Params) -> f64 {
    let mesh = u.mesh();
    let rule = NeumannRule::with_rule(out, mesh, params.ps(), &gauss_legendre(params.quad_order));
    let vals = u.values();
    let c = rule.node;
    // exterior element touching the node
    let e = if out.side < 0.0 { c - 1 } else { c };
    let h = mesh.element_length(e);
    let gx = if out.d <= h {
        out.side * (vals[e + 1] - vals[e]) / h * out.d
    } else {
        u.at(out.x(mesh)) - vals[c]
    };
    rule.apply_offset(gx, vals, mesh, params.p)
}

/// Complete interior nodal values by the exterior values that make the
/// Neumann derivative vanish at every exterior node.
///
/// Each exterior value solves the monotone scalar equation
/// `Σ_k w_k J_p(t - u(y_k)) = 0` on `[min_Ω u, max_Ω u]`.
pub fn extend_neumann(u_interior: &[f64], mesh: &Arc<Mesh>, params: &Params) -> Result<DiscreteFunction> {
    params.validate()?;
    let range = mesh.interior_nodes();
    if u_interior.len() != range.len() {
        return Err(Error::Usage(format!(
            "{} interior values for {} interior nodes",
            u_interior.len(),
            range.len()
        )));
    }
    if u_interior.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("interior values must be finite".into()));
    }
    let mut values = vec![0.0; mesh.n_nodes()];
    values[range.clone()].copy_from_slice(u_interior);
    let (lo, hi) = min_max(u_interior.iter().copied());
    let rule = gauss_legendre(params.quad_order);
    let exterior: Vec<usize> = mesh.exterior_nodes().collect();
    let solved: Vec<Result<f64>> = exterior
        .par_iter()
        .map(|&i| {
            if lo == hi {
                return Ok(lo);
            }
            let nr = NeumannRule::with_rule(Outside::of(mesh.nodes()[i], mesh), mesh, params.ps(), &rule);
            root_find_monotone(|t| nr.apply(t, &values, mesh, params.p), (lo, hi), 1e-12)
                .map_err(|e| Error::Internal(format!("Neumann extension at node {i}: {e}")))
        })
        .collect();
    for (i, v) in exterior.into_iter().zip(solved) {
        values[i] = v?;
    }
    DiscreteFunction::new(mesh.clone(), values)
}

#[derive(Clone, Debug, Serialize)]
pub struct DivergenceReport {
    pub residual: f64,
    /// `∫_Ω (-Δ)^s_p u`.
    pub interior_integral: f64,
    /// `∫ 𝒩u` over the collar outside `Ω`.
    pub exterior_integral: f64,
    pub quad_error_est: f64,
    /// Bound on `∫_Ω` of the truncated tail, under the same assumption as
    /// [`PointEval::tail_bound`].
    pub tail_estimate: f64,
}

/// Composite Gauss points and weights on the exterior collar elements; the
/// elements touching `∂Ω` are graded as `d = h z^m` toward the boundary.
fn collar_points(mesh: &Mesh, params: &Params) -> Vec<(Outside, f64)> {
    let rule = gauss_legendre(params.quad_order);
    let m = grading_exponent(params);
    let (a, b) = (mesh.omega.a, mesh.omega.b);
    let mut out = Vec::new();
    for e in 0..mesh.n_elements() {
        if mesh.element_region(e) != Region::Exterior {
            continue;
        }
        let (x0, x1) = mesh.element_bounds(e);
        let h = x1 - x0;
        let side = if x1 <= a { -1.0 } else { 1.0 };
        if x1 == a || x0 == b {
            for k in 0..BOUNDARY_PANELS {
                let (z0, z1) = (k as f64 / BOUNDARY_PANELS as f64, (k + 1) as f64 / BOUNDARY_PANELS as f64);
                for (z, wz) in rule.mapped(z0, z1) {
                    let d = h * z.powf(m);
                    if d > 0.0 {
                        out.push((Outside { side, d }, wz * h * m * z.powf(m - 1.0)));
                    }
                }
            }
        } else {
            out.extend(rule.mapped(x0, x1).map(|(x, w)| (Outside::of(x, mesh), w)));
        }
    }
    out
}

/// Composite Gauss points on `Ω`, graded toward both ends of every element
/// as `x - x_node = (h/2) z^m`.
fn interior_points_graded(mesh: &Mesh, params: &Params, m: f64) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(params.quad_order);
    let mut out = Vec::new();
    for e in mesh.interior_elements() {
        let (x0, x1) = mesh.element_bounds(e);
        let half = 0.5 * (x1 - x0);
        for (edge, dir) in [(x0, 1.0), (x1, -1.0)] {
            for k in 0..BOUNDARY_PANELS {
                let (z0, z1) = (k as f64 / BOUNDARY_PANELS as f64, (k + 1) as f64 / BOUNDARY_PANELS as f64);
                for (z, wz) in rule.mapped(z0, z1) {
                    let x = edge + dir * half * z.powf(m);
                    // points that round onto the node carry negligible weight
                    if x != edge {
                        out.push((x, wz * half * m * z.powf(m - 1.0)));
                    }
                }
            }
        }
    }
    out
}

/// Grading for smooth `u`: for p < 2 the operator behaves like
/// `|x - c|^{2(p-1)-ps}` at a critical point `c` of `u`, which the graded
/// rule flattens when `c` is a node (in particular on `∂Ω`).
fn smooth_grading_exponent(params: &Params) -> f64 {
    let beta = (2.0 * (params.p - 1.0) - params.ps()).min(0.0);
    (2.0 / (1.0 + beta)).ceil()
}

/// Nonlocal divergence theorem `∫_Ω (-Δ)^s_p u + ∫_{CΩ} 𝒩u = 0` for a
/// smooth `u`, both operators truncated to the collar of `mesh`.
pub fn check_divergence_theorem<F: Fn(f64) -> f64 + Sync>(u: F, mesh: &Mesh, params: &Params) -> Result<DivergenceReport> {
    params.validate()?;
    let window = mesh.interior_spacing();
    let interior: Vec<Result<(f64, f64, f64)>> = interior_points_graded(mesh, params, smooth_grading_exponent(params))
        .par_iter()
        .map(|&(x, w)| {
            let pe = eval_plap(&u, x, mesh, params, window)?;
            Ok((w * pe.value, w * pe.quad_error_est, w * pe.tail_bound))
        })
        .collect();
    let exterior: Vec<f64> = collar_points(mesh, params)
        .par_iter()
        .map(|&(out, w)| w * neumann_fn(&u, out, mesh, params))
        .collect();
    let (mut int, mut err, mut tail) = (0.0, 0.0, 0.0);
    for r in interior {
        let (v, e, t) = r?;
        int += v;
        err += e;
        tail += t;
    }
    let ext: f64 = exterior.iter().sum();
    Ok(DivergenceReport {
        residual: (int + ext).abs(),
        interior_integral: int,
        exterior_integral: ext,
        quad_error_est: err,
        tail_estimate: tail,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IntegrationByPartsReport {
    /// `½ ∬ J_p(Δu) Δv k` from the quadrature table.
    pub lhs: f64,
    /// `∫_Ω v (-Δ)^s_p u + ∫_{CΩ} v 𝒩u` by pointwise evaluation.
    pub rhs: f64,
    pub interior_term: f64,
    pub boundary_term: f64,
    pub residual: f64,
}

/// Integration by parts for discrete `u, v`: the table pairing against the
/// pointwise operator and Neumann derivative of the same piecewise-linear
/// `u`, integrated against `v` by composite Gauss rules.
pub fn check_integration_by_parts(
    u: &DiscreteFunction,
    v: &DiscreteFunction,
    table: &QuadTable,
    params: &Params,
) -> Result<IntegrationByPartsReport> {
    let mesh = table.mesh();
    if !u.same_mesh(mesh) || !v.same_mesh(mesh) {
        return Err(Error::Usage("u, v and the table must share one mesh".into()));
    }
    let lhs = FormEvaluator::new(table, params)?.pairing(u.values(), v.values())?;
    // d^{p-1-ps} behaviour at the kinks of piecewise-linear u
    let interior: Vec<Result<f64>> = interior_points_graded(mesh, params, grading_exponent(params))
        .par_iter()
        .map(|&(x, w)| Ok(w * v.at(x) * eval_plap_discrete(u, x, params)?.value))
        .collect();
    let boundary: Vec<f64> = collar_points(mesh, params)
        .par_iter()
        .map(|&(out, w)| w * v.at(out.x(mesh)) * neumann_discrete(u, out, params))
        .collect();
    let interior_term = interior.into_iter().sum::<Result<f64>>()?;
    let boundary_term: f64 = boundary.iter().sum();
    let rhs = interior_term + boundary_term;
    Ok(IntegrationByPartsReport {
        lhs,
        rhs,
        interior_term,
        boundary_term,
        residual: (lhs - rhs).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, Interval};

    fn mesh() -> Arc<Mesh> {
        Arc::new(build_mesh(Interval::new(0.0, 1.0).unwrap(), 8, 1.0, 8).unwrap())
    }

    #[test]
    fn neumann_of_unit_step_matches_closed_form() {
        // u = 1 on Ω, 0 at x = 2: -∫₀¹ (2 - y)^{-1-ps} dy
        let m = mesh();
        for (p, want) in [(2.0, -0.5), (3.0, -(2.0 / 3.0) * (1.0 - 2f64.powf(-1.5)))] {
            let params = Params::new(p, 0.5).unwrap();
            let u = |y: f64| if (0.0..=1.0).contains(&y) { 1.0 } else { 0.0 };
            let got = eval_neumann_fn(u, 2.0, &m, &params).unwrap();
            assert!((got - want).abs() < 1e-10, "p={p}: {got} vs {want}");
        }
    }

    #[test]
    fn neumann_rejects_closed_domain() {
        let m = mesh();
        let params = Params::new(2.0, 0.5).unwrap();
        let u = DiscreteFunction::constant(m.clone(), 1.0);
        assert!(matches!(eval_neumann(&u, 1.0, &params), Err(Error::Domain(_))));
        assert_eq!(eval_neumann(&u, -0.3, &params).unwrap(), 0.0);
    }

    #[test]
    fn plap_of_constant_and_linear() {
        let m = Arc::new(build_mesh(Interval::new(-1.0, 1.0).unwrap(), 8, 1.0, 4).unwrap());
        let params = Params::new(1.6, 0.4).unwrap();
        let c = eval_plap(|_| 2.5, 0.1, &m, &params, 0.25).unwrap();
        assert_eq!(c.value, 0.0);
        let lin = eval_plap(|y| y, 0.0, &m, &params, 0.25).unwrap();
        assert!(lin.value.abs() < 1e-12, "{}", lin.value);
    }

    #[test]
    fn extension_of_constant_is_constant() {
        let m = mesh();
        let params = Params::new(1.5, 0.3).unwrap();
        let u = extend_neumann(&vec![0.7; 9], &m, &params).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.7));
    }
}

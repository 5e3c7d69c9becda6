//! Constant-sign critical points of `𝓔_±(u) = (1/p)‖u‖^p - ∫_Ω F(x, u^±)`.
//!
//! Each direction `u` is scaled to the maximum `t*(u)` of its fiber
//! `t ↦ 𝓔(t u)`, and `Ψ(u) = 𝓔(t*(u) u)` is minimized. Since `t*` is a
//! critical point of the fiber, `∇Ψ(u) = t* ∇𝓔(t* u)`, so a stationary
//! direction gives a critical point of `𝓔`. For the power model `t*` is
//! explicit; otherwise it is the root of the fiber derivative.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{full_norm_preconditioner, interior_rule, NonlinearitySpec, SolveReport};
use crate::error::{Error, Result};
use crate::forms::FormEvaluator;
use crate::geometry::{DiscreteFunction, Params};
use crate::quadrature::rules::Rule;
use crate::quadrature::QuadTable;
use crate::solvers::{dual_norm, minimize_preconditioned, root_find_monotone, DescentConfig, Objective};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignChoice {
    Plus,
    Minus,
}

impl SignChoice {
    fn truncate(self, t: f64) -> f64 {
        match self {
            SignChoice::Plus => t.max(0.0),
            SignChoice::Minus => t.min(0.0),
        }
    }
}

struct Nonlinear<'a> {
    ev: FormEvaluator<'a>,
    spec: &'a NonlinearitySpec,
    sign: SignChoice,
    rule: Rule,
    p: f64,
}

impl Nonlinear<'_> {
    /// Calls `visit(x, weight, t, φ-weights)` at every interior Gauss point.
    fn for_points(&self, u: &[f64], mut visit: impl FnMut(usize, f64, f64, f64, f64)) {
        let mesh = self.ev.mesh();
        for e in mesh.interior_elements() {
            let (x0, x1) = mesh.element_bounds(e);
            let h = x1 - x0;
            for (&t, &w) in self.rule.nodes.iter().zip(&self.rule.weights) {
                let val = self.sign.truncate(u[e] * (1.0 - t) + u[e + 1] * t);
                visit(e, x0 + t * h, h * w, val, t);
            }
        }
    }

    /// `∫_Ω F(x, u^±)`.
    fn primitive_integral(&self, u: &[f64]) -> f64 {
        let mut total = 0.0;
        self.for_points(u, |_, x, w, v, _| total += w * (self.spec.primitive)(x, v));
        total
    }

    /// `∫_Ω f(x, u^±) φ_i` added into `out` with factor `scale`.
    fn add_source_gradient(&self, u: &[f64], scale: f64, out: &mut [f64]) {
        self.for_points(u, |e, x, w, v, t| {
            let c = scale * w * (self.spec.f)(x, v);
            out[e] += c * (1.0 - t);
            out[e + 1] += c * t;
        });
    }

    /// `‖u‖^p = φ(u) + ∫_Ω |u|^p`.
    fn norm_p(&self, u: &[f64]) -> Result<f64> {
        Ok(self.ev.seminorm(u)? / 2.0 + self.ev.mass(u)?)
    }

    fn energy(&self, u: &[f64]) -> Result<f64> {
        Ok(self.norm_p(u)? / self.p - self.primitive_integral(u))
    }

    /// `∇𝓔(u)` into `grad`; returns `𝓔(u)`.
    fn energy_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let mut mg = vec![0.0; u.len()];
        let semi = self.ev.seminorm_and_gradient(u, grad)?;
        let mass = self.ev.mass_and_gradient(u, &mut mg)?;
        for (g, m) in grad.iter_mut().zip(&mg) {
            *g += m;
        }
        self.add_source_gradient(u, -1.0, grad);
        Ok((semi / 2.0 + mass) / self.p - self.primitive_integral(u))
    }

    /// Maximizer of `t ↦ 𝓔(t u)` on `t > 0`.
    fn fiber_max(&self, u: &[f64]) -> Result<f64> {
        let mut trunc_pow = 0.0;
        self.for_points(u, |_, _, w, v, _| trunc_pow += w * v.abs().powf(self.spec.r));
        if !(trunc_pow > 0.0) {
            return Err(Error::Domain(format!(
                "the {:?} part of the direction vanishes on Ω",
                self.sign
            )));
        }
        let norm = self.norm_p(u)?;
        if self.spec.model {
            return Ok((norm / trunc_pow).powf(1.0 / (self.spec.r - self.p)));
        }
        // t^{1-p} d/dt 𝓔(t u) = ‖u‖^p - t^{1-p} ∫ f(x, t u^±) u^±, decreasing
        let slope = |t: f64| {
            let mut s = 0.0;
            self.for_points(u, |_, x, w, v, _| s += w * (self.spec.f)(x, t * v) * v);
            norm - s / t.powf(self.p - 1.0)
        };
        let (mut lo, mut hi) = (1.0, 1.0);
        for _ in 0..200 {
            if slope(lo) > 0.0 {
                break;
            }
            lo *= 0.5;
        }
        for _ in 0..200 {
            if slope(hi) < 0.0 {
                break;
            }
            hi *= 2.0;
        }
        if !(slope(lo) > 0.0 && slope(hi) < 0.0) {
            return Err(Error::Domain("fiber map has no interior maximum".into()));
        }
        root_find_monotone(|t| -slope(t), (lo, hi), 1e-14 * hi)
    }

    fn project(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let t = self.fiber_max(u)?;
        Ok((t, u.iter().map(|x| t * x).collect()))
    }
}

/// `Ψ(u) = 𝓔(t*(u) u)`.
struct FiberReduced<'a> {
    inner: Nonlinear<'a>,
}

impl Objective for FiberReduced<'_> {
    fn value(&self, u: &[f64]) -> Result<f64> {
        let (_, v) = self.inner.project(u)?;
        self.inner.energy(&v)
    }

    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let (t, v) = self.inner.project(u)?;
        let e = self.inner.energy_and_gradient(&v, grad)?;
        grad.iter_mut().for_each(|g| *g *= t);
        Ok(e)
    }
}

fn setup<'a>(
    spec: &'a NonlinearitySpec,
    sign: SignChoice,
    table: &'a QuadTable,
    params: &Params,
) -> Result<Nonlinear<'a>> {
    if !(spec.r > params.p) {
        return Err(Error::Config(format!(
            "exponent r = {} must exceed p = {}",
            spec.r, params.p
        )));
    }
    Ok(Nonlinear {
        ev: FormEvaluator::new(table, params)?,
        spec,
        sign,
        rule: interior_rule(table),
        p: params.p,
    })
}

/// Scales `u` onto the Nehari set of `𝓔_+` for the power model.
pub fn nehari_project(
    u: &DiscreteFunction,
    spec: &NonlinearitySpec,
    table: &QuadTable,
    params: &Params,
) -> Result<DiscreteFunction> {
    if !spec.model {
        return Err(Error::Usage("Nehari scaling is explicit only for the power model".into()));
    }
    if !u.same_mesh(table.mesh()) {
        return Err(Error::Usage("function and table live on different meshes".into()));
    }
    let nl = setup(spec, SignChoice::Plus, table, params)?;
    let (_, v) = nl.project(u.values())?;
    u.with_values(v)
}

pub fn mountain_descent_config() -> DescentConfig {
    DescentConfig::default().with_grad_tol(1e-10)
}

/// Lowest-energy constant-sign critical point over the seeds. Seeds run in
/// parallel; certified results are preferred over uncertified ones.
pub fn mountain_pass_solve(
    sign: SignChoice,
    spec: &NonlinearitySpec,
    table: &QuadTable,
    params: &Params,
    seeds: &[DiscreteFunction],
) -> Result<SolveReport> {
    mountain_pass_solve_with(sign, spec, table, params, seeds, &mountain_descent_config())
}

pub fn mountain_pass_solve_with(
    sign: SignChoice,
    spec: &NonlinearitySpec,
    table: &QuadTable,
    params: &Params,
    seeds: &[DiscreteFunction],
    cfg: &DescentConfig,
) -> Result<SolveReport> {
    if seeds.is_empty() {
        return Err(Error::Usage("at least one seed is required".into()));
    }
    if seeds.iter().any(|s| !s.same_mesh(table.mesh())) {
        return Err(Error::Usage("seed lives on a different mesh".into()));
    }
    setup(spec, sign, table, params)?;
    let results: Vec<Result<SolveReport>> = seeds
        .par_iter()
        .map(|seed| solve_one(sign, spec, table, params, seed, cfg))
        .collect();
    let mut best: Option<SolveReport> = None;
    let mut last_err = None;
    for r in results {
        match r {
            Ok(rep) => {
                let better = match &best {
                    None => true,
                    Some(b) => (rep.certified, -rep.objective) > (b.certified, -b.objective),
                };
                if better {
                    best = Some(rep);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(rep) => {
            if !rep.certified {
                log::warn!("mountain-pass solution NOT CERTIFIED: residual {:.3e}", rep.grad_residual);
            }
            Ok(rep)
        }
        None => Err(last_err.expect("no seeds")),
    }
}

fn solve_one(
    sign: SignChoice,
    spec: &NonlinearitySpec,
    table: &QuadTable,
    params: &Params,
    seed: &DiscreteFunction,
    cfg: &DescentConfig,
) -> Result<SolveReport> {
    let obj = FiberReduced { inner: setup(spec, sign, table, params)? };
    let (_, x0) = obj.inner.project(seed.values())?;
    let metric = table.mesh().lumped_weights();
    let precond = full_norm_preconditioner(&obj.inner.ev, &x0)?;
    let min = minimize_preconditioned(&obj, &x0, &metric, &precond, cfg)?;
    let (_, v) = obj.inner.project(&min.x)?;
    let mut grad = vec![0.0; v.len()];
    let energy = obj.inner.energy_and_gradient(&v, &mut grad)?;
    let residual = dual_norm(&grad, &metric);
    let mut stats = min.stats;
    stats.converged &= residual.is_finite();
    Ok(SolveReport::new(seed.with_values(v)?, residual, energy, stats))
}

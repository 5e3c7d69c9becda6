//! Stationary problems: the coercive source problem and constant-sign
//! critical points of the superlinear problem.
//!
//! Both use the full norm `‖u‖^p = φ(u) + ∫_Ω |u|^p`, whose first variation
//! is `form_gradient + mass_gradient`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::FormEvaluator;
use crate::geometry::{min_max, DiscreteFunction, Mesh, Params};
use crate::quadrature::adaptive::{integrate, Tolerance};
use crate::quadrature::rules::{gauss_legendre, Rule};
use crate::quadrature::QuadTable;
use crate::solvers::{dual_norm, minimize_preconditioned, DescentConfig, Objective, SolveStats};

mod mountain;

pub use mountain::{mountain_pass_solve, mountain_pass_solve_with, nehari_project, SignChoice};

/// Nodal threshold for sign classification.
pub const SIGN_TOL: f64 = 1e-8;
/// Gradient residual required for a certified critical point.
pub const CERTIFY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SignClass {
    Positive,
    Negative,
    Mixed,
    Constant,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub u: DiscreteFunction,
    pub grad_residual: f64,
    pub objective: f64,
    pub sign: SignClass,
    pub min_interior: f64,
    pub max_interior: f64,
    pub min_exterior: f64,
    pub max_exterior: f64,
    pub certified: bool,
    pub stats: SolveStats,
}

impl SolveReport {
    pub(crate) fn new(u: DiscreteFunction, grad_residual: f64, objective: f64, stats: SolveStats) -> Self {
        let (min_interior, max_interior) = u.interior_range();
        let (min_exterior, max_exterior) = if u.mesh().n_exterior == 0 {
            (f64::NAN, f64::NAN)
        } else {
            u.exterior_range()
        };
        let (lo, hi) = min_max(u.values().iter().copied());
        let sign = if hi - lo <= SIGN_TOL {
            SignClass::Constant
        } else if lo >= -SIGN_TOL {
            SignClass::Positive
        } else if hi <= SIGN_TOL {
            SignClass::Negative
        } else {
            SignClass::Mixed
        };
        Self {
            u,
            grad_residual,
            objective,
            sign,
            min_interior,
            max_interior,
            min_exterior,
            max_exterior,
            certified: grad_residual <= CERTIFY_TOL,
            stats,
        }
    }
}

/// Diagonal preconditioner for the full-norm functionals at `u`.
pub(crate) fn full_norm_preconditioner(ev: &FormEvaluator, u: &[f64]) -> Result<Vec<f64>> {
    let mesh = ev.mesh();
    let (lo, hi) = min_max(u.iter().copied());
    let scale = hi.abs().max(lo.abs()).max(1e-3);
    let floor = 1e-3 * scale;
    let mut d = ev.hessian_diagonal(u, floor)?;
    let p = ev.p();
    let lumped = crate::forms::mass_apply(mesh, &vec![1.0; mesh.n_nodes()]);
    let metric = mesh.lumped_weights();
    for ((d, m), w) in d.iter_mut().zip(&lumped).zip(&metric) {
        *d += (p - 1.0) * m * scale.powf(p - 2.0);
        *d = d.max(1e-12 * w);
    }
    Ok(d)
}

/// `(1/p)(φ(u) + ∫_Ω|u|^p) - ∫_Ω f u`.
struct PoissonObjective<'a> {
    ev: FormEvaluator<'a>,
    load: Vec<f64>,
}

impl Objective for PoissonObjective<'_> {
    fn value(&self, u: &[f64]) -> Result<f64> {
        let p = self.ev.p();
        let norm = self.ev.seminorm(u)? / 2.0 + self.ev.mass(u)?;
        Ok(norm / p - crate::solvers::dot(&self.load, u))
    }

    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let p = self.ev.p();
        let mut mg = vec![0.0; u.len()];
        let semi = self.ev.seminorm_and_gradient(u, grad)?;
        let mass = self.ev.mass_and_gradient(u, &mut mg)?;
        for ((g, m), l) in grad.iter_mut().zip(&mg).zip(&self.load) {
            *g += m - l;
        }
        Ok((semi / 2.0 + mass) / p - crate::solvers::dot(&self.load, u))
    }
}

pub fn poisson_descent_config() -> DescentConfig {
    DescentConfig::default().with_grad_tol(1e-10)
}

/// Unique minimizer of `(1/p)‖u‖^p - ∫_Ω f u`.
pub fn solve_poisson(
    f: impl Fn(f64) -> f64,
    table: &QuadTable,
    params: &Params,
    u0: &DiscreteFunction,
) -> Result<SolveReport> {
    solve_poisson_with(f, table, params, u0, &poisson_descent_config())
}

pub fn solve_poisson_with(
    f: impl Fn(f64) -> f64,
    table: &QuadTable,
    params: &Params,
    u0: &DiscreteFunction,
    cfg: &DescentConfig,
) -> Result<SolveReport> {
    if !u0.same_mesh(table.mesh()) {
        return Err(Error::Usage("initial guess and table live on different meshes".into()));
    }
    let ev = FormEvaluator::new(table, params)?;
    let load = ev.load_vector(&f);
    if load.iter().any(|l| !l.is_finite()) {
        return Err(Error::Input("source is not finite at a quadrature point".into()));
    }
    let obj = PoissonObjective { ev, load };
    let metric = table.mesh().lumped_weights();
    let precond = full_norm_preconditioner(&obj.ev, u0.values())?;
    let min = minimize_preconditioned(&obj, u0.values(), &metric, &precond, cfg)?.require_converged("solve_poisson")?;
    let u = u0.with_values(min.x)?;
    let mut grad = vec![0.0; metric.len()];
    obj.value_and_gradient(u.values(), &mut grad)?;
    let residual = dual_norm(&grad, &metric);
    Ok(SolveReport::new(u, residual, min.value, min.stats))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "verdict")]
pub enum Compatibility {
    /// Testing with `v ≡ 1` forces `∫_Ω f + ∫_{CΩ} g = 0`, which fails.
    Incompatible { total: f64 },
    /// Zero total source.
    Compatible,
    /// No source at all: every solution is constant.
    CompatibleConstants,
}

impl fmt::Display for Compatibility {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Compatibility::Incompatible { total } => write!(out, "INCOMPATIBLE (total source {total:.3e})"),
            Compatibility::Compatible => write!(out, "COMPATIBLE"),
            Compatibility::CompatibleConstants => write!(out, "COMPATIBLE_CONSTANTS"),
        }
    }
}

/// Solvability of the pure Neumann problem without zero-order term, with
/// interior source `f` and exterior source `g` on the collar of `mesh`.
pub fn check_compatibility(
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    mesh: &Mesh,
    tol: f64,
) -> Compatibility {
    let omega = mesh.omega;
    let (lo, hi) = mesh.collar_bounds();
    let t = Tolerance::new(tol * 1e-3, 1e-10);
    let int_f = integrate(&f, omega.a, omega.b, t);
    let abs_f = integrate(|x| f(x).abs(), omega.a, omega.b, t);
    let mut int_g = 0.0;
    let mut abs_g = 0.0;
    for (a, b) in [(lo, omega.a), (omega.b, hi)] {
        if b > a {
            int_g += integrate(&g, a, b, t).value;
            abs_g += integrate(|x| g(x).abs(), a, b, t).value;
        }
    }
    let total = int_f.value + int_g;
    if abs_f.value + abs_g <= tol {
        Compatibility::CompatibleConstants
    } else if total.abs() <= tol {
        Compatibility::Compatible
    } else {
        Compatibility::Incompatible { total }
    }
}

type ScalarField = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A nonlinearity `f(x, t)` with primitive `F(x, t) = ∫_0^t f(x, τ) dτ`
/// and the constants of its growth hypotheses.
#[derive(Clone)]
pub struct NonlinearitySpec {
    pub f: ScalarField,
    pub primitive: ScalarField,
    /// `|f(x,t)| ≤ a + c |t|^{r-1}`.
    pub a_bound: f64,
    pub c: f64,
    pub r: f64,
    /// `σ(x,t₁) ≤ θ σ(x,t₂) + β*` for ordered same-sign pairs.
    pub theta: f64,
    pub beta_star: f64,
    /// Set for `f(x,t) = |t|^{r-2} t`.
    pub model: bool,
}

impl fmt::Debug for NonlinearitySpec {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.debug_struct("NonlinearitySpec")
            .field("a_bound", &self.a_bound)
            .field("c", &self.c)
            .field("r", &self.r)
            .field("theta", &self.theta)
            .field("beta_star", &self.beta_star)
            .field("model", &self.model)
            .finish()
    }
}

impl NonlinearitySpec {
    /// `f = |t|^{r-2} t`, `F = |t|^r / r`.
    pub fn model(r: f64) -> Result<Self> {
        if !(r > 1.0 && r.is_finite()) {
            return Err(Error::Config(format!("exponent r must exceed 1, got {r}")));
        }
        Ok(Self {
            f: Arc::new(move |_, t| crate::forms::j_p(t, r)),
            primitive: Arc::new(move |_, t| t.abs().powf(r) / r),
            a_bound: 0.0,
            c: 1.0,
            r,
            theta: 1.0,
            beta_star: 0.0,
            model: true,
        })
    }

    pub fn custom(
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        primitive: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        growth: (f64, f64, f64),
        theta: f64,
        beta_star: f64,
    ) -> Self {
        Self {
            f: Arc::new(f),
            primitive: Arc::new(primitive),
            a_bound: growth.0,
            c: growth.1,
            r: growth.2,
            theta,
            beta_star,
            model: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub pass: bool,
    /// The worst sampled value of the tested quantity.
    pub measure: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub checks: Vec<HypothesisCheck>,
}

impl GrowthReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Samples the four growth hypotheses on `positions × values` for
/// exponent `p`. Report only.
pub fn check_growth_hypotheses(spec: &NonlinearitySpec, positions: &[f64], values: &[f64], p: f64) -> GrowthReport {
    let f = &spec.f;
    let big_f = &spec.primitive;
    let cutoff = values.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let mut checks = Vec::new();

    // f1: subcritical bound
    let mut worst = f64::NEG_INFINITY;
    let mut zero_primitive = 0.0f64;
    for &x in positions {
        zero_primitive = zero_primitive.max(big_f(x, 0.0).abs());
        for &t in values {
            worst = worst.max(f(x, t).abs() - (spec.a_bound + spec.c * t.abs().powf(spec.r - 1.0)));
        }
    }
    checks.push(HypothesisCheck {
        name: "f1",
        pass: worst <= 1e-12 * (1.0 + spec.c * cutoff.powf(spec.r - 1.0)) && zero_primitive == 0.0,
        measure: worst,
        detail: format!("max |f| - (a + c|t|^(r-1)); F(x,0) max {zero_primitive:e}"),
    });

    // f2: F / |t|^p increasing on the large-|t| range and growing
    let mut large: Vec<f64> = values.iter().map(|t| t.abs()).filter(|t| *t >= 0.1 * cutoff && *t > 0.0).collect();
    large.sort_by(f64::total_cmp);
    large.dedup();
    let mut pass = large.len() >= 2;
    let mut min_growth = f64::INFINITY;
    for &x in positions {
        for sign in [1.0, -1.0] {
            let ratio = |t: f64| big_f(x, sign * t) / t.powf(p);
            for w in large.windows(2) {
                if ratio(w[1]) < ratio(w[0]) {
                    pass = false;
                }
            }
            if let (Some(&lo), Some(&hi)) = (large.first(), large.last()) {
                min_growth = min_growth.min(ratio(hi) / ratio(lo));
            }
        }
    }
    pass &= min_growth > 1.0 + 1e-3;
    checks.push(HypothesisCheck {
        name: "f2",
        pass,
        measure: min_growth,
        detail: format!("F/|t|^p over |t| in [{:.3e}, {cutoff:.3e}]: growth factor", 0.1 * cutoff),
    });

    // f3: σ = f t - p F quasi-monotone on same-sign ordered pairs
    let mut worst = f64::NEG_INFINITY;
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    for &x in positions {
        let sigma = |t: f64| f(x, t) * t - p * big_f(x, t);
        let s: Vec<f64> = sorted.iter().map(|&t| sigma(t)).collect();
        for i in 0..sorted.len() {
            for j in 0..sorted.len() {
                // |t₁| ≤ |t₂| with t₁, t₂ on the same side of zero
                let (t1, t2) = (sorted[i], sorted[j]);
                let same_side = (t1 >= 0.0 && t2 >= t1) || (t1 <= 0.0 && t2 <= t1);
                if same_side {
                    worst = worst.max(s[i] - spec.theta * s[j] - spec.beta_star);
                }
            }
        }
    }
    checks.push(HypothesisCheck {
        name: "f3",
        pass: worst <= 1e-12 * (1.0 + cutoff.powf(spec.r.max(p))),
        measure: worst,
        detail: "max σ(t₁) - θσ(t₂) - β*".into(),
    });

    // f4: f / J_p(t) decays to zero; checked as a trend over the smallest
    // decade of sampled |t|
    let mut small: Vec<f64> = values.iter().map(|t| t.abs()).filter(|t| *t > 0.0).collect();
    small.sort_by(f64::total_cmp);
    small.dedup();
    let t0 = small.first().copied().unwrap_or(0.0);
    small.retain(|t| *t <= 10.0 * t0);
    let mut worst = 0.0f64;
    let mut pass = small.len() >= 2;
    for &x in positions {
        for sign in [1.0, -1.0] {
            let q = |t: f64| (f(x, sign * t) / crate::forms::j_p(sign * t, p)).abs();
            let qs: Vec<f64> = small.iter().map(|&t| q(t)).collect();
            worst = worst.max(qs[0]);
            pass &= qs.windows(2).all(|w| w[0] <= w[1] + 1e-15);
            let (first, last) = (qs[0], qs[qs.len() - 1]);
            pass &= first <= 1e-12 || first <= 0.5 * last;
        }
    }
    checks.push(HypothesisCheck {
        name: "f4",
        pass,
        measure: worst,
        detail: format!("|f/J_p| at |t| = {t0:.3e}, decreasing toward zero"),
    });
    GrowthReport { checks }
}

/// Interior Gauss rule shared by the nonlinear functionals.
pub(crate) fn interior_rule(table: &QuadTable) -> Rule {
    gauss_legendre(table.quad_order())
}

//! Line-search descent for smooth convex-ish objectives and a bracketing
//! scalar root finder.
//!
//! Gradients are coefficient vectors (dual objects). They are measured in
//! the dual of the weighted `ℓ²` metric `Σ m_i x_i²`, and the descent
//! direction is preconditioned by `m⁻¹`, which keeps iteration counts
//! roughly independent of the mesh size.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{mass_apply, FormEvaluator};
use crate::geometry::{DiscreteFunction, Params};
use crate::quadrature::QuadTable;

pub trait Objective {
    fn value(&self, x: &[f64]) -> Result<f64>;

    /// Objective value; writes the gradient into `grad`.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    SteepestDescent,
    Lbfgs { memory: usize },
}

#[derive(Clone, Debug)]
pub struct DescentConfig {
    pub method: Method,
    /// Stop when the dual gradient norm falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub backtrack_ratio: f64,
    pub max_backtracks: usize,
    /// First trial step of steepest descent; later steps start from twice
    /// the last accepted one.
    pub initial_step: f64,
    /// Consecutive steps allowed inside the rounding floor before giving up.
    pub max_stalls: usize,
    /// A run stopped by rounding stalls still counts as converged when the
    /// gradient is below this. For `p < 2` the gradient is only Hölder
    /// continuous, so its attainable floor is about `ε^{p-1}` times its
    /// scale and can sit above `grad_tol`.
    pub floor_grad_tol: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            method: Method::Lbfgs { memory: 10 },
            grad_tol: 1e-8,
            max_iter: 50_000,
            armijo_c: 1e-4,
            backtrack_ratio: 0.5,
            max_backtracks: 60,
            initial_step: 1.0,
            max_stalls: 8,
            floor_grad_tol: 1e-6,
        }
    }
}

impl DescentConfig {
    pub fn with_grad_tol(mut self, tol: f64) -> Self {
        self.grad_tol = tol;
        self.floor_grad_tol = self.floor_grad_tol.max(tol);
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.floor_grad_tol >= self.grad_tol) {
            return Err(Error::Config("floor_grad_tol must be at least grad_tol".into()));
        }
        if !(self.grad_tol > 0.0 && self.initial_step > 0.0 && self.max_iter > 0) {
            return Err(Error::Config("descent tolerances, step and iteration cap must be positive".into()));
        }
        if !(unit(self.armijo_c) && unit(self.backtrack_ratio)) {
            return Err(Error::Config("armijo_c and backtrack_ratio must lie in (0, 1)".into()));
        }
        if let Method::Lbfgs { memory: 0 } = self.method {
            return Err(Error::Config("L-BFGS memory must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub final_value: f64,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Converged by the rounding-floor rule rather than `grad_tol`.
    pub rounding_limited: bool,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub stats: SolveStats,
}

impl Minimum {
    /// Turn a non-converged run into a solver error carrying its stats.
    pub fn require_converged(self, context: &str) -> Result<Self> {
        if self.stats.converged {
            Ok(self)
        } else {
            let msg = format!(
                "no convergence after {} iterations (gradient norm {:.3e})",
                self.stats.iterations, self.stats.final_grad_norm
            );
            Err(Error::solver(context, msg, Some(self.stats)))
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sqrt(Σ g_i² / m_i)`.
pub fn dual_norm(g: &[f64], metric: &[f64]) -> f64 {
    g.iter().zip(metric).map(|(g, m)| g * g / m).sum::<f64>().sqrt()
}

fn within_rounding(f0: f64, f1: f64) -> bool {
    (f1 - f0).abs() <= 64.0 * f64::EPSILON * (f0.abs() + f1.abs())
}

struct History {
    memory: usize,
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: Vec<f64>,
}

impl History {
    fn new(memory: usize) -> Self {
        Self {
            memory,
            s: Vec::new(),
            y: Vec::new(),
            rho: Vec::new(),
        }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        let scale = dot(&s, &s).sqrt() * dot(&y, &y).sqrt();
        if !(sy > 1e-12 * scale) {
            return;
        }
        if self.s.len() == self.memory {
            self.s.remove(0);
            self.y.remove(0);
            self.rho.remove(0);
        }
        self.s.push(s);
        self.y.push(y);
        self.rho.push(1.0 / sy);
    }

    /// Two-loop recursion with initial matrix `γ m⁻¹`.
    fn direction(&self, g: &[f64], inv_metric: &[f64]) -> Vec<f64> {
        let k = self.s.len();
        let mut q = g.to_vec();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        let gamma = match k {
            0 => 1.0,
            _ => {
                let y = &self.y[k - 1];
                let ydy: f64 = y.iter().zip(inv_metric).map(|(y, d)| y * y * d).sum();
                dot(&self.s[k - 1], y) / ydy
            }
        };
        for (qj, d) in q.iter_mut().zip(inv_metric) {
            *qj *= gamma * d;
        }
        for i in 0..k {
            let beta = self.rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

/// Minimize `obj` from `x0` with Armijo backtracking.
///
/// `metric` holds the positive weights `m_i` of the primal norm. A run that
/// hits `max_iter` or stalls at the rounding floor returns normally with
/// `stats.converged == false`.
pub fn minimize(obj: &dyn Objective, x0: &[f64], metric: &[f64], cfg: &DescentConfig) -> Result<Minimum> {
    minimize_preconditioned(obj, x0, metric, metric, cfg)
}

/// As [`minimize`], but search directions are scaled by `precond⁻¹`
/// (a positive diagonal Hessian estimate) instead of `metric⁻¹`. The
/// stopping test still uses the dual norm of `metric`.
pub fn minimize_preconditioned(
    obj: &dyn Objective,
    x0: &[f64],
    metric: &[f64],
    precond: &[f64],
    cfg: &DescentConfig,
) -> Result<Minimum> {
    cfg.validate()?;
    let n = x0.len();
    if metric.len() != n {
        return Err(Error::Usage(format!(
            "metric has {} entries, iterate has {n}",
            metric.len()
        )));
    }
    if metric.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::Usage("metric weights must be positive".into()));
    }
    if precond.len() != n || precond.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::Usage("preconditioner must be positive with one entry per unknown".into()));
    }
    let inv_metric: Vec<f64> = precond.iter().map(|m| 1.0 / m).collect();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj.value_and_gradient(&x, &mut g)?;
    if !f.is_finite() {
        return Err(Error::Domain("objective is not finite at the initial point".into()));
    }
    let mut history = match cfg.method {
        Method::Lbfgs { memory } => Some(History::new(memory.max(1))),
        Method::SteepestDescent => None,
    };
    let mut stats = SolveStats {
        objective_trace: vec![f],
        ..Default::default()
    };
    let mut step_guess = cfg.initial_step;
    let mut stalls = 0usize;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    loop {
        let gnorm = dual_norm(&g, metric);
        stats.final_grad_norm = gnorm;
        stats.final_value = f;
        if gnorm <= cfg.grad_tol {
            stats.converged = true;
            break;
        }
        if stalls >= cfg.max_stalls {
            if gnorm <= cfg.floor_grad_tol {
                stats.converged = true;
                stats.rounding_limited = true;
                log::debug!("descent stopped at the rounding floor, gradient norm {gnorm:.3e}");
            }
            break;
        }
        if stats.iterations >= cfg.max_iter {
            break;
        }

        let mut d = match &history {
            Some(h) => h.direction(&g, &inv_metric),
            None => g.iter().zip(&inv_metric).map(|(g, w)| -g * w).collect(),
        };
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            if let Some(h) = history.as_mut() {
                h.clear();
            }
            d = g.iter().zip(&inv_metric).map(|(g, w)| -g * w).collect();
            slope = dot(&g, &d);
        }

        let mut alpha = if history.is_some() { 1.0 } else { step_guess };
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            for i in 0..n {
                x_new[i] = x[i] + alpha * d[i];
            }
            let f_try = obj.value_and_gradient(&x_new, &mut g_new)?;
            if f_try.is_finite() {
                if f_try <= f + cfg.armijo_c * alpha * slope {
                    // a decrease lost in rounding still counts as a stall
                    accepted = Some((f_try, within_rounding(f, f_try)));
                    break;
                }
                // below the rounding floor of f, judge the step by its slope
                let slope_new = dot(&g_new, &d);
                if within_rounding(f, f_try) && (slope_new <= 0.0 || slope_new <= -0.9 * slope) {
                    accepted = Some((f_try, true));
                    break;
                }
                // minimizer of the quadratic through f, slope and f_try
                let denom = 2.0 * (f_try - f - alpha * slope);
                let trial = if denom > 0.0 { -slope * alpha * alpha / denom } else { 0.0 };
                alpha = trial.clamp(0.1 * alpha, cfg.backtrack_ratio * alpha);
            } else {
                alpha *= cfg.backtrack_ratio;
            }
        }
        let Some((f_next, at_floor)) = accepted else {
            stalls = cfg.max_stalls;
            continue;
        };
        // floor steps that still shrink the gradient are progress
        stalls = if at_floor && dual_norm(&g_new, metric) >= gnorm { stalls + 1 } else { 0 };

        if let Some(h) = history.as_mut() {
            let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
            let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
            h.push(s, y);
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_next;
        step_guess = (2.0 * alpha).min(1e6);
        stats.iterations += 1;
        stats.objective_trace.push(f);
    }

    Ok(Minimum { x, value: f, stats })
}

/// `v ↦ (1/2τ) ‖v - u_prev‖²_{L²(Ω)} + φ(v)/p`, whose first-order condition
/// `M(v - u_prev)/τ + form_gradient(v) = 0` is one implicit Euler step of the
/// weak flow. Exterior values enter only through `φ`.
pub struct ProxObjective<'a> {
    ev: FormEvaluator<'a>,
    u_prev: &'a [f64],
    tau: f64,
}

impl<'a> ProxObjective<'a> {
    pub fn new(u_prev: &'a DiscreteFunction, tau: f64, table: &'a QuadTable, params: &Params) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Usage(format!("time step must be positive, got {tau}")));
        }
        if !u_prev.same_mesh(table.mesh()) {
            return Err(Error::Usage("previous iterate and table live on different meshes".into()));
        }
        Ok(Self {
            ev: FormEvaluator::new(table, params)?,
            u_prev: u_prev.values(),
            tau,
        })
    }
}

impl Objective for ProxObjective<'_> {
    fn value(&self, v: &[f64]) -> Result<f64> {
        let d: Vec<f64> = v.iter().zip(self.u_prev).map(|(a, b)| a - b).collect();
        let md = mass_apply(self.ev.mesh(), &d);
        Ok(dot(&d, &md) / (2.0 * self.tau) + self.ev.seminorm(v)? / (2.0 * self.ev.p()))
    }

    fn value_and_gradient(&self, v: &[f64], grad: &mut [f64]) -> Result<f64> {
        let d: Vec<f64> = v.iter().zip(self.u_prev).map(|(a, b)| a - b).collect();
        let md = mass_apply(self.ev.mesh(), &d);
        let semi = self.ev.seminorm_and_gradient(v, grad)?;
        for (g, m) in grad.iter_mut().zip(&md) {
            *g += m / self.tau;
        }
        Ok(dot(&d, &md) / (2.0 * self.tau) + semi / (2.0 * self.ev.p()))
    }
}

/// One implicit Euler step of the nonlocal p-heat flow, warm-started at
/// `u_prev`.
pub fn prox_step(
    u_prev: &DiscreteFunction,
    tau: f64,
    table: &QuadTable,
    params: &Params,
    cfg: &DescentConfig,
) -> Result<(DiscreteFunction, SolveStats)> {
    let obj = ProxObjective::new(u_prev, tau, table, params)?;
    let mesh = table.mesh();
    let metric = mesh.lumped_weights();
    let (lo, hi) = crate::geometry::min_max(u_prev.values().iter().copied());
    let floor = 1e-3 * (hi - lo).max(f64::MIN_POSITIVE.sqrt());
    let mut precond = obj.ev.hessian_diagonal(u_prev.values(), floor)?;
    let lumped_mass = mass_apply(mesh, &vec![1.0; mesh.n_nodes()]);
    for ((d, m), w) in precond.iter_mut().zip(&lumped_mass).zip(&metric) {
        *d += m / tau;
        // keeps isolated nodes with negligible curvature well posed
        *d = d.max(1e-12 * w / tau);
    }
    let min = minimize_preconditioned(&obj, u_prev.values(), &metric, &precond, cfg)?
        .require_converged("prox_step")?;
    Ok((u_prev.with_values(min.x)?, min.stats))
}

/// Root of a monotone scalar function on a sign-separating bracket.
///
/// Illinois-modified regula falsi with a bisection step whenever the
/// bracket fails to halve; stops when the bracket is below `tol` (relative
/// to the root magnitude plus one) or `phi` vanishes.
pub fn root_find_monotone(phi: impl Fn(f64) -> f64, bracket: (f64, f64), tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) {
        return Err(Error::Usage(format!("empty bracket [{lo}, {hi}]")));
    }
    let mut f_lo = phi(lo);
    let mut f_hi = phi(hi);
    if !(f_lo.is_finite() && f_hi.is_finite()) {
        return Err(Error::Domain("function is not finite at the bracket ends".into()));
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Usage(format!(
            "bracket [{lo}, {hi}] does not separate signs ({f_lo:e}, {f_hi:e})"
        )));
    }
    let mut side = 0i8;
    for _ in 0..400 {
        let width = hi - lo;
        let mid = 0.5 * (lo + hi);
        if width <= tol * (1.0 + mid.abs()) {
            return Ok(mid);
        }
        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(x > lo && x < hi) {
            x = mid;
        }
        let fx = phi(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        if hi - lo > 0.5 * width {
            // regula falsi stalled on one side
            let m = 0.5 * (lo + hi);
            let fm = phi(m);
            if fm == 0.0 {
                return Ok(m);
            }
            if fm.signum() == f_lo.signum() {
                lo = m;
                f_lo = fm;
            } else {
                hi = m;
                f_hi = fm;
            }
            side = 0;
        }
    }
    Ok(0.5 * (lo + hi))
}

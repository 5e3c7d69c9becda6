//! Nonlocal p-heat flow with homogeneous Neumann condition by proximal
//! (implicit) Euler.
//!
//! Exterior values are free unknowns at every step, so the Neumann
//! condition holds as a natural condition. Each step checks the two
//! conservation properties: mass drift within the solver budget and
//! nonincreasing energy.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::error::Error;
use crate::forms::FormEvaluator;
use crate::geometry::{DiscreteFunction, Interval, Mesh, Params};
use crate::quadrature::QuadTable;
use crate::solvers::{prox_step, DescentConfig, SolveStats};

/// Initial data available from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant { value: f64 },
    /// Unit-height tent over the middle half of `Ω`.
    Hat,
    /// One on the left half of `Ω`, zero elsewhere.
    Step,
    /// `exp(-(x - mid)² / (2 width²))`.
    Gaussian { width: f64 },
}

impl Profile {
    pub fn eval(&self, x: f64, omega: Interval) -> f64 {
        let mid = omega.midpoint();
        let quarter = omega.length() / 4.0;
        match *self {
            Profile::Constant { value } => value,
            Profile::Hat => (1.0 - (x - mid).abs() / quarter).max(0.0),
            Profile::Step => {
                if x < mid {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Gaussian { width } => (-(x - mid).powi(2) / (2.0 * width * width)).exp(),
        }
    }

    /// Nodal interpolant on the whole collar mesh.
    pub fn sample(&self, mesh: &Arc<Mesh>) -> crate::Result<DiscreteFunction> {
        if let Profile::Gaussian { width } = self {
            if !(*width > 0.0) {
                return Err(Error::Config(format!("gaussian width must be positive, got {width}")));
            }
        }
        let omega = mesh.omega;
        DiscreteFunction::interpolate(mesh.clone(), |x| self.eval(x, omega))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    /// `∫_Ω u` per step.
    pub mass: Vec<f64>,
    /// `[u]^p` per step.
    pub energy: Vec<f64>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, DiscreteFunction)>,
    pub step_stats: Vec<SolveStats>,
    #[serde(skip)]
    pub final_state: Option<DiscreteFunction>,
}

#[derive(Debug, ThisError)]
pub enum HeatError {
    #[error("heat setup: {0}")]
    Setup(#[from] Error),
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        source: Error,
        partial: Box<EvolutionTrace>,
    },
    #[error("step {step}: {message}")]
    Invariant {
        step: usize,
        message: String,
        partial: Box<EvolutionTrace>,
    },
}

impl HeatError {
    pub fn partial(&self) -> Option<&EvolutionTrace> {
        match self {
            HeatError::Setup(_) => None,
            HeatError::Step { partial, .. } | HeatError::Invariant { partial, .. } => Some(partial),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HeatOptions {
    pub descent: DescentConfig,
    /// Step indices (0 = initial data) whose states are kept.
    pub snapshot_steps: Vec<usize>,
}

impl Default for HeatOptions {
    fn default() -> Self {
        Self {
            descent: DescentConfig::default(),
            snapshot_steps: Vec::new(),
        }
    }
}

/// `∫_Ω u` by the trapezoid rule, exact for piecewise-linear `u`.
pub fn mass(u: &DiscreteFunction) -> f64 {
    let mesh = u.mesh();
    let v = u.values();
    mesh.interior_elements()
        .map(|e| 0.5 * mesh.element_length(e) * (v[e] + v[e + 1]))
        .sum()
}

pub fn heat_solve(
    u0: &DiscreteFunction,
    tau: f64,
    n_steps: usize,
    table: &QuadTable,
    params: &Params,
) -> Result<EvolutionTrace, HeatError> {
    heat_solve_with(u0, tau, n_steps, table, params, &HeatOptions::default())
}

pub fn heat_solve_with(
    u0: &DiscreteFunction,
    tau: f64,
    n_steps: usize,
    table: &QuadTable,
    params: &Params,
    opts: &HeatOptions,
) -> Result<EvolutionTrace, HeatError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Usage(format!("time step must be positive, got {tau}")).into());
    }
    if n_steps == 0 {
        return Err(Error::Usage("need at least one step".into()).into());
    }
    if !u0.same_mesh(table.mesh()) {
        return Err(Error::Usage("initial data and table live on different meshes".into()).into());
    }
    let ev = FormEvaluator::new(table, params)?;
    let omega_len = table.mesh().omega.length();
    let drift_tol = 10.0 * opts.descent.grad_tol * omega_len.sqrt();

    let mut trace = EvolutionTrace {
        times: vec![0.0],
        mass: vec![mass(u0)],
        energy: vec![ev.seminorm(u0.values())?],
        snapshots: Vec::new(),
        step_stats: Vec::new(),
        final_state: None,
    };
    if opts.snapshot_steps.contains(&0) {
        trace.snapshots.push((0.0, u0.clone()));
    }
    let mut u = u0.clone();
    for step in 1..=n_steps {
        let (next, stats) = match prox_step(&u, tau, table, params, &opts.descent) {
            Ok(r) => r,
            Err(source) => {
                trace.final_state = Some(u);
                return Err(HeatError::Step { step, source, partial: Box::new(trace) });
            }
        };
        let t = step as f64 * tau;
        let m = mass(&next);
        let e = ev.seminorm(next.values())?;
        let prev_m = *trace.mass.last().unwrap();
        let prev_e = *trace.energy.last().unwrap();
        trace.times.push(t);
        trace.mass.push(m);
        trace.energy.push(e);
        trace.step_stats.push(stats);
        if opts.snapshot_steps.contains(&step) {
            trace.snapshots.push((t, next.clone()));
        }
        let message = if (m - prev_m).abs() > drift_tol {
            Some(format!("mass drift {:.3e} exceeds {drift_tol:.3e}", m - prev_m))
        } else if e > prev_e + 1e-12 * trace.energy[0] {
            Some(format!("energy increased from {prev_e:.12e} to {e:.12e}"))
        } else {
            None
        };
        if let Some(message) = message {
            trace.final_state = Some(next);
            return Err(HeatError::Invariant { step, message, partial: Box::new(trace) });
        }
        u = next;
    }
    trace.final_state = Some(u);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_mesh;
    use crate::quadrature::build_quad_table;

    fn mesh() -> Arc<Mesh> {
        Arc::new(build_mesh(Interval::new(0.0, 1.0).unwrap(), 8, 0.5, 4).unwrap())
    }

    #[test]
    fn mass_examples() {
        let m = mesh();
        assert!((mass(&DiscreteFunction::constant(m.clone(), 1.0)) - 1.0).abs() < 1e-15);
        let h = m.interior_spacing();
        let hat = DiscreteFunction::interpolate(m.clone(), |x| (1.0 - (x - 0.5).abs() / h).max(0.0)).unwrap();
        assert!((mass(&hat) - h).abs() < 1e-15);
        let odd = DiscreteFunction::interpolate(m, |x| (x - 0.5).powi(3)).unwrap();
        assert!(mass(&odd).abs() < 1e-15);
    }

    #[test]
    fn constants_are_stationary() {
        let m = mesh();
        let params = Params::new(1.8, 0.3).unwrap();
        let table = build_quad_table(m.clone(), &params).unwrap();
        let u0 = DiscreteFunction::constant(m, 0.4);
        let opts = HeatOptions { snapshot_steps: vec![0, 3], ..Default::default() };
        let tr = heat_solve_with(&u0, 0.01, 3, &table, &params, &opts).unwrap();
        assert!(tr.energy.iter().all(|&e| e == 0.0));
        assert!(tr.mass.iter().all(|&m| m == tr.mass[0]));
        for (_, s) in &tr.snapshots {
            assert!(s.values().iter().all(|&v| v == 0.4));
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let m = mesh();
        let params = Params::new(2.0, 0.5).unwrap();
        let table = build_quad_table(m.clone(), &params).unwrap();
        let u0 = DiscreteFunction::constant(m, 1.0);
        assert!(matches!(heat_solve(&u0, 0.0, 1, &table, &params), Err(HeatError::Setup(_))));
        assert!(matches!(heat_solve(&u0, 0.1, 0, &table, &params), Err(HeatError::Setup(_))));
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Command, Recorder, RunConfig};
use crate::eigen::{dense_spectrum, explore_seeds, first_eigenpair};
use crate::error::{Error, Result};
use crate::evolution::{heat_solve_with, HeatError, HeatOptions};
use crate::geometry::{DiscreteFunction, Mesh};
use crate::pointops::{check_divergence_theorem, check_integration_by_parts};
use crate::quadrature::build_quad_table;
use crate::stationary::{
    check_compatibility, check_growth_hypotheses, mountain_pass_solve, solve_poisson, NonlinearitySpec, SignChoice,
    SolveReport,
};

const VERIFY_TOL: f64 = 1e-3;

pub(super) fn dispatch(cfg: &RunConfig, rec: &mut Recorder) -> Result<()> {
    match cfg.command {
        Command::Verify => verify(cfg, rec),
        Command::Eigen => eigen(cfg, rec),
        Command::Heat => heat(cfg, rec),
        Command::Poisson => poisson(cfg, rec),
        Command::Mountainpass => mountainpass(cfg, rec),
    }
}

#[derive(Serialize)]
struct NodeRow {
    node: usize,
    x: f64,
    value: f64,
}

fn node_rows(u: &DiscreteFunction) -> Vec<NodeRow> {
    u.mesh()
        .nodes()
        .iter()
        .zip(u.values())
        .enumerate()
        .map(|(node, (&x, &value))| NodeRow { node, x, value })
        .collect()
}

/// Smooth random seed `offset + Σ_k c_k cos(kπ(x - a)/|Ω|)`.
fn cosine_seed(mesh: &std::sync::Arc<Mesh>, rng: &mut ChaCha8Rng, offset: f64, amp: f64) -> Result<DiscreteFunction> {
    let c: Vec<f64> = (0..4).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
    let omega = mesh.omega;
    DiscreteFunction::interpolate(mesh.clone(), |x| {
        let z = std::f64::consts::PI * (x - omega.a) / omega.length();
        offset + c.iter().enumerate().map(|(k, ck)| ck * ((k + 1) as f64 * z).cos()).sum::<f64>()
    })
}

#[derive(Serialize)]
struct DivergenceRow {
    function: &'static str,
    residual: f64,
    interior_integral: f64,
    exterior_integral: f64,
    quad_error_est: f64,
    tail_estimate: f64,
}

#[derive(Serialize)]
struct IbpRow {
    pair: &'static str,
    lhs: f64,
    rhs: f64,
    interior_term: f64,
    boundary_term: f64,
    residual: f64,
}

fn verify(cfg: &RunConfig, rec: &mut Recorder) -> Result<()> {
    let params = cfg.params()?;
    let mesh = cfg.mesh()?;
    let omega = mesh.omega;
    let unit = move |x: f64| (x - omega.a) / omega.length();
    let smooth: [(&'static str, Box<dyn Fn(f64) -> f64 + Sync>); 3] = [
        ("quadratic", Box::new(move |x| unit(x).powi(2))),
        ("cosine", Box::new(move |x| (std::f64::consts::PI * unit(x)).cos())),
        ("gaussian", Box::new(move |x| (-8.0 * (unit(x) - 0.4).powi(2)).exp())),
    ];
    let mut rows = Vec::new();
    for (name, u) in &smooth {
        let r = check_divergence_theorem(u, &mesh, &params)?;
        rec.at_most(format!("divergence residual ({name})"), r.residual, VERIFY_TOL);
        rows.push(DivergenceRow {
            function: name,
            residual: r.residual,
            interior_integral: r.interior_integral,
            exterior_integral: r.exterior_integral,
            quad_error_est: r.quad_error_est,
            tail_estimate: r.tail_estimate,
        });
    }
    rec.csv("divergence.csv", rows)?;

    let table = build_quad_table(mesh.clone(), &params)?;
    let pairs: [(&'static str, usize, usize); 3] = [("quadratic,cosine", 0, 1), ("cosine,gaussian", 1, 2), ("gaussian,quadratic", 2, 0)];
    let mut rows = Vec::new();
    for (name, i, j) in pairs {
        let u = DiscreteFunction::interpolate(mesh.clone(), &smooth[i].1)?;
        let v = DiscreteFunction::interpolate(mesh.clone(), &smooth[j].1)?;
        let r = check_integration_by_parts(&u, &v, &table, &params)?;
        rec.at_most(format!("integration by parts residual ({name})"), r.residual, VERIFY_TOL);
        rows.push(IbpRow {
            pair: name,
            lhs: r.lhs,
            rhs: r.rhs,
            interior_term: r.interior_term,
            boundary_term: r.boundary_term,
            residual: r.residual,
        });
    }
    rec.csv("integration_by_parts.csv", rows)
}

#[derive(Serialize)]
struct EigenRow {
    seed_id: usize,
    lambda: f64,
    residual: f64,
    sign_changes: bool,
    linf_int: f64,
    linf_ext: f64,
}

fn eigen(cfg: &RunConfig, rec: &mut Recorder) -> Result<()> {
    let params = cfg.params()?;
    let mesh = cfg.mesh()?;
    let table = build_quad_table(mesh.clone(), &params)?;
    let first = first_eigenpair(&mesh, &table, &params)?;
    rec.at_most("first eigenpair residual", first.residual, 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds = (0..cfg.n_seeds())
        .map(|_| cosine_seed(&mesh, &mut rng, 0.0, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let results = explore_seeds(&mesh, &table, &params, &seeds);

    let mut rows = vec![EigenRow {
        seed_id: 0,
        lambda: first.lambda,
        residual: first.residual,
        sign_changes: first.sign_changes,
        linf_int: first.linf_interior,
        linf_ext: first.linf_exterior,
    }];
    let mut best: Option<crate::eigen::EigenPair> = None;
    let mut failures = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        let pair = match r {
            Ok(pair) => pair,
            Err(e) => {
                log::warn!("seed {}: {e}", k + 1);
                failures.push(e);
                continue;
            }
        };
        rows.push(EigenRow {
            seed_id: k + 1,
            lambda: pair.lambda,
            residual: pair.residual,
            sign_changes: pair.sign_changes,
            linf_int: pair.linf_interior,
            linf_ext: pair.linf_exterior,
        });
        if pair.certified && pair.lambda > 1e-8 {
            rec.flag(format!("seed {} changes sign", k + 1), pair.sign_changes);
            rec.at_most(
                format!("seed {} exterior sup minus interior sup", k + 1),
                pair.linf_exterior - pair.linf_interior,
                1e-10,
            );
            if best.as_ref().map_or(true, |b| pair.lambda < b.lambda) {
                best = Some(pair);
            }
        }
    }
    rec.csv("eigen.csv", rows)?;
    let Some(best) = best else {
        return Err(failures
            .pop()
            .unwrap_or_else(|| Error::solver("eigen", "no seed produced a certified pair", None)));
    };
    rec.csv("eigenfunction.csv", node_rows(&best.u))?;
    if params.p == 2.0 && mesh.n_nodes() <= 400 {
        let dense = dense_spectrum(&table, &params)?;
        if let Some(&l2) = dense.get(1) {
            rec.at_most("relative gap to dense second eigenvalue", (best.lambda - l2).abs() / l2, 1e-6);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct HeatRow {
    t: f64,
    mass: f64,
    energy: f64,
}

fn heat(cfg: &RunConfig, rec: &mut Recorder) -> Result<()> {
    let params = cfg.params()?;
    let mesh = cfg.mesh()?;
    let table = build_quad_table(mesh.clone(), &params)?;
    let u0 = cfg.profile().sample(&mesh)?;
    let tau = cfg.tau();
    let steps = cfg.steps();
    let opts = HeatOptions {
        snapshot_steps: cfg.snapshot_steps.clone().unwrap_or_else(|| vec![0, steps]),
        ..Default::default()
    };
    let (trace, failure) = match heat_solve_with(&u0, tau, steps, &table, &params, &opts) {
        Ok(trace) => (trace, None),
        Err(HeatError::Setup(e)) => return Err(e),
        Err(e) => {
            let partial = e.partial().cloned().expect("step errors carry a trace");
            (partial, Some(e))
        }
    };
    rec.csv(
        "heat.csv",
        (0..trace.times.len()).map(|k| HeatRow {
            t: trace.times[k],
            mass: trace.mass[k],
            energy: trace.energy[k],
        }),
    )?;
    for (t, snap) in &trace.snapshots {
        let step = (t / tau).round() as usize;
        rec.csv(&format!("snapshot_{step:05}.csv"), node_rows(snap))?;
    }
    let drift = trace.mass.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let rise = trace.energy.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let grad_tol = opts.descent.grad_tol;
    rec.at_most("max per-step mass drift", drift, 10.0 * grad_tol * mesh.omega.length().sqrt());
    rec.at_most("max per-step energy increase", rise, 1e-12 * trace.energy[0]);
    match failure {
        None => Ok(()),
        Some(HeatError::Invariant { .. }) => Ok(()),
        Some(HeatError::Step { step, source, .. }) => {
            Err(Error::solver("heat", format!("step {step}: {source}"), None))
        }
        Some(HeatError::Setup(e)) => Err(e),
    }
}

#[derive(Serialize)]
struct PoissonOutput<'a> {
    report: &'a SolveReport,
    pure_neumann_compatibility: String,
}

fn poisson(cfg: &RunConfig, rec: &mut Recorder) -> Result<()> {
    let params = cfg.params()?;
    let mesh = cfg.mesh()?;
    let table = build_quad_table(mesh.clone(), &params)?;
    let source = cfg.source();
    let omega = mesh.omega;
    let f = |x: f64| source.eval(x, omega);
    let verdict = check_compatibility(f, |_| 0.0, &mesh, 1e-10);
    let report = solve_poisson(f, &table, &params, &DiscreteFunction::constant(mesh.clone(), 0.0))?;
    rec.at_most("gradient residual", report.grad_residual, crate::stationary::CERTIFY_TOL);
    rec.json(
        "poisson.json",
        &PoissonOutput { report: &report, pure_neumann_compatibility: verdict.to_string() },
    )?;
    rec.csv("solution.csv", node_rows(&report.u))
}

#[derive(Serialize)]
struct MountainOutput<'a> {
    report: &'a SolveReport,
    growth: &'a crate::stationary::GrowthReport,
}

fn mountainpass(cfg: &RunConfig, rec: &mut Recorder) -> Result<()> {
    let params = cfg.params()?;
    let mesh = cfg.mesh()?;
    let table = build_quad_table(mesh.clone(), &params)?;
    let spec = NonlinearitySpec::model(cfg.nonlinearity_r())?;
    let positions: Vec<f64> = mesh.nodes()[mesh.interior_nodes()].to_vec();
    let mut values: Vec<f64> = (-40..=30).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
    values.extend(values.clone().iter().map(|t| -t));
    let growth = check_growth_hypotheses(&spec, &positions, &values, params.p);
    for c in &growth.checks {
        rec.flag(format!("hypothesis {}", c.name), c.pass);
    }

    let sign = cfg.sign();
    let s = match sign {
        SignChoice::Plus => 1.0,
        SignChoice::Minus => -1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds = (0..cfg.n_seeds())
        .map(|_| cosine_seed(&mesh, &mut rng, 1.0, 0.2).map(|u| u.scaled(s)))
        .collect::<Result<Vec<_>>>()?;
    let report = mountain_pass_solve(sign, &spec, &table, &params, &seeds)?;
    rec.at_most("gradient residual", report.grad_residual, crate::stationary::CERTIFY_TOL);
    let (wrong_part, exterior) = match sign {
        SignChoice::Plus => ((-report.min_interior).max(0.0), report.min_exterior),
        SignChoice::Minus => (report.max_interior.max(0.0), -report.max_exterior),
    };
    rec.at_most("opposite-sign part", wrong_part, 1e-8);
    rec.at_least("strict exterior sign", exterior, f64::MIN_POSITIVE);
    rec.at_least("energy above zero", report.objective, f64::MIN_POSITIVE);
    rec.json("mountainpass.json", &MountainOutput { report: &report, growth: &growth })?;
    rec.csv("solution.csv", node_rows(&report.u))
}

mod common;

use nalgebra::DVector;
use nlneumann::evolution::{heat_solve, heat_solve_with, mass, HeatOptions, Profile};
use nlneumann::forms::mass_matrix;
use nlneumann::geometry::Params;
use nlneumann::quadrature::build_quad_table;
use nlneumann::solvers::DescentConfig;

#[test]
fn p2_flow_matches_dense_implicit_euler() {
    let mesh = common::mesh(0.0, 1.0, 16, 0.5, 8);
    let params = Params::new(2.0, 0.5).unwrap();
    let table = build_quad_table(mesh.clone(), &params).unwrap();
    let u0 = Profile::Hat.sample(&mesh).unwrap();
    let (tau, steps) = (0.01, 100);
    let opts = HeatOptions {
        descent: DescentConfig::default().with_grad_tol(1e-10),
        snapshot_steps: (0..=steps).collect(),
    };
    let tr = heat_solve_with(&u0, tau, steps, &table, &params, &opts).unwrap();
    let m = mass_matrix(&mesh);
    let a = (&m / tau + table.dense_form_matrix().unwrap()).lu();
    let mut v = DVector::from_column_slice(u0.values());
    for (k, (_, snap)) in tr.snapshots.iter().enumerate().skip(1) {
        v = a.solve(&(&m * &v / tau)).unwrap();
        let err = snap.values().iter().zip(v.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "step {k}: {err:e}");
    }
}

#[test]
fn mass_is_conserved_and_energy_decays() {
    let mesh = common::mesh(0.0, 1.0, 12, 0.5, 6);
    for (p, s) in [(1.5, 0.4), (2.0, 0.5), (3.0, 0.7)] {
        let params = Params::new(p, s).unwrap();
        let table = build_quad_table(mesh.clone(), &params).unwrap();
        let u0 = Profile::Step.sample(&mesh).unwrap();
        let tr = heat_solve(&u0, 0.02, 20, &table, &params).unwrap();
        let budget = 10.0 * DescentConfig::default().grad_tol;
        for k in 1..tr.mass.len() {
            assert!((tr.mass[k] - tr.mass[k - 1]).abs() <= budget, "p={p}");
            assert!(tr.energy[k] <= tr.energy[k - 1] + 1e-12 * tr.energy[0], "p={p}");
        }
        assert!(tr.energy.last().unwrap() < &tr.energy[0]);
    }
}

#[test]
fn long_run_reaches_the_mean() {
    let mesh = common::mesh(0.0, 1.0, 12, 0.5, 6);
    for profile in [Profile::Hat, Profile::Gaussian { width: 0.1 }, Profile::Step] {
        let params = Params::new(2.0, 0.5).unwrap();
        let table = build_quad_table(mesh.clone(), &params).unwrap();
        let u0 = profile.sample(&mesh).unwrap();
        let mean = mass(&u0) / mesh.omega.length();
        let tr = heat_solve(&u0, 0.5, 40, &table, &params).unwrap();
        let last = tr.final_state.unwrap();
        let dist = last.values().iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        assert!(dist < 1e-3, "{profile:?}: {dist:e}");
    }
}

mod common;

use nlneumann::forms::{form_gradient, gagliardo, mass_gradient, mass_matrix, FormEvaluator};
use nlneumann::geometry::{DiscreteFunction, Params};
use nlneumann::quadrature::build_quad_table;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn hat_seminorm_matches_oracle_on_eight_elements() {
    let mesh = common::mesh(0.0, 1.0, 4, 0.5, 2);
    let params = Params::new(2.0, 0.25).unwrap();
    let table = build_quad_table(mesh.clone(), &params).unwrap();
    let mut v = vec![0.0; 9];
    v[4] = 1.0;
    let u = DiscreteFunction::new(mesh, v).unwrap();
    let got = gagliardo(&u, &table, &params).unwrap().seminorm_p;
    let want = common::seminorm_oracle(&u, &params);
    assert!((got - want).abs() < 1e-4 * want);
}

#[test]
fn form_value_fields_are_consistent_and_even() {
    let mesh = common::mesh(-1.0, 2.0, 10, 0.7, 5);
    let params = Params::new(2.7, 0.35).unwrap();
    let table = build_quad_table(mesh.clone(), &params).unwrap();
    let u = DiscreteFunction::interpolate(mesh, |x| x.sin() - 0.2 * x * x).unwrap();
    let fv = gagliardo(&u, &table, &params).unwrap();
    assert_eq!(fv.phi, fv.seminorm_p / 2.0);
    assert_eq!(fv.full_norm_p, fv.phi + fv.mass_p);
    assert!(fv.seminorm_p > 0.0 && fv.mass_p > 0.0);
    let neg = gagliardo(&u.scaled(-1.0), &table, &params).unwrap();
    assert_eq!(fv, neg);
}

#[test]
fn constant_has_zero_seminorm_and_known_mass() {
    let mesh = common::mesh(0.0, 2.0, 6, 1.0, 3);
    let params = Params::new(3.0, 0.5).unwrap();
    let table = build_quad_table(mesh.clone(), &params).unwrap();
    let u = DiscreteFunction::constant(mesh, -1.5);
    let fv = gagliardo(&u, &table, &params).unwrap();
    assert_eq!(fv.seminorm_p, 0.0);
    assert!((fv.mass_p - 1.5f64.powi(3) * 2.0).abs() < 1e-13);
}

#[test]
fn homogeneity_of_the_seminorm() {
    let mesh = common::mesh(0.0, 1.0, 12, 0.5, 6);
    for (p, s) in [(1.4, 0.6), (2.0, 0.5), (3.3, 0.2)] {
        let params = Params::new(p, s).unwrap();
        let table = build_quad_table(mesh.clone(), &params).unwrap();
        let u = DiscreteFunction::interpolate(mesh.clone(), |x| (4.0 * x).cos() + x).unwrap();
        let base = gagliardo(&u, &table, &params).unwrap().seminorm_p;
        for t in [-2.0f64, 0.5, 3.0] {
            let scaled = gagliardo(&u.scaled(t), &table, &params).unwrap().seminorm_p;
            let want = t.abs().powf(p) * base;
            assert!((scaled - want).abs() <= 1e-12 * want, "p={p} t={t}");
        }
    }
}

#[test]
fn gradient_is_the_derivative_of_the_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mesh = common::mesh(0.0, 1.0, 8, 0.5, 4);
    let n = mesh.n_nodes();
    for case in 0..24 {
        let p = [1.5, 2.0, 2.5, 3.5][case % 4];
        let params = Params::new(p, 0.45).unwrap();
        let table = build_quad_table(mesh.clone(), &params).unwrap();
        let ev = FormEvaluator::new(&table, &params).unwrap();
        let u = random_values(&mut rng, n);
        let h = random_values(&mut rng, n);
        let eps = 1e-5;
        let shift = |sign: f64| -> Vec<f64> { u.iter().zip(&h).map(|(a, b)| a + sign * eps * b).collect() };
        // φ = seminorm/2 and d/dε φ(u + εh) = p ⟨form_gradient(u), h⟩
        let fd_phi = (ev.seminorm(&shift(1.0)).unwrap() - ev.seminorm(&shift(-1.0)).unwrap()) / 2.0 / (2.0 * eps);
        let mut g = vec![0.0; n];
        ev.seminorm_and_gradient(&u, &mut g).unwrap();
        let pairing: f64 = g.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() * p;
        assert!((fd_phi - pairing).abs() <= 1e-5 * pairing.abs().max(1e-3), "case {case}: {fd_phi} vs {pairing}");

        let fd_mass = (ev.mass(&shift(1.0)).unwrap() - ev.mass(&shift(-1.0)).unwrap()) / (2.0 * eps);
        let mut gm = vec![0.0; n];
        ev.mass_and_gradient(&u, &mut gm).unwrap();
        let mp: f64 = gm.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() * p;
        assert!((fd_mass - mp).abs() <= 1e-5 * mp.abs().max(1e-3), "case {case}: {fd_mass} vs {mp}");
    }
}

#[test]
fn euler_identity_for_the_form_gradient() {
    let mesh = common::mesh(0.0, 1.0, 10, 0.5, 5);
    for p in [1.3, 2.0, 3.0] {
        let params = Params::new(p, 0.5).unwrap();
        let table = build_quad_table(mesh.clone(), &params).unwrap();
        let u = DiscreteFunction::interpolate(mesh.clone(), |x| (5.0 * x).sin()).unwrap();
        let fv = gagliardo(&u, &table, &params).unwrap();
        let g = form_gradient(&u, &table, &params).unwrap();
        let pair = g.pair(&u).unwrap();
        assert!((pair - fv.phi).abs() <= 1e-10 * fv.phi);
        let one = DiscreteFunction::constant(mesh.clone(), 1.0);
        assert!(g.pair(&one).unwrap().abs() <= 1e-12 * fv.phi);
        let gm = mass_gradient(&u, &params).unwrap();
        assert!((gm.pair(&u).unwrap() - fv.mass_p).abs() <= 1e-12 * fv.mass_p);
    }
}

#[test]
fn pairing_is_symmetric_in_assembly_order() {
    let mesh = common::mesh(0.0, 1.0, 8, 0.5, 4);
    let params = Params::new(2.3, 0.6).unwrap();
    let table = build_quad_table(mesh.clone(), &params).unwrap();
    let u = DiscreteFunction::interpolate(mesh.clone(), |x| x.exp()).unwrap();
    let v = DiscreteFunction::interpolate(mesh.clone(), |x| (3.0 * x).sin()).unwrap();
    let ev = FormEvaluator::new(&table, &params).unwrap();
    let forward = ev.pairing(u.values(), v.values()).unwrap();
    // same points with the roles of x and y exchanged
    let (uv, vv) = (u.values(), v.values());
    let at = |vals: &[f64], e: u32, l: f64| vals[e as usize] + l * (vals[e as usize + 1] - vals[e as usize]);
    let swapped: f64 = table
        .points()
        .iter()
        .map(|q| {
            let du = at(uv, q.ey, q.ly) - at(uv, q.ex, q.lx);
            let dv = at(vv, q.ey, q.ly) - at(vv, q.ex, q.lx);
            0.5 * q.w * du.abs().powf(0.3) * du * dv
        })
        .sum();
    assert!((forward - swapped).abs() <= 1e-12 * forward.abs());
}

#[test]
fn mass_gradient_vanishes_on_exterior_and_matches_mass_matrix() {
    let mesh = common::mesh(0.0, 1.0, 6, 0.5, 3);
    let params = Params::new(2.0, 0.5).unwrap();
    let u = DiscreteFunction::interpolate(mesh.clone(), |x| 1.0 + x * x).unwrap();
    let g = mass_gradient(&u, &params).unwrap();
    for i in mesh.exterior_nodes() {
        assert_eq!(g.components()[i], 0.0);
    }
    let mu = mass_matrix(&mesh) * nalgebra::DVector::from_column_slice(u.values());
    for (a, b) in g.components().iter().zip(mu.iter()) {
        assert!((a - b).abs() < 1e-14);
    }
    let zero = DiscreteFunction::constant(mesh, 0.0);
    assert!(mass_gradient(&zero, &params).unwrap().components().iter().all(|c| *c == 0.0));
}

#[test]
fn dense_matrix_reproduces_form_at_p2() {
    let mesh = common::mesh(0.0, 1.0, 8, 0.5, 4);
    let params = Params::new(2.0, 0.4).unwrap();
    let table = build_quad_table(mesh.clone(), &params).unwrap();
    let k = table.dense_form_matrix().unwrap();
    let u = DiscreteFunction::interpolate(mesh.clone(), |x| (2.0 * x).cos()).unwrap();
    let uv = nalgebra::DVector::from_column_slice(u.values());
    let fv = gagliardo(&u, &table, &params).unwrap();
    assert!((uv.dot(&(&k * &uv)) - fv.phi).abs() < 1e-12 * fv.phi);
    let g = form_gradient(&u, &table, &params).unwrap();
    let ku = &k * &uv;
    for (a, b) in g.components().iter().zip(ku.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((&k - k.transpose()).amax() < 1e-14);
}

#[test]
fn mismatched_meshes_and_params_are_rejected() {
    let mesh = common::mesh(0.0, 1.0, 4, 0.5, 2);
    let other = common::mesh(0.0, 1.0, 6, 0.5, 2);
    let params = Params::new(2.0, 0.5).unwrap();
    let table = build_quad_table(mesh.clone(), &params).unwrap();
    let u = DiscreteFunction::constant(other, 1.0);
    assert!(gagliardo(&u, &table, &params).is_err());
    let v = DiscreteFunction::constant(mesh, 1.0);
    assert!(gagliardo(&v, &table, &Params::new(3.0, 0.5).unwrap()).is_err());
}

#[test]
fn evaluation_is_independent_of_thread_count() {
    let mesh = common::mesh(0.0, 1.0, 32, 1.0, 32);
    let params = Params::new(2.5, 0.5).unwrap();
    let table = build_quad_table(mesh.clone(), &params).unwrap();
    let u = DiscreteFunction::interpolate(mesh, |x| (7.0 * x).sin()).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let fv = gagliardo(&u, &table, &params).unwrap();
            let g = form_gradient(&u, &table, &params).unwrap();
            (fv.seminorm_p, g.into_components())
        })
    };
    assert_eq!(run(1), run(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn seminorm_and_mass_are_nonnegative(
        values in prop::collection::vec(-2.0f64..2.0, 13),
        p in 1.1f64..4.0,
        s in 0.05f64..0.95,
    ) {
        let mesh = common::mesh(0.0, 1.0, 6, 0.5, 3);
        let params = Params::new(p, s).unwrap();
        let table = build_quad_table(mesh.clone(), &params).unwrap();
        let u = DiscreteFunction::new(mesh, values).unwrap();
        let fv = gagliardo(&u, &table, &params).unwrap();
        prop_assert!(fv.seminorm_p >= 0.0 && fv.mass_p >= 0.0 && fv.full_norm_p >= fv.phi);
    }
}

#[test]
fn hessian_diagonal_at_p2_is_the_matrix_diagonal() {
    let mesh = common::mesh(0.0, 1.0, 8, 0.5, 4);
    let params = Params::new(2.0, 0.35).unwrap();
    let table = build_quad_table(mesh.clone(), &params).unwrap();
    let k = table.dense_form_matrix().unwrap();
    let ev = FormEvaluator::new(&table, &params).unwrap();
    let u: Vec<f64> = mesh.nodes().iter().map(|x| x.sin()).collect();
    let d = ev.hessian_diagonal(&u, 1e-3).unwrap();
    for i in 0..mesh.n_nodes() {
        assert!((d[i] - k[(i, i)]).abs() <= 1e-12 * k[(i, i)]);
    }
}

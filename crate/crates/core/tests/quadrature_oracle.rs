mod common;

use nlneumann::forms::gagliardo;
use nlneumann::geometry::{DiscreteFunction, Params};
use nlneumann::quadrature::build_quad_table;
use proptest::prelude::*;

fn relative_error(p: f64, s: f64, values: Vec<f64>, n_int: usize, n_ext: usize) -> f64 {
    let params = Params::new(p, s).unwrap();
    let mesh = common::mesh(0.0, 1.0, n_int, 0.5, n_ext);
    let table = build_quad_table(mesh.clone(), &params).unwrap();
    let u = DiscreteFunction::new(mesh, values).unwrap();
    let got = gagliardo(&u, &table, &params).unwrap().seminorm_p;
    let want = common::seminorm_oracle(&u, &params);
    assert!(got.is_finite() && want.is_finite(), "got {got} want {want}");
    (got - want).abs() / want
}

#[test]
fn hat_function_matches_adaptive_oracle() {
    // 4 interior + 2 exterior per side = 8 elements
    let mut values = vec![0.0; 9];
    values[4] = 1.0;
    let err = relative_error(2.0, 0.25, values, 4, 2);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn minimal_mesh_hat_matches_oracle() {
    let values = vec![0.0, 0.0, 1.0, 0.0, 0.0];
    let err = relative_error(2.0, 0.5, values, 2, 1);
    assert!(err < 1e-4, "relative error {err:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_piecewise_linear_matches_oracle(
        p in 1.3f64..3.5,
        s in 0.15f64..0.9,
        values in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let err = relative_error(p, s, values, 4, 2);
        prop_assert!(err < 1e-4, "p={p} s={s} relative error {err:e}");
    }
}


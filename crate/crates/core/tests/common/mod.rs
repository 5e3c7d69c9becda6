#![allow(dead_code)]

use std::sync::Arc;

use nlneumann::geometry::{build_mesh, DiscreteFunction, Interval, Mesh, Params, Region};
use nlneumann::quadrature::adaptive::{integrate_pieces, Tolerance};

pub fn mesh(a: f64, b: f64, n_int: usize, radius: f64, n_ext: usize) -> Arc<Mesh> {
    Arc::new(build_mesh(Interval::new(a, b).unwrap(), n_int, radius, n_ext).unwrap())
}

/// Direct adaptive evaluation of `∬ |u(x) - u(y)|^p |x - y|^{-1-ps}` over
/// pairs in the collar with at least one point in `Ω`, as twice the
/// integral over `y < x`, element pair by element pair.
pub fn seminorm_oracle(u: &DiscreteFunction, params: &Params) -> f64 {
    let mesh = u.mesh();
    let (p, ps) = (params.p, params.ps());
    let nodes = mesh.nodes();
    let vals = u.values();
    let inner_tol = Tolerance { abs: 1e-13, rel: 1e-10, max_intervals: 300 };
    let outer_tol = Tolerance { abs: 1e-12, rel: 1e-8, max_intervals: 200 };
    // t = x - y = z^m flattens the endpoint singularity t^{p-1-ps}
    let m = (2.0 / (p - ps)).ceil();
    let lin = |e: usize, x: f64| {
        let t = (x - nodes[e]) / (nodes[e + 1] - nodes[e]);
        vals[e] + t * (vals[e + 1] - vals[e])
    };
    let slope = |e: usize| (vals[e + 1] - vals[e]) / (nodes[e + 1] - nodes[e]);
    // points of element e where u takes the value c
    let level = |e: usize, c: f64| -> Option<f64> {
        let (d0, d1) = (vals[e] - c, vals[e + 1] - c);
        (d0 * d1 < 0.0).then(|| nodes[e] + d0 / (d0 - d1) * (nodes[e + 1] - nodes[e]))
    };
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        for f in 0..=e {
            if mesh.element_region(e) == Region::Exterior && mesh.element_region(f) == Region::Exterior {
                continue;
            }
            let (y0, y1) = (nodes[f], nodes[f + 1]);
            if e == f {
                // u(x) - u(y) = slope·(x - y) on one element: closed form
                let h = y1 - y0;
                let slope = (vals[e + 1] - vals[e]) / h;
                let k = p - ps;
                total += 2.0 * slope.abs().powf(p) * h.powf(k + 1.0) / (k * (k + 1.0));
                continue;
            }
            let inner = |x: f64| {
                let ux = lin(e, x);
                let hi = y1.min(x);
                let mut breaks = vec![y0, hi];
                if let Some(y) = level(f, ux) {
                    if y > y0 && y < hi {
                        breaks.push(y);
                    }
                }
                breaks.sort_by(f64::total_cmp);
                let mut zb: Vec<f64> = breaks.iter().map(|&y| (x - y).max(0.0).powf(1.0 / m)).collect();
                zb.reverse();
                integrate_pieces(
                    |z| {
                        let t = z.powf(m);
                        if t == 0.0 {
                            return 0.0;
                        }
                        let diff = if f + 1 == e {
                            // through the shared vertex, free of cancellation as t -> 0
                            let dx = x - y1;
                            slope(e) * dx + slope(f) * (t - dx)
                        } else {
                            ux - lin(f, x - t)
                        };
                        (diff.abs() / t).powf(p) * m * z.powf(m * (p - ps) - 1.0)
                    },
                    &zb,
                    inner_tol,
                )
                .value
            };
            let (x0, x1) = (nodes[e], nodes[e + 1]);
            let mut breaks = vec![x0, x1];
            for c in [vals[f], vals[f + 1]] {
                if let Some(x) = level(e, c) {
                    breaks.push(x);
                }
            }
            breaks.sort_by(f64::total_cmp);
            // x - x0 = h·w^m smooths the cusp at a shared vertex
            let h = x1 - x0;
            let wb: Vec<f64> = breaks.iter().map(|&x| ((x - x0) / h).max(0.0).powf(1.0 / m)).collect();
            let outer = |w: f64| inner(x0 + h * w.powf(m)) * h * m * w.powf(m - 1.0);
            let piece = 2.0 * integrate_pieces(outer, &wb, outer_tol).value;
            total += piece;
        }
    }
    total
}

//! Gauss rules on `[0, 1]` from the Golub–Welsch eigenvalue construction.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Map to `[lo, hi]`, scaling weights by the interval length.
    pub fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let len = hi - lo;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (lo + len * t, len * w))
    }
}

/// `n`-point Gauss rule for the weight `t^beta` on `[0, 1]`, `beta > -1`.
///
/// Exact for `∫₀¹ t^beta q(t) dt` with `q` a polynomial of degree `2n-1`.
pub fn gauss_jacobi(n: usize, beta: f64) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    assert!(beta > -1.0, "weight exponent must exceed -1");
    // Jacobi(alpha = 0, beta) on [-1, 1]; weight (1+z)^beta.
    let alpha = 0.0_f64;
    let ab = alpha + beta;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for (k, d) in diag.iter_mut().enumerate() {
        let k = k as f64;
        let denom = (2.0 * k + ab) * (2.0 * k + ab + 2.0);
        *d = if k == 0.0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / denom
        };
    }
    for (idx, o) in off.iter_mut().enumerate() {
        let k = (idx + 1) as f64;
        let s = 2.0 * k + ab;
        let num = 4.0 * k * (k + alpha) * (k + beta) * (k + ab);
        let den = s * s * (s + 1.0) * (s - 1.0);
        *o = (num / den).sqrt();
    }
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = diag[i];
        if i + 1 < n {
            jac[(i, i + 1)] = off[i];
            jac[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(jac);
    // total mass of t^beta on [0,1]
    let mu0 = 1.0 / (beta + 1.0);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let z = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            (0.5 * (1.0 + z), mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// `n`-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    let mut rule = gauss_jacobi(n, 0.0);
    // symmetrize against eigen-solver rounding
    let m = rule.nodes.len();
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let t = 0.5 * (rule.nodes[i] + (1.0 - rule.nodes[j]));
        let w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = t;
        rule.nodes[j] = 1.0 - t;
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if m % 2 == 1 {
        rule.nodes[m / 2] = 0.5;
    }
    rule
}

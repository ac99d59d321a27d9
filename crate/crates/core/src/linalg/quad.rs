//! Gauss quadrature rules via the Golub–Welsch eigenvalue method.

use nalgebra::DMatrix;

/// Nodes and weights for ∫ e^{-x²} f(x) dx ≈ Σ w_i f(x_i).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Symmetrized Jacobi matrix: zero diagonal, offdiag sqrt(k/2).
    let offdiag: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    golub_welsch(&vec![0.0; n], &offdiag, std::f64::consts::PI.sqrt())
}

/// Nodes and weights for ∫_{-1}^{1} f(x) dx ≈ Σ w_i f(x_i).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let offdiag: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&vec![0.0; n], &offdiag, 2.0)
}

/// Composite Gauss–Legendre rule: `panels` equal panels over [a, b] with
/// `per_panel` nodes each.
pub fn legendre_panels(a: f64, b: f64, panels: usize, per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(per_panel);
    let width = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * per_panel);
    let mut weights = Vec::with_capacity(panels * per_panel);
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        for (x, w) in xs.iter().zip(&ws) {
            nodes.push(mid + 0.5 * width * x);
            weights.push(0.5 * width * w);
        }
    }
    (nodes, weights)
}

fn golub_welsch(diag: &[f64], offdiag: &[f64], total_weight: f64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut jac = DMatrix::from_element(n, n, 0.0f64);
    for (i, d) in diag.iter().enumerate() {
        jac[(i, i)] = *d;
    }
    for (i, b) in offdiag.iter().enumerate() {
        jac[(i, i + 1)] = *b;
        jac[(i + 1, i)] = *b;
    }
    let eig = jac.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let first = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], total_weight * first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

//! Two-mode EPR overlap kernel E_{pq}(X⁺, Y⁻) = ⟨X⁺,Y⁻|p_k, q_{-k}⟩.
//!
//! The joint eigenstate of X̂⁺ = (x̂_k + x̂_{-k})/√2 and Ŷ⁻ = (ŷ_k − ŷ_{-k})/√2
//! factorizes over the rotated modes â_s = (â_k + â_{-k})/√2 and
//! â_d = (â_k − â_{-k})/√2 into a position eigenstate of the symmetric mode
//! and a momentum eigenstate of the antisymmetric mode:
//!
//! ```text
//! |X⁺,Y⁻⟩ = |x_s = X⁺⟩ ⊗ |y_d = Y⁻⟩
//! ⟨X⁺,Y⁻|m_s, n_d⟩ = ψ_m(X⁺) · (-i)ⁿ ψ_n(Y⁻)
//! ```
//!
//! so the kernel reduces to the 50:50 beam-splitter coefficients
//! ⟨m_s, n_d|p, q⟩, which conserve total quanta and are precomputed once per
//! truncation level. A direct Gauss–Legendre evaluation of the defining
//! integral is kept alongside as the brute-force reference.

use crate::linalg::fock::fock_position_table;
#[cfg(test)]
use crate::linalg::fock::fock_position_table_scaled;
use crate::C64;

/// Precomputed beam-splitter coefficients for one symmetric mode pair.
#[derive(Debug, Clone)]
pub struct PairKernel {
    n_max: usize,
    /// coef[p][q][m] = ⟨m_s, (p+q−m)_d | p, q⟩
    coef: Vec<Vec<Vec<f64>>>,
}

impl PairKernel {
    pub fn new(n_max: usize) -> Self {
        let levels = n_max + 1;
        let mut coef = vec![vec![Vec::new(); levels]; levels];
        for p in 0..levels {
            for q in 0..levels {
                let total = p + q;
                let mut row = Vec::with_capacity(total + 1);
                for m in 0..=total {
                    row.push(beam_splitter_coef(p, q, m));
                }
                coef[p][q] = row;
            }
        }
        Self { n_max, coef }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Fill `out[p*(n_max+1)+q] = E_{pq}(X⁺, Y⁻)`.
    pub fn evaluate(&self, xplus: f64, yminus: f64, scratch: &mut KernelScratch, out: &mut [C64]) {
        fock_position_table(2 * self.n_max, xplus, &mut scratch.psi_x);
        fock_position_table(2 * self.n_max, yminus, &mut scratch.psi_y);
        self.contract(scratch, out);
    }

    /// As [`Self::evaluate`] but with the Gaussian factors e^{-(X⁺²+Y⁻²)/2}
    /// stripped, for quadrature rules carrying the e^{-x²} weight.
    #[cfg(test)]
    pub fn evaluate_scaled(
        &self,
        xplus: f64,
        yminus: f64,
        scratch: &mut KernelScratch,
        out: &mut [C64],
    ) {
        fock_position_table_scaled(2 * self.n_max, xplus, &mut scratch.psi_x);
        fock_position_table_scaled(2 * self.n_max, yminus, &mut scratch.psi_y);
        self.contract(scratch, out);
    }

    fn contract(&self, scratch: &KernelScratch, out: &mut [C64]) {
        // (-i)ⁿ cycles with period 4.
        const PHASE: [C64; 4] = [
            C64::new(1.0, 0.0),
            C64::new(0.0, -1.0),
            C64::new(-1.0, 0.0),
            C64::new(0.0, 1.0),
        ];
        let levels = self.n_max + 1;
        for p in 0..levels {
            for q in 0..levels {
                let row = &self.coef[p][q];
                let total = p + q;
                let mut acc = C64::ZERO;
                for (m, c) in row.iter().enumerate() {
                    let n = total - m;
                    acc += PHASE[n % 4] * (c * scratch.psi_x[m] * scratch.psi_y[n]);
                }
                out[p * levels + q] = acc;
            }
        }
    }
}

/// Reusable Hermite-function tables for kernel evaluation.
#[derive(Debug, Clone, Default)]
pub struct KernelScratch {
    psi_x: Vec<f64>,
    psi_y: Vec<f64>,
}

/// ⟨m_s, (p+q−m)_d | p, q⟩ for the 50:50 splitter â_{±k} = (â_s ± â_d)/√2.
fn beam_splitter_coef(p: usize, q: usize, m: usize) -> f64 {
    let total = p + q;
    let n = total - m;
    // Integer-valued alternating sum Σ_{i+j=m} C(p,i) C(q,j) (-1)^{q-j};
    // exact in f64 for the truncations used here.
    let mut sum = 0.0f64;
    for i in 0..=m.min(p) {
        let j = m - i;
        if j > q {
            continue;
        }
        let sign = if (q - j) % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * binomial(p, i) * binomial(q, j);
    }
    let norm = (factorial(m) * factorial(n) / (factorial(p) * factorial(q))).sqrt();
    0.5f64.powf(total as f64 / 2.0) * norm * sum
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Brute-force evaluation of the defining integral
/// ∫ dx'/√(2π) e^{-iY⁻x'} ψ_q((X⁺−x')/√2) ψ_p((X⁺+x')/√2)
/// by Gauss–Legendre panels over |x'| ≤ √(2(2n_max+1)) + 6 with at least 400
/// nodes. Reference path for tests; the closed form above is the production
/// path.
#[cfg(test)]
pub fn epr_overlap_integral(p: usize, q: usize, n_max: usize, xplus: f64, yminus: f64) -> C64 {
    use crate::linalg::fock::fock_position_amplitude;
    use crate::linalg::quad::legendre_panels;

    let x_cut = (2.0 * (2.0 * n_max as f64 + 1.0)).sqrt() + 6.0 + xplus.abs();
    let (nodes, weights) = legendre_panels(-x_cut, x_cut, 25, 16);
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = C64::ZERO;
    for (x, w) in nodes.iter().zip(&weights) {
        let lo = fock_position_amplitude(q, (xplus - x) / 2.0f64.sqrt());
        let hi = fock_position_amplitude(p, (xplus + x) / 2.0f64.sqrt());
        acc += C64::from_polar(w * norm * lo * hi, -yminus * x);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vacuum_kernel_is_gaussian() {
        let kernel = PairKernel::new(3);
        let mut scratch = KernelScratch::default();
        let mut out = vec![C64::ZERO; 16];
        let (x, y) = (0.7, -1.1);
        kernel.evaluate(x, y, &mut scratch, &mut out);
        let expect = (-(x * x + y * y) / 2.0).exp() / std::f64::consts::PI.sqrt();
        assert_abs_diff_eq!(out[0].re, expect, epsilon = 1e-14);
        assert_abs_diff_eq!(out[0].im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn closed_form_matches_defining_integral() {
        let n_max = 3;
        let kernel = PairKernel::new(n_max);
        let mut scratch = KernelScratch::default();
        let mut out = vec![C64::ZERO; 16];
        for &(x, y) in &[(0.0, 0.0), (0.9, 0.4), (-1.3, 2.1), (2.2, -0.7)] {
            kernel.evaluate(x, y, &mut scratch, &mut out);
            for p in 0..=n_max {
                for q in 0..=n_max {
                    let reference = epr_overlap_integral(p, q, n_max, x, y);
                    let got = out[p * (n_max + 1) + q];
                    assert_abs_diff_eq!(got.re, reference.re, epsilon = 1e-10);
                    assert_abs_diff_eq!(got.im, reference.im, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn kernel_orthonormal_under_gauss_hermite() {
        // ∫∫ E_{pq} E*_{p'q'} dX dY = δ_pp' δ_qq': the EPR bras resolve unity.
        let n_max = 2;
        let levels = n_max + 1;
        let kernel = PairKernel::new(n_max);
        let (xs, ws) = crate::linalg::quad::gauss_hermite(2 * (2 * n_max) + 8);
        let mut scratch = KernelScratch::default();
        let mut out = vec![C64::ZERO; levels * levels];
        let mut gram = vec![C64::ZERO; levels.pow(4)];
        for (x, wx) in xs.iter().zip(&ws) {
            for (y, wy) in xs.iter().zip(&ws) {
                kernel.evaluate_scaled(*x, *y, &mut scratch, &mut out);
                let w = wx * wy;
                for a in 0..levels * levels {
                    for b in 0..levels * levels {
                        gram[a * levels * levels + b] += w * out[a] * out[b].conj();
                    }
                }
            }
        }
        for a in 0..levels * levels {
            for b in 0..levels * levels {
                let expect = if a == b { 1.0 } else { 0.0 };
                let got = gram[a * levels * levels + b];
                assert_abs_diff_eq!(got.re, expect, epsilon = 1e-9);
                assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn scaled_evaluation_strips_gaussian() {
        let kernel = PairKernel::new(2);
        let mut scratch = KernelScratch::default();
        let mut plain = vec![C64::ZERO; 9];
        let mut scaled = vec![C64::ZERO; 9];
        let (x, y) = (1.2, -0.4);
        kernel.evaluate(x, y, &mut scratch, &mut plain);
        kernel.evaluate_scaled(x, y, &mut scratch, &mut scaled);
        let g = (-(x * x + y * y) / 2.0).exp();
        for (a, b) in plain.iter().zip(&scaled) {
            assert_abs_diff_eq!(a.re, b.re * g, epsilon = 1e-13);
            assert_abs_diff_eq!(a.im, b.im * g, epsilon = 1e-13);
        }
    }
}

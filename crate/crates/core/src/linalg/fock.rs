//! Harmonic-oscillator position eigenfunctions and coherent-state overlaps.
//!
//! Conventions: x̂ = (â† + â)/√2, so ψ_n(x) = π^{-1/4} (2^n n!)^{-1/2} H_n(x) e^{-x²/2}
//! with the physicists' Hermite polynomials H_n.

use crate::C64;

/// ψ_n(x), evaluated by the three-term recurrence on the normalized functions
/// (not raw polynomials) to avoid overflow at moderate n.
pub fn fock_position_amplitude(n: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    for m in 1..=n {
        let next = (2.0 / m as f64).sqrt() * x * cur - ((m as f64 - 1.0) / m as f64).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// ψ_0(x)..ψ_{n_max}(x) into `out`.
pub fn fock_position_table(n_max: usize, x: f64, out: &mut Vec<f64>) {
    fill_table(
        n_max,
        x,
        std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp(),
        out,
    );
}

/// Gaussian-stripped values e^{x²/2} ψ_n(x), for quadrature rules that carry
/// the e^{-x²} weight themselves.
pub fn fock_position_table_scaled(n_max: usize, x: f64, out: &mut Vec<f64>) {
    fill_table(n_max, x, std::f64::consts::PI.powf(-0.25), out);
}

fn fill_table(n_max: usize, x: f64, seed: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(seed);
    let mut prev = 0.0;
    let mut cur = seed;
    for m in 1..=n_max {
        let next = (2.0 / m as f64).sqrt() * x * cur - ((m as f64 - 1.0) / m as f64).sqrt() * prev;
        prev = cur;
        cur = next;
        out.push(cur);
    }
}

/// Fock expansion of a coherent state, `coeffs[n] = ⟨n|a⟩ = e^{-|a|²/2} aⁿ/√(n!)`,
/// together with the squared-norm deficit of the truncated expansion.
#[derive(Debug, Clone)]
pub struct CoherentOverlap {
    pub coeffs: Vec<C64>,
    pub tail_deficit: f64,
}

pub fn coherent_overlap_vector(a: C64, n_max: usize) -> CoherentOverlap {
    let mut coeffs = Vec::with_capacity(n_max + 1);
    let mut cur = C64::new((-0.5 * a.norm_sqr()).exp(), 0.0);
    let mut total = cur.norm_sqr();
    coeffs.push(cur);
    for n in 1..=n_max {
        cur *= a / C64::new((n as f64).sqrt(), 0.0);
        total += cur.norm_sqr();
        coeffs.push(cur);
    }
    CoherentOverlap {
        coeffs,
        tail_deficit: 1.0 - total,
    }
}

//! Ideal EPRB polarization correlations.
//!
//! The coincidence probability for equal outcomes follows `cos²(θa − θb)`,
//! so the signed correlation of ±1 outcomes is `2cos²Δ − 1 = cos 2Δ` with
//! uniform single-station marginals.

use std::f64::consts::PI;

/// `E(θa, θb) = cos 2(θa − θb)`.
pub fn quantum_reference_correlation(theta_a: f64, theta_b: f64) -> f64 {
    (2.0 * (theta_a - theta_b)).cos()
}

/// `P(a = b) = cos²(θa − θb)`.
pub fn equal_outcome_probability(theta_a: f64, theta_b: f64) -> f64 {
    let c = (theta_a - theta_b).cos();
    c * c
}

/// Analyzer angles maximizing |S| for polarization correlations:
/// Alice `(0, π/4)`, Bob `(π/8, 3π/8)`.
pub const CANONICAL_ANGLES: [f64; 4] = [0.0, PI / 4.0, PI / 8.0, 3.0 * PI / 8.0];

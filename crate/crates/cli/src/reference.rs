//! Published Burgers constants in `sin x` coordinates, compared against the
//! derived coefficients.

use std::f64::consts::PI;

use amplitude_core::derive::{AmplitudeSDE, Sigmas};
use serde::{Deserialize, Serialize};

/// Relative agreement threshold for flagging a constant as reproduced.
pub const AGREEMENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub name: String,
    pub derived: f64,
    pub reference: f64,
    pub abs_deviation: f64,
    pub agrees: bool,
}

impl Deviation {
    pub fn new(name: &str, derived: f64, reference: f64) -> Self {
        let abs_deviation = (derived - reference).abs();
        Self {
            name: name.to_string(),
            derived,
            reference,
            abs_deviation,
            agrees: abs_deviation <= AGREEMENT_TOL * reference.abs().max(1.0),
        }
    }
}

/// `8√2 / (3 π^{3/2})`.
pub fn mult_coeff() -> f64 {
    8.0 * 2f64.sqrt() / (3.0 * PI.powf(1.5))
}

/// `dx̃ = (ν x̃ − x̃³/12) dT + α₁ dβ̃₁ + c α₁ x̃ dβ̃₁ − (c/5) α₃ x̃ dβ̃₃`.
pub fn case1_reference(nu: f64, alphas: [f64; 3]) -> [(&'static str, f64); 5] {
    [
        ("linear", nu),
        ("cubic", -1.0 / 12.0),
        ("additive_1", alphas[0]),
        ("multiplicative_1", mult_coeff() * alphas[0]),
        ("multiplicative_3", -mult_coeff() / 5.0 * alphas[2]),
    ]
}

/// Compares a Case I SDE already in `sin x` coordinates.
pub fn case1_deviation(sde_sin: &AmplitudeSDE, nu: f64, alphas: [f64; 3]) -> Vec<Deviation> {
    let derived = [
        sde_sin.drift_lin[0][0],
        sde_sin.cubic(0, 0, 0, 0),
        sde_sin.diff_add[0][0],
        sde_sin.diff_mult[0][0][0],
        sde_sin.diff_mult[2][0][0],
    ];
    case1_reference(nu, alphas)
        .iter()
        .zip(derived)
        .map(|((name, r), d)| Deviation::new(name, d, *r))
        .collect()
}

/// Printed `σ₁..σ₄` (with `α₁ = α₂ = 0`).
pub fn case2_reference(nu: f64, alpha3: f64) -> Sigmas {
    let a2 = alpha3 * alpha3;
    Sigmas {
        sigma1: nu - a2 / (4048.0 * PI),
        sigma2: -1.0 / 12.0,
        sigma3: 128.0 * a2 / (225.0 * PI.powi(3)),
        sigma4: 5184.0 * a2 * a2 / (1225.0 * PI.powi(3)),
    }
}

/// Reduced constants for `ỹ = s y`: the cubic scales by `1/s²` and the
/// constant variance by `s²`.
pub fn sigmas_rescaled(s: &Sigmas, scale: f64) -> Sigmas {
    Sigmas {
        sigma1: s.sigma1,
        sigma2: s.sigma2 / (scale * scale),
        sigma3: s.sigma3,
        sigma4: s.sigma4 * scale * scale,
    }
}

pub fn case2_deviation(sigmas_sin: &Sigmas, nu: f64, alpha3: f64) -> Vec<Deviation> {
    let r = case2_reference(nu, alpha3);
    vec![
        Deviation::new("sigma1", sigmas_sin.sigma1, r.sigma1),
        Deviation::new("sigma2", sigmas_sin.sigma2, r.sigma2),
        Deviation::new("sigma3", sigmas_sin.sigma3, r.sigma3),
        Deviation::new("sigma4", sigmas_sin.sigma4, r.sigma4),
    ]
}

/// `ν` below which the origin is stable for `α₁ = 0`: `64 α₃² / (225 π³)`.
pub fn stability_threshold(alpha3: f64) -> f64 {
    64.0 * alpha3 * alpha3 / (225.0 * PI.powi(3))
}

//! Independent quadrature oracle for the Burgers tensors: composite
//! Gauss–Legendre on `[0, π]`, integrating the defining products directly.
#![allow(dead_code)]

use std::f64::consts::PI;

use amplitude_core::burgers::BURGERS_ALPHA_EXP;
use amplitude_core::spectral::{ModelParts, ModelSpec, NoiseScaling, SparseBilinear};
use nalgebra::DMatrix;

/// Nodes per panel and number of panels.
pub const NODES: usize = 64;
pub const PANELS: usize = 4;

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

pub struct Rule {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl Rule {
    /// Composite rule on `[0, π]`.
    pub fn new() -> Self {
        let (gx, gw) = gauss_legendre(NODES);
        let h = PI / PANELS as f64;
        let mut x = Vec::new();
        let mut w = Vec::new();
        for p in 0..PANELS {
            let a = p as f64 * h;
            for (xi, wi) in gx.iter().zip(&gw) {
                x.push(a + 0.5 * h * (xi + 1.0));
                w.push(0.5 * h * wi);
            }
        }
        Self { x, w }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.x.iter().zip(&self.w).map(|(x, w)| w * f(*x)).sum()
    }
}

pub fn e(k: usize, x: f64) -> f64 {
    (2.0 / PI).sqrt() * (k as f64 * x).sin()
}

pub fn de(k: usize, x: f64) -> f64 {
    (2.0 / PI).sqrt() * k as f64 * (k as f64 * x).cos()
}

/// `∫ (½ e_i e_j' + ½ e_j e_i') e_k`, one-based.
pub fn b_oracle(rule: &Rule, i: usize, j: usize, k: usize) -> f64 {
    rule.integrate(|x| (0.5 * e(i, x) * de(j, x) + 0.5 * e(j, x) * de(i, x)) * e(k, x))
}

/// `∫ sin(ax) sin(bx) sin(cx)`.
pub fn triple_oracle(rule: &Rule, a: usize, b: usize, c: usize) -> f64 {
    rule.integrate(|x| (a as f64 * x).sin() * (b as f64 * x).sin() * (c as f64 * x).sin())
}

/// Quadrature values below this are treated as exact zeros.
pub const ZERO_CUTOFF: f64 = 1e-11;

fn clean(v: f64) -> f64 {
    if v.abs() < ZERO_CUTOFF {
        0.0
    } else {
        v
    }
}

/// The Burgers Galerkin model assembled entirely from quadrature.
pub fn oracle_burgers_model(nu: f64, alphas: [f64; 3], n_modes: usize, case: NoiseScaling) -> ModelSpec {
    let rule = Rule::new();
    let mut entries = Vec::new();
    for i in 1..=n_modes {
        for j in i..=n_modes {
            for k in 1..=n_modes {
                let v = clean(b_oracle(&rule, i, j, k));
                if v != 0.0 {
                    entries.push((i - 1, j - 1, k - 1, v));
                }
            }
        }
    }
    let mut gprime = vec![0.0; 3 * n_modes * n_modes];
    for (j, &a) in alphas.iter().enumerate() {
        for i in 0..n_modes {
            for k in 0..n_modes {
                // <α_j e_i e_j, e_k>
                let v = rule.integrate(|x| e(i + 1, x) * e(j + 1, x) * e(k + 1, x));
                gprime[(j * n_modes + i) * n_modes + k] = a * clean(v);
            }
        }
    }
    ModelSpec::new(ModelParts {
        n_kernel: 1,
        lambdas: (1..=n_modes).map(|k| (k * k) as f64 - 1.0).collect(),
        linear: DMatrix::identity(n_modes, n_modes) * nu,
        bilinear: SparseBilinear::from_entries(n_modes, entries).expect("quadrature tensor"),
        alphas: alphas.to_vec(),
        gprime,
        alpha_exp: BURGERS_ALPHA_EXP,
        noise_scaling: case,
    })
    .expect("quadrature model")
}

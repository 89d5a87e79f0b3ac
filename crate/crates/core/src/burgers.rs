//! Stochastic Burgers equation on `[0, π]` with Dirichlet conditions, in the
//! basis `e_k(x) = √(2/π) sin kx`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ModelParts, ModelSpec, NoiseScaling, SparseBilinear};

/// Norm index used for all error metrics on this model.
pub const BURGERS_ALPHA_EXP: f64 = 0.25;

/// Number of forced noise channels; `α_k = 0` for `k > 3`.
pub const BURGERS_CHANNELS: usize = 3;

/// Ratio between the `sin x` coefficient and the `e_1` coefficient of the
/// same function: `x e_1 = (√(2/π) x) sin x`.
pub fn sin_x_scale() -> f64 {
    (2.0 / PI).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurgersParams {
    pub nu: f64,
    pub alphas: [f64; BURGERS_CHANNELS],
    pub n_modes: usize,
    pub case: NoiseScaling,
}

impl BurgersParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes < 4 {
            return Err(Error::Config(format!(
                "Burgers truncation needs at least 4 modes, got {}",
                self.n_modes
            )));
        }
        if !self.nu.is_finite() || self.alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("Burgers parameters must be finite".into()));
        }
        Ok(())
    }
}

/// `<B(e_i, e_j), e_k>` for `B(u, v) = ½ u v' + ½ v u'`, one-based modes.
pub fn burgers_b_coeff(i: usize, j: usize, k: usize) -> f64 {
    let c = 1.0 / (2.0 * (2.0 * PI).sqrt());
    let kf = k as f64;
    if k == i + j {
        c * kf
    } else if k == i.abs_diff(j) {
        -c * kf
    } else {
        0.0
    }
}

/// `∫_0^π cos(m x) sin(c x) dx` for integer `m` and `c ≥ 1`.
fn cos_sin_integral(m: i64, c: i64) -> f64 {
    if m.abs() == c || (m + c) % 2 == 0 {
        return 0.0;
    }
    let cf = c as f64;
    let mf = m as f64;
    2.0 * cf / (cf * cf - mf * mf)
}

/// `∫_0^π sin(a x) sin(b x) sin(c x) dx`.
pub fn triple_sine_integral(a: usize, b: usize, c: usize) -> f64 {
    let (a, b, c) = (a as i64, b as i64, c as i64);
    0.5 * (cos_sin_integral(a - b, c) - cos_sin_integral(a + b, c))
}

/// Builds the Galerkin model with `λ_k = k² − 1`, `L = ν I`, the Burgers
/// bilinear tensor and the multiplicative coupling `Ḡ'(0)(e_i) f_j = α_j e_i e_j`.
pub fn build_burgers_model(params: &BurgersParams) -> Result<ModelSpec> {
    params.validate()?;
    let n = params.n_modes;
    let lambdas: Vec<f64> = (1..=n).map(|k| (k * k) as f64 - 1.0).collect();
    let bilinear = SparseBilinear::from_fn(n, |i, j, k| burgers_b_coeff(i + 1, j + 1, k + 1))?;
    let scale = (2.0 / PI).powf(1.5);
    let mut gprime = vec![0.0; BURGERS_CHANNELS * n * n];
    for (j, &alpha) in params.alphas.iter().enumerate() {
        if alpha == 0.0 {
            continue;
        }
        for i in 0..n {
            for k in 0..n {
                gprime[(j * n + i) * n + k] = alpha * scale * triple_sine_integral(i + 1, j + 1, k + 1);
            }
        }
    }
    ModelSpec::new(ModelParts {
        n_kernel: 1,
        lambdas,
        linear: DMatrix::identity(n, n) * params.nu,
        bilinear,
        alphas: params.alphas.to_vec(),
        gprime,
        alpha_exp: BURGERS_ALPHA_EXP,
        noise_scaling: params.case,
    })
    .map_err(|e| match e {
        Error::InvalidModel(msg) => Error::Config(msg),
        other => other,
    })
}

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive::{AmplitudeSDE, DiffusionForm};
use crate::error::{Error, Result};
use crate::sim::NoiseSource;

use super::stats::{mean, ols, variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    /// Slow-time horizon of each path.
    pub t_end: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub bootstrap_resamples: usize,
}

impl LyapunovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.dt > 0.0 && self.dt <= self.t_end) {
            return Err(Error::Config("Lyapunov run needs 0 < dt <= t_end".into()));
        }
        if self.n_paths < 2 {
            return Err(Error::Config("Lyapunov run needs at least two paths".into()));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub exponent: f64,
    pub se: f64,
    /// `σ₁ − ½ Σ c_j²`.
    pub closed_form: f64,
}

/// Linear drift and multiplicative coefficients of a scalar linear SDE.
fn linearization(sde: &AmplitudeSDE) -> Result<(f64, Vec<f64>)> {
    if sde.dim != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: sde.dim,
        });
    }
    if sde.diff_add.iter().flatten().any(|a| *a != 0.0) {
        return Err(Error::Precondition(
            "additive noise present; the origin is not an equilibrium".into(),
        ));
    }
    let c: Vec<f64> = sde.diff_mult.iter().map(|m| m[0][0]).collect();
    let c = match sde.form {
        DiffusionForm::Channels => c,
        DiffusionForm::SqrtCovariance => vec![c.iter().map(|v| v * v).sum::<f64>().sqrt()],
    };
    Ok((sde.drift_lin[0][0], c))
}

/// Per-path `(1/T) log|v(T)/v(0)|` for the Euler–Maruyama linearization.
fn path_exponents(sigma1: f64, c: &[f64], cfg: &LyapunovConfig) -> Vec<f64> {
    let steps = cfg.steps();
    let h = cfg.t_end / steps as f64;
    let sq = h.sqrt();
    let noise = NoiseSource::new(cfg.seed, c.len());
    (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut stream = noise.stream(p);
            let mut z = vec![0.0; c.len()];
            let mut acc = 0.0;
            for _ in 0..steps {
                stream.next_normals(&mut z);
                let kick: f64 = c.iter().zip(&z).map(|(cj, zj)| cj * zj).sum::<f64>() * sq;
                acc += (1.0 + sigma1 * h + kick).abs().ln();
            }
            acc / (steps as f64 * h)
        })
        .collect()
}

/// Top Lyapunov exponent of `dv = σ₁ v dT + Σ c_j v dβ_j`.
pub fn estimate_lyapunov(sde: &AmplitudeSDE, config: &LyapunovConfig) -> Result<LyapunovEstimate> {
    config.validate()?;
    let (sigma1, c) = linearization(sde)?;
    let closed_form = sigma1 - 0.5 * c.iter().map(|v| v * v).sum::<f64>();
    let xs = path_exponents(sigma1, &c, config);
    Ok(LyapunovEstimate {
        exponent: mean(&xs),
        se: (variance(&xs) / xs.len() as f64).sqrt(),
        closed_form,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub nu: f64,
    pub exponent: f64,
    pub se: f64,
    pub closed_form: f64,
    /// `|MC − closed form| / SE`.
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub nu_grid: Vec<f64>,
    pub points: Vec<StabilityPoint>,
    /// Zero crossing of the least-squares line through the MC exponents.
    pub threshold_estimate: f64,
    /// Path-bootstrap standard error of the crossing.
    pub threshold_se: f64,
    /// Zero crossing of the closed-form exponents.
    pub threshold_closed_form: f64,
    pub monotone: bool,
}

impl StabilityReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "nu,exponent,se,closed_form,z_score")?;
        for p in &self.points {
            writeln!(
                w,
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.4}",
                p.nu, p.exponent, p.se, p.closed_form, p.z_score
            )?;
        }
        Ok(())
    }
}

/// Lyapunov exponents along `nu_grid` with common random numbers; `make`
/// builds the amplitude SDE for a given ν.
pub fn stability_scan(
    make: impl Fn(f64) -> Result<AmplitudeSDE>,
    nu_grid: &[f64],
    config: &LyapunovConfig,
) -> Result<StabilityReport> {
    config.validate()?;
    if nu_grid.len() < 2 || nu_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("nu_grid needs at least two increasing values".into()));
    }
    let mut per_path: Vec<Vec<f64>> = Vec::with_capacity(nu_grid.len());
    let mut points = Vec::with_capacity(nu_grid.len());
    for &nu in nu_grid {
        let sde = make(nu)?;
        let (sigma1, c) = linearization(&sde)?;
        let closed_form = sigma1 - 0.5 * c.iter().map(|v| v * v).sum::<f64>();
        let xs = path_exponents(sigma1, &c, config);
        let exponent = mean(&xs);
        let se = (variance(&xs) / xs.len() as f64).sqrt();
        points.push(StabilityPoint {
            nu,
            exponent,
            se,
            closed_form,
            z_score: (exponent - closed_form).abs() / se,
        });
        per_path.push(xs);
    }
    let crossing = |ys: &[f64]| {
        let f = ols(nu_grid, ys);
        -f.intercept / f.slope
    };
    let threshold_estimate = crossing(&points.iter().map(|p| p.exponent).collect::<Vec<_>>());
    let threshold_closed_form = crossing(&points.iter().map(|p| p.closed_form).collect::<Vec<_>>());

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED);
    let n = config.n_paths;
    let mut idx = vec![0usize; n];
    let boots: Vec<f64> = (0..config.bootstrap_resamples)
        .map(|_| {
            idx.iter_mut().for_each(|i| *i = rng.gen_range(0..n));
            let ys: Vec<f64> = per_path
                .iter()
                .map(|xs| idx.iter().map(|&i| xs[i]).sum::<f64>() / n as f64)
                .collect();
            crossing(&ys)
        })
        .collect();
    let threshold_se = if boots.len() >= 2 { variance(&boots).sqrt() } else { f64::NAN };
    let monotone = points.windows(2).all(|w| w[1].exponent > w[0].exponent);
    Ok(StabilityReport {
        nu_grid: nu_grid.to_vec(),
        points,
        threshold_estimate,
        threshold_se,
        threshold_closed_form,
        monotone,
    })
}

//! Time integration of the truncated SPDE (original time `t`) and of the
//! reduced equations (slow time `T = ε² t`).

mod amplitude;
mod noise;
mod ou;
mod spde;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::NoiseScaling;

pub use amplitude::{simulate_amplitude, AmplitudeClock};
pub use noise::{NoiseSource, NoiseStream};
pub use ou::{build_case2_approximation, ou_exact_step, simulate_ou_coupled};
pub use spde::simulate_spde;

/// Upper bound on `δt λ_max` for the explicit nonlinear part.
pub const MAX_FAST_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub epsilon: f64,
    /// Slow-time horizon `T₀`.
    pub t0: f64,
    /// Slow-time sampling interval (and amplitude step in direct mode).
    pub dt_slow: f64,
    /// `c` in `δt = c / λ_max`.
    pub dt_fast_factor: f64,
    pub seed: u64,
    pub kappa: f64,
    pub n_paths: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            return fail(format!("epsilon must lie in (0, 0.5], got {}", self.epsilon));
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return fail(format!("T0 must be positive, got {}", self.t0));
        }
        if !(self.dt_slow > 0.0 && self.dt_slow <= self.t0) {
            return fail(format!("dt_slow must lie in (0, T0], got {}", self.dt_slow));
        }
        let n = self.t0 / self.dt_slow;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return fail("T0 must be an integer multiple of dt_slow".into());
        }
        if !(self.dt_fast_factor > 0.0 && self.dt_fast_factor <= MAX_FAST_FACTOR) {
            return fail(format!(
                "dt_fast_factor must lie in (0, {MAX_FAST_FACTOR}], got {}",
                self.dt_fast_factor
            ));
        }
        if !(self.kappa > 0.0 && self.kappa < 2.0 / 19.0) {
            return fail(format!("kappa must lie in (0, 2/19), got {}", self.kappa));
        }
        if self.n_paths == 0 {
            return fail("n_paths must be positive".into());
        }
        Ok(())
    }

    /// Validation plus the tighter `κ < 1/13` required with `σ_ε = ε`.
    pub fn validate_for(&self, scaling: NoiseScaling) -> Result<()> {
        self.validate()?;
        if scaling == NoiseScaling::AdditiveEps1 && self.kappa >= 1.0 / 13.0 {
            return Err(Error::Config(format!(
                "kappa must lie in (0, 1/13) for order-epsilon noise, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    pub fn n_records(&self) -> usize {
        (self.t0 / self.dt_slow).round() as usize
    }

    /// Original-time grid fitting a whole number of steps into each record
    /// interval, with `δt ≤ dt_fast_factor / λ_max`.
    pub fn fast_grid(&self, lambda_max: f64) -> Result<FastGrid> {
        self.validate()?;
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(Error::Domain(format!("largest eigenvalue must be positive, got {lambda_max}")));
        }
        let interval = self.dt_slow / (self.epsilon * self.epsilon);
        let steps_per_record = (interval * lambda_max / self.dt_fast_factor).ceil().max(1.0) as usize;
        Ok(FastGrid {
            dt: interval / steps_per_record as f64,
            steps_per_record,
            n_records: self.n_records(),
            epsilon: self.epsilon,
        })
    }

    /// Blow-up thresholds `(kernel, stable)` on the rescaled parts.
    pub fn guard_thresholds(&self, scaling: NoiseScaling) -> (f64, f64) {
        let e = self.epsilon;
        match scaling {
            NoiseScaling::AdditiveEps2 => (e.powf(-self.kappa), e.powf(-3.0 * self.kappa)),
            NoiseScaling::AdditiveEps1 => (e.powf(-self.kappa), e.powf(-self.kappa)),
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }
}

/// Original-time step layout shared by every pathwise-coupled simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastGrid {
    pub dt: f64,
    pub steps_per_record: usize,
    pub n_records: usize,
    pub epsilon: f64,
}

impl FastGrid {
    /// Slow-time length of one fine step.
    pub fn slow_dt(&self) -> f64 {
        self.epsilon * self.epsilon * self.dt
    }

    pub fn total_steps(&self) -> u64 {
        (self.steps_per_record * self.n_records) as u64
    }

    pub fn record_time(&self, r: usize) -> f64 {
        (r * self.steps_per_record) as f64 * self.slow_dt()
    }
}

/// States sampled on the slow-time record grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Slow time at which the blow-up guard fired, if it did.
    pub stopped_at: Option<f64>,
}

impl Trajectory {
    pub(crate) fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            stopped_at: None,
        }
    }

    pub(crate) fn push(&mut self, t: f64, state: &[f64]) {
        self.times.push(t);
        self.states.push(state.to_vec());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// CSV with `#` metadata lines, a header row and one row per sample.
    /// Columns are `T,y` for scalar paths and `T,mode_1,..` otherwise.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[(&str, String)]) -> std::io::Result<()> {
        for (k, v) in metadata {
            writeln!(w, "# {k}: {v}")?;
        }
        if let Some(t) = self.stopped_at {
            writeln!(w, "# stopped_at: {t}")?;
        }
        let dim = self.states.first().map_or(0, Vec::len);
        let mut header = String::from("T");
        if dim == 1 {
            header.push_str(",y");
        } else {
            for k in 1..=dim {
                header.push_str(&format!(",mode_{k}"));
            }
        }
        writeln!(w, "{header}")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(w, "{t:.10e}")?;
            for v in s {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

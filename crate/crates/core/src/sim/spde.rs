use crate::error::{Error, Result};
use crate::spectral::{weighted_norm, ModelSpec, SpectralField};

use super::{NoiseSource, SimConfig, Trajectory};

/// Precomputed per-model quantities for the exponential Euler step.
struct Stepper<'a> {
    model: &'a ModelSpec,
    decay: Vec<f64>,
    /// `∫_0^δt e^{-λ s} ds`, the exact weight of a frozen forcing.
    phi: Vec<f64>,
    lin_diag: Option<Vec<f64>>,
    /// `B(u, u)` as `(i, j, k, c)` with `c` already doubled off the diagonal.
    quad: Vec<(u32, u32, u32, f64)>,
    additive: Vec<(usize, f64)>,
    /// Per channel, the nonzero rows `i` of `[i][k] = <Ḡ'(0)(e_i) f_j, e_k>`.
    mult: Vec<Vec<(usize, Vec<f64>)>>,
    eps2: f64,
    eps: f64,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a ModelSpec, dt: f64, eps: f64) -> Self {
        let decay = model.lambdas().iter().map(|l| (-l * dt).exp()).collect();
        let phi = model
            .lambdas()
            .iter()
            .map(|&l| if l == 0.0 { dt } else { -(-l * dt).exp_m1() / l })
            .collect();
        let lin = model.linear();
        let is_diag = (0..lin.nrows()).all(|r| (0..lin.ncols()).all(|c| r == c || lin[(r, c)] == 0.0));
        let lin_diag = is_diag.then(|| lin.diagonal().iter().copied().collect());
        let sigma = model.noise_scaling().sigma(eps);
        let additive = (0..model.n_channels())
            .filter(|&j| model.alpha(j) != 0.0)
            .map(|j| (j, sigma * model.alpha(j)))
            .collect();
        let n = model.n_modes();
        let quad = model
            .bilinear()
            .entries()
            .iter()
            .map(|e| {
                let c = if e.i == e.j { e.value } else { 2.0 * e.value };
                (e.i as u32, e.j as u32, e.k as u32, c)
            })
            .collect();
        let mult = (0..model.n_channels())
            .map(|j| {
                model
                    .gprime_channel(j)
                    .chunks(n)
                    .enumerate()
                    .filter(|(_, row)| row.iter().any(|g| *g != 0.0))
                    .map(|(i, row)| (i, row.to_vec()))
                    .collect()
            })
            .collect();
        Self {
            model,
            decay,
            phi,
            lin_diag,
            quad,
            additive,
            mult,
            eps2: eps * eps,
            eps,
        }
    }

    /// One step `u ← e^{Aδt}(u + G(u)ΔW) + φ₁(δt)(ε²Lu + B(u,u))`.
    fn step(&self, u: &mut [f64], dw: &[f64], nl: &mut [f64], kick: &mut [f64]) {
        nl.iter_mut().for_each(|x| *x = 0.0);
        for &(i, j, k, c) in &self.quad {
            nl[k as usize] += c * u[i as usize] * u[j as usize];
        }
        match &self.lin_diag {
            Some(d) => {
                for k in 0..u.len() {
                    nl[k] += self.eps2 * d[k] * u[k];
                }
            }
            None => {
                let lin = self.model.linear();
                for r in 0..u.len() {
                    let mut s = 0.0;
                    for c in 0..u.len() {
                        s += lin[(r, c)] * u[c];
                    }
                    nl[r] += self.eps2 * s;
                }
            }
        }
        kick.iter_mut().for_each(|x| *x = 0.0);
        for &(j, a) in &self.additive {
            kick[j] += a * dw[j];
        }
        for (j, rows) in self.mult.iter().enumerate() {
            let w = self.eps * dw[j];
            for (i, row) in rows {
                let c = w * u[*i];
                for (kk, g) in kick.iter_mut().zip(row) {
                    *kk += c * g;
                }
            }
        }
        for k in 0..u.len() {
            u[k] = self.decay[k] * (u[k] + kick[k]) + self.phi[k] * nl[k];
        }
    }
}

/// Integrates the Galerkin SPDE in original time with exponential Euler,
/// recording every `dt_slow` of slow time. The blow-up guard stops the path
/// (recorded in `stopped_at`); non-finite states are errors.
pub fn simulate_spde(
    model: &ModelSpec,
    config: &SimConfig,
    noise: &NoiseSource,
    path: u64,
    u0: &SpectralField,
) -> Result<Trajectory> {
    config.validate_for(model.noise_scaling())?;
    if u0.len() != model.n_modes() {
        return Err(Error::Dimension {
            expected: model.n_modes(),
            got: u0.len(),
        });
    }
    if noise.n_channels() != model.n_channels() {
        return Err(Error::Dimension {
            expected: model.n_channels(),
            got: noise.n_channels(),
        });
    }
    let eps = config.epsilon;
    let weights = model.norm_weights(model.alpha_exp());
    let norm0 = model.h_alpha_norm(u0, model.alpha_exp())?;
    let bound = eps.powf(1.0 - config.kappa / 3.0);
    if norm0 > bound * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "initial norm {norm0} exceeds eps^(1-kappa/3) = {bound}"
        )));
    }
    let grid = config.fast_grid(model.lambda_max())?;
    let stepper = Stepper::new(model, grid.dt, eps);
    let (kernel_max, stable_max) = config.guard_thresholds(model.noise_scaling());
    let stable_scale = match model.noise_scaling() {
        crate::spectral::NoiseScaling::AdditiveEps2 => eps * eps,
        crate::spectral::NoiseScaling::AdditiveEps1 => eps,
    };
    let n = model.n_kernel();
    let big_n = model.n_modes();

    let mut stream = noise.stream(path);
    let mut u = u0.coeffs().to_vec();
    let mut dw = vec![0.0; model.n_channels()];
    let mut nl = vec![0.0; big_n];
    let mut kick = vec![0.0; big_n];
    let mut traj = Trajectory::with_capacity(grid.n_records + 1);
    traj.push(0.0, &u);
    let slow_dt = grid.slow_dt();
    let mut step: u64 = 0;
    'records: for r in 1..=grid.n_records {
        for _ in 0..grid.steps_per_record {
            stream.next_increments(grid.dt, &mut dw);
            stepper.step(&mut u, &dw, &mut nl, &mut kick);
            step += 1;
            let t = step as f64 * slow_dt;
            let kn = weighted_norm(&u[..n], &weights[..n]);
            let sn = weighted_norm(&u[n..], &weights[n..]);
            if !(kn.is_finite() && sn.is_finite()) {
                return Err(Error::Integration(t));
            }
            if kn / eps > kernel_max || sn / stable_scale > stable_max {
                traj.stopped_at = Some(t);
                break 'records;
            }
        }
        traj.push(grid.record_time(r), &u);
    }
    Ok(traj)
}

use crate::error::{Error, Result};
use crate::spectral::{ModelSpec, Part, SpectralField};

use super::{NoiseSource, SimConfig, Trajectory};

/// Exact transition over slow time `dt` of the rescaled Ornstein–Uhlenbeck
/// process `Z(T) = ε^{-1} α ∫_0^T e^{-ε^{-2} λ (T-s)} dβ̃(s)`.
pub fn ou_exact_step(z: f64, lambda: f64, alpha: f64, eps: f64, dt: f64, xi: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("OU rate must be positive, got {lambda}")));
    }
    if !(eps > 0.0 && dt >= 0.0) {
        return Err(Error::Domain("OU step needs eps > 0 and dt >= 0".into()));
    }
    let r = lambda * dt / (eps * eps);
    let var = -(-2.0 * r).exp_m1() / (2.0 * lambda);
    Ok((-r).exp() * z + alpha * var.sqrt() * xi)
}

/// The stable-mode Ornstein–Uhlenbeck response `Z` driven by the same
/// increments as [`super::simulate_spde`] on the same path, discretized the
/// way the SPDE integrator treats its additive noise. Kernel entries are 0.
pub fn simulate_ou_coupled(
    model: &ModelSpec,
    config: &SimConfig,
    noise: &NoiseSource,
    path: u64,
) -> Result<Trajectory> {
    config.validate()?;
    if noise.n_channels() != model.n_channels() {
        return Err(Error::Dimension {
            expected: model.n_channels(),
            got: noise.n_channels(),
        });
    }
    let grid = config.fast_grid(model.lambda_max())?;
    let forced: Vec<(usize, f64, f64)> = (0..model.n_channels())
        .filter(|&j| !model.is_kernel(j) && model.alpha(j) != 0.0)
        .map(|j| (j, model.alpha(j), (-model.lambdas()[j] * grid.dt).exp()))
        .collect();
    let mut z = vec![0.0; model.n_modes()];
    let mut dw = vec![0.0; model.n_channels()];
    let mut stream = noise.stream(path);
    let mut traj = Trajectory::with_capacity(grid.n_records + 1);
    traj.push(0.0, &z);
    for r in 1..=grid.n_records {
        for _ in 0..grid.steps_per_record {
            stream.next_increments(grid.dt, &mut dw);
            for &(j, a, d) in &forced {
                z[j] = d * (z[j] + a * dw[j]);
            }
        }
        traj.push(grid.record_time(r), &z);
    }
    Ok(traj)
}

fn aligned(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0))
}

/// Assembles `ε ỹ(T) e_1 + ε e^{ε^{-2} A T} ψ(0) + ε Z(T)` on the record
/// grid of `y_path` (kernel of dimension `n`, `ỹ` in kernel coordinates).
/// The result ends where the shorter input ends.
pub fn build_case2_approximation(
    model: &ModelSpec,
    y_path: &Trajectory,
    psi0: &SpectralField,
    z_path: &Trajectory,
    eps: f64,
) -> Result<Trajectory> {
    let len = y_path.len().min(z_path.len());
    if !aligned(&y_path.times[..len], &z_path.times[..len]) {
        return Err(Error::Alignment("amplitude and OU sample times differ".into()));
    }
    let psi_s = model.project(psi0, Part::Stable)?;
    let n = model.n_kernel();
    let mut out = Trajectory::with_capacity(len);
    for r in 0..len {
        let t = y_path.times[r];
        let y = &y_path.states[r];
        let z = &z_path.states[r];
        if y.len() != n || z.len() != model.n_modes() {
            return Err(Error::Dimension {
                expected: n,
                got: y.len(),
            });
        }
        let q = model.semigroup_step(&psi_s, t / (eps * eps))?;
        let mut state: Vec<f64> = q.coeffs().iter().zip(z).map(|(qk, zk)| eps * (qk + zk)).collect();
        for k in 0..n {
            state[k] += eps * y[k];
        }
        out.push(t, &state);
    }
    out.stopped_at = match (y_path.stopped_at, z_path.stopped_at) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    Ok(out)
}

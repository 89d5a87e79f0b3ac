use crate::derive::{AmplitudeSDE, DiffusionForm};
use crate::error::{Error, Result};

use super::{FastGrid, NoiseSource, SimConfig, Trajectory};

/// Time grid and noise coupling for [`simulate_amplitude`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplitudeClock {
    /// Step on the SPDE's fine grid with slow increments `ε ΔW` built from
    /// the same original-time increments, which couples the paths.
    Coupled(FastGrid),
    /// Euler–Maruyama with `substeps` equal steps per `dt_slow`; the noise
    /// source supplies one standard normal per driving Brownian motion per
    /// step.
    Direct { substeps: usize },
}

struct Em<'a> {
    sde: &'a AmplitudeSDE,
    cols: Vec<f64>,
}

impl<'a> Em<'a> {
    fn new(sde: &'a AmplitudeSDE) -> Self {
        Self {
            sde,
            cols: vec![0.0; sde.dim],
        }
    }

    /// `y ← y + b(y) h + σ(y) ΔB`.
    fn step(&mut self, y: &mut [f64], h: f64, db: &[f64]) -> Result<()> {
        let sde = self.sde;
        let drift = sde.drift(y);
        match sde.form {
            DiffusionForm::Channels => {
                self.cols.iter_mut().for_each(|c| *c = 0.0);
                for (j, (a, m)) in sde.diff_add.iter().zip(&sde.diff_mult).enumerate() {
                    let w = db[j];
                    if w == 0.0 {
                        continue;
                    }
                    for r in 0..sde.dim {
                        let my: f64 = m[r].iter().zip(y.iter()).map(|(g, v)| g * v).sum();
                        self.cols[r] += (a[r] + my) * w;
                    }
                }
            }
            DiffusionForm::SqrtCovariance if sde.dim == 1 => {
                let var: f64 = sde
                    .diff_add
                    .iter()
                    .zip(&sde.diff_mult)
                    .map(|(a, m)| {
                        let c = a[0] + m[0][0] * y[0];
                        c * c
                    })
                    .sum();
                self.cols[0] = var.sqrt() * db[0];
            }
            DiffusionForm::SqrtCovariance => {
                let root = sde.diffusion(y)?;
                for r in 0..sde.dim {
                    self.cols[r] = (0..sde.dim).map(|c| root[(r, c)] * db[c]).sum();
                }
            }
        }
        for r in 0..sde.dim {
            y[r] += drift[r] * h + self.cols[r];
        }
        Ok(())
    }
}

/// Integrates an amplitude SDE in slow time, recording every `dt_slow`
/// (or every `steps_per_record` fine steps when coupled). The path stops
/// once `|y|` exceeds `ε^{-κ}`.
pub fn simulate_amplitude(
    sde: &AmplitudeSDE,
    config: &SimConfig,
    noise: &NoiseSource,
    path: u64,
    y0: &[f64],
    clock: AmplitudeClock,
) -> Result<Trajectory> {
    config.validate()?;
    sde.validate()?;
    if y0.len() != sde.dim {
        return Err(Error::Dimension {
            expected: sde.dim,
            got: y0.len(),
        });
    }
    let eps = config.epsilon;
    let threshold = eps.powf(-config.kappa);
    let (h, per_record, n_records, scale) = match clock {
        AmplitudeClock::Coupled(grid) => {
            if sde.form != DiffusionForm::Channels {
                return Err(Error::Precondition(
                    "pathwise coupling needs one Brownian motion per noise channel".into(),
                ));
            }
            if (grid.epsilon - eps).abs() > 0.0 {
                return Err(Error::Alignment("fast grid built for a different epsilon".into()));
            }
            (grid.slow_dt(), grid.steps_per_record, grid.n_records, eps * grid.dt.sqrt())
        }
        AmplitudeClock::Direct { substeps } => {
            if substeps == 0 {
                return Err(Error::Config("amplitude substeps must be positive".into()));
            }
            let h = config.dt_slow / substeps as f64;
            (h, substeps, config.n_records(), h.sqrt())
        }
    };
    if noise.n_channels() != sde.n_noise() {
        return Err(Error::Dimension {
            expected: sde.n_noise(),
            got: noise.n_channels(),
        });
    }
    let mut stream = noise.stream(path);
    let mut em = Em::new(sde);
    let mut y = y0.to_vec();
    let mut db = vec![0.0; noise.n_channels()];
    let mut traj = Trajectory::with_capacity(n_records + 1);
    traj.push(0.0, &y);
    let mut step: u64 = 0;
    'records: for r in 1..=n_records {
        for _ in 0..per_record {
            stream.next_normals(&mut db);
            db.iter_mut().for_each(|z| *z *= scale);
            em.step(&mut y, h, &db)?;
            step += 1;
            let t = step as f64 * h;
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::Integration(t));
            }
            if norm > threshold {
                traj.stopped_at = Some(t);
                break 'records;
            }
        }
        traj.push(r as f64 * per_record as f64 * h, &y);
    }
    Ok(traj)
}

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive::{derive_case1, derive_case2, derive_case2_1d, AmplitudeSDE};
use crate::error::{Error, Result};
use crate::sim::{
    build_case2_approximation, simulate_amplitude, simulate_ou_coupled, simulate_spde, AmplitudeClock, NoiseSource,
    SimConfig, Trajectory,
};
use crate::spectral::{ModelSpec, NoiseScaling, SpectralField};

use super::stats::{bootstrap_log_slope, ks_two_sample, mean, ols, quantile, variance, Proportion};

/// Noise domains keeping the independent streams of a campaign apart.
pub const DOMAIN_SPDE: u64 = 0;
pub const DOMAIN_AMPLITUDE: u64 = 1;
pub const DOMAIN_REFERENCE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// `σ_ε = ε²`, pathwise comparison with the amplitude SDE.
    I,
    /// `σ_ε = ε`, averaged amplitude SDE plus OU and semigroup corrections.
    II,
}

impl Case {
    pub fn scaling(self) -> NoiseScaling {
        match self {
            Case::I => NoiseScaling::AdditiveEps2,
            Case::II => NoiseScaling::AdditiveEps1,
        }
    }

    /// Exponent of the theorem's error bound at the given κ.
    pub fn rate_exponent(self, kappa: f64) -> f64 {
        match self {
            Case::I => 2.0 - 19.0 * kappa,
            Case::II => 16.0 / 15.0 - 13.0 * kappa,
        }
    }
}

/// Initial data and campaign knobs shared by both cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSetup {
    /// Rescaled kernel coefficients at `T = 0`.
    pub kernel0: Vec<f64>,
    /// Rescaled stable coefficients at `T = 0`, indexed by mode (kernel
    /// entries ignored). Empty means zero.
    #[serde(default)]
    pub stable0: Vec<f64>,
    pub bootstrap_resamples: usize,
    /// Size of the amplitude reference sample for distributional checks.
    pub reference_paths: usize,
    /// Euler–Maruyama substeps per `dt_slow` for uncoupled amplitude runs.
    pub amplitude_substeps: usize,
}

impl CampaignSetup {
    /// `u(0)`: kernel entries scaled by `ε`, stable entries by `ε²` (Case I)
    /// or `ε` (Case II).
    pub fn initial_field(&self, model: &ModelSpec, case: Case, eps: f64) -> Result<SpectralField> {
        let n = model.n_kernel();
        if self.kernel0.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.kernel0.len(),
            });
        }
        if !self.stable0.is_empty() && self.stable0.len() != model.n_modes() {
            return Err(Error::Dimension {
                expected: model.n_modes(),
                got: self.stable0.len(),
            });
        }
        let stable_scale = match case {
            Case::I => eps * eps,
            Case::II => eps,
        };
        let mut u = vec![0.0; model.n_modes()];
        for (k, v) in u.iter_mut().enumerate() {
            *v = if k < n {
                eps * self.kernel0[k]
            } else {
                stable_scale * self.stable0.get(k).copied().unwrap_or(0.0)
            };
        }
        Ok(SpectralField::new(u))
    }

    fn stable_field(&self, model: &ModelSpec) -> SpectralField {
        let mut v = vec![0.0; model.n_modes()];
        for k in model.n_kernel()..model.n_modes() {
            v[k] = self.stable0.get(k).copied().unwrap_or(0.0);
        }
        SpectralField::new(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsErrorStats {
    pub eps: f64,
    pub n_paths: usize,
    pub stopped: Proportion,
    pub mean: f64,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
    /// Paths whose sup error exceeds `ε^{rate exponent}`.
    pub exceedance: Proportion,
    pub usable: bool,
}

/// Kernel-mode law of the SPDE at `T₀` against the amplitude SDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub eps: f64,
    pub spde_samples: usize,
    pub reference_samples: usize,
    pub spde_stopped: Proportion,
    /// Per kernel coordinate.
    pub ks: Vec<f64>,
    pub ks_max: f64,
    pub spde_mean: Vec<f64>,
    pub spde_var: Vec<f64>,
    pub amplitude_mean: Vec<f64>,
    pub amplitude_var: Vec<f64>,
    pub usable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub per_eps: Vec<MomentStats>,
    pub ks_strictly_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub case: Case,
    pub eps_grid: Vec<f64>,
    pub kappa: f64,
    pub rate_exponent: f64,
    pub per_eps: Vec<EpsErrorStats>,
    pub fitted_slope: f64,
    /// Standard deviation of the path-bootstrap slopes.
    pub slope_se: f64,
    pub slope_lower: f64,
    pub ols_slope_se: f64,
    pub bootstrap_resamples: usize,
    pub distribution: Option<MomentReport>,
}

impl ErrorReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "eps,n_paths,stopped_fraction,mean,median,q05,q25,q75,q95,max,exceed_fraction,usable")?;
        for s in &self.per_eps {
            writeln!(
                w,
                "{},{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{},{}",
                s.eps,
                s.n_paths,
                s.stopped.estimate,
                s.mean,
                s.median,
                s.q05,
                s.q25,
                s.q75,
                s.q95,
                s.max,
                s.exceedance.estimate,
                s.usable
            )?;
        }
        Ok(())
    }

    /// Gnuplot data: `log(eps) log(mean) log(median) log(eps^rate)`.
    pub fn write_dat<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# slope {:.6} se {:.6}", self.fitted_slope, self.slope_se)?;
        writeln!(w, "# log_eps log_mean log_median log_bound")?;
        for s in &self.per_eps {
            writeln!(
                w,
                "{:.10e} {:.10e} {:.10e} {:.10e}",
                s.eps.ln(),
                s.mean.ln(),
                s.median.ln(),
                self.rate_exponent * s.eps.ln()
            )?;
        }
        Ok(())
    }
}

fn check_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.len() < 2 {
        return Err(Error::Config("eps_grid needs at least two values".into()));
    }
    if eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("eps_grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// `sup_r ‖u_r − v_r‖_α` over the common records.
fn sup_error(model: &ModelSpec, u: &Trajectory, v: &Trajectory) -> Result<f64> {
    let w = model.norm_weights(model.alpha_exp());
    let len = u.len().min(v.len());
    let mut sup: f64 = 0.0;
    for r in 0..len {
        let d: f64 = u.states[r]
            .iter()
            .zip(&v.states[r])
            .zip(&w)
            .map(|((a, b), wk)| ((a - b) * wk).powi(2))
            .sum();
        sup = sup.max(d.sqrt());
    }
    Ok(sup)
}

/// Outcome of one path at one ε.
struct PathResult {
    error: f64,
    stopped: bool,
    /// Rescaled kernel state at `T₀` for unstopped paths.
    kernel_final: Option<Vec<f64>>,
}

fn case1_path(
    model: &ModelSpec,
    sde: &AmplitudeSDE,
    cfg: &SimConfig,
    setup: &CampaignSetup,
    path: u64,
) -> Result<PathResult> {
    let eps = cfg.epsilon;
    let noise = NoiseSource::with_domain(cfg.seed, DOMAIN_SPDE, model.n_channels());
    let u0 = setup.initial_field(model, Case::I, eps)?;
    let u = simulate_spde(model, cfg, &noise, path, &u0)?;
    let grid = cfg.fast_grid(model.lambda_max())?;
    let x = simulate_amplitude(sde, cfg, &noise, path, &setup.kernel0, AmplitudeClock::Coupled(grid))?;
    let n = model.n_kernel();
    let lifted = Trajectory {
        times: x.times.clone(),
        states: x
            .states
            .iter()
            .map(|s| {
                let mut v = vec![0.0; model.n_modes()];
                for k in 0..n {
                    v[k] = eps * s[k];
                }
                v
            })
            .collect(),
        stopped_at: x.stopped_at,
    };
    let stopped = u.stopped_at.is_some() || x.stopped_at.is_some();
    Ok(PathResult {
        error: sup_error(model, &u, &lifted)?,
        stopped,
        kernel_final: None,
    })
}

fn case2_path(
    model: &ModelSpec,
    sde: &AmplitudeSDE,
    cfg: &SimConfig,
    setup: &CampaignSetup,
    path: u64,
) -> Result<PathResult> {
    let eps = cfg.epsilon;
    let noise = NoiseSource::with_domain(cfg.seed, DOMAIN_SPDE, model.n_channels());
    let u0 = setup.initial_field(model, Case::II, eps)?;
    let u = simulate_spde(model, cfg, &noise, path, &u0)?;
    let z = simulate_ou_coupled(model, cfg, &noise, path)?;
    let amp_noise = NoiseSource::with_domain(cfg.seed, DOMAIN_AMPLITUDE, sde.n_noise());
    let y = simulate_amplitude(
        sde,
        cfg,
        &amp_noise,
        path,
        &setup.kernel0,
        AmplitudeClock::Direct {
            substeps: setup.amplitude_substeps,
        },
    )?;
    let approx = build_case2_approximation(model, &y, &setup.stable_field(model), &z, eps)?;
    let n = model.n_kernel();
    let kernel_final = match u.stopped_at {
        None => Some(u.last().expect("initial record")[..n].iter().map(|v| v / eps).collect()),
        Some(_) => None,
    };
    Ok(PathResult {
        error: sup_error(model, &u, &approx)?,
        stopped: u.stopped_at.is_some() || y.stopped_at.is_some(),
        kernel_final,
    })
}

fn summarize(eps: f64, results: &[PathResult], bound: f64) -> EpsErrorStats {
    let errs: Vec<f64> = results.iter().map(|r| r.error).collect();
    let n = results.len();
    let n_stopped = results.iter().filter(|r| r.stopped).count();
    let exceed = errs.iter().filter(|e| **e > bound).count();
    EpsErrorStats {
        eps,
        n_paths: n,
        stopped: Proportion::new(n_stopped, n),
        mean: mean(&errs),
        median: quantile(&errs, 0.5),
        q05: quantile(&errs, 0.05),
        q25: quantile(&errs, 0.25),
        q75: quantile(&errs, 0.75),
        q95: quantile(&errs, 0.95),
        max: errs.iter().copied().fold(0.0, f64::max),
        exceedance: Proportion::new(exceed, n),
        usable: n_stopped < n,
    }
}

/// Reduced equation used as the Case II reference law.
pub fn case2_reference_sde(model: &ModelSpec) -> Result<AmplitudeSDE> {
    if model.n_kernel() == 1 {
        Ok(derive_case2_1d(model)?.1)
    } else {
        Ok(derive_case2(model)?.1)
    }
}

fn moment_stats(
    sde: &AmplitudeSDE,
    cfg: &SimConfig,
    setup: &CampaignSetup,
    results: &[PathResult],
) -> Result<MomentStats> {
    let n = sde.dim;
    let spde: Vec<&Vec<f64>> = results.iter().filter_map(|r| r.kernel_final.as_ref()).collect();
    let noise = NoiseSource::with_domain(cfg.seed, DOMAIN_REFERENCE, sde.n_noise());
    let clock = AmplitudeClock::Direct {
        substeps: setup.amplitude_substeps,
    };
    let reference: Vec<Vec<f64>> = (0..setup.reference_paths as u64)
        .into_par_iter()
        .map(|p| simulate_amplitude(sde, cfg, &noise, p, &setup.kernel0, clock))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|t| t.stopped_at.is_none())
        .map(|t| t.last().expect("initial record").to_vec())
        .collect();
    let stopped = results.iter().filter(|r| r.kernel_final.is_none()).count();
    let usable = spde.len() >= 2 && reference.len() >= 2;
    let coord = |s: &[&Vec<f64>], k: usize| s.iter().map(|v| v[k]).collect::<Vec<f64>>();
    let refs: Vec<&Vec<f64>> = reference.iter().collect();
    let mut ks = Vec::with_capacity(n);
    let (mut sm, mut sv, mut am, mut av) = (vec![], vec![], vec![], vec![]);
    for k in 0..n {
        let a = coord(&spde, k);
        let b = coord(&refs, k);
        if usable {
            ks.push(ks_two_sample(&a, &b));
            sm.push(mean(&a));
            sv.push(variance(&a));
            am.push(mean(&b));
            av.push(variance(&b));
        }
    }
    Ok(MomentStats {
        eps: cfg.epsilon,
        spde_samples: spde.len(),
        reference_samples: reference.len(),
        spde_stopped: Proportion::new(stopped, results.len()),
        ks_max: ks.iter().copied().fold(f64::NAN, f64::max),
        ks,
        spde_mean: sm,
        spde_var: sv,
        amplitude_mean: am,
        amplitude_var: av,
        usable,
    })
}

fn run_paths(
    model: &ModelSpec,
    case: Case,
    sde: &AmplitudeSDE,
    cfg: &SimConfig,
    setup: &CampaignSetup,
) -> Result<Vec<PathResult>> {
    (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| match case {
            Case::I => case1_path(model, sde, cfg, setup, p),
            Case::II => case2_path(model, sde, cfg, setup, p),
        })
        .collect()
}

fn check_case(model: &ModelSpec, case: Case) -> Result<()> {
    if model.noise_scaling() != case.scaling() {
        return Err(Error::Config(format!(
            "model noise scaling {:?} does not match case {case:?}",
            model.noise_scaling()
        )));
    }
    Ok(())
}

/// Sup-norm error of the approximation over `[0, T₀ ∧ τ]` for each ε, with
/// a log–log slope fit and, for Case II, the distributional comparison.
pub fn run_error_scaling(
    model: &ModelSpec,
    case: Case,
    config: &SimConfig,
    eps_grid: &[f64],
    setup: &CampaignSetup,
) -> Result<ErrorReport> {
    check_grid(eps_grid)?;
    check_case(model, case)?;
    let sde = match case {
        Case::I => derive_case1(model)?,
        Case::II => case2_reference_sde(model)?,
    };
    let rate = case.rate_exponent(config.kappa);
    let mut per_eps = Vec::with_capacity(eps_grid.len());
    let mut errors = Vec::with_capacity(eps_grid.len());
    let mut moments = Vec::new();
    for &eps in eps_grid {
        let cfg = config.with_epsilon(eps);
        cfg.validate_for(case.scaling())?;
        let results = run_paths(model, case, &sde, &cfg, setup)?;
        per_eps.push(summarize(eps, &results, eps.powf(rate)));
        errors.push(results.iter().map(|r| r.error).collect::<Vec<f64>>());
        if case == Case::II {
            moments.push(moment_stats(&sde, &cfg, setup, &results)?);
        }
    }
    let usable: Vec<usize> = (0..eps_grid.len()).filter(|&i| per_eps[i].usable).collect();
    let (fitted_slope, ols_slope_se, slope_se) = if usable.len() >= 2 {
        let ex: Vec<f64> = usable.iter().map(|&i| eps_grid[i]).collect();
        let er: Vec<Vec<f64>> = usable.iter().map(|&i| errors[i].clone()).collect();
        let lx: Vec<f64> = ex.iter().map(|e| e.ln()).collect();
        let ly: Vec<f64> = usable.iter().map(|&i| per_eps[i].mean.ln()).collect();
        let fit = ols(&lx, &ly);
        let boot = bootstrap_log_slope(&ex, &er, setup.bootstrap_resamples, config.seed ^ 0xB007);
        let se = if boot.len() >= 2 { variance(&boot).sqrt() } else { f64::NAN };
        (fit.slope, fit.slope_se, se)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    let distribution = (case == Case::II).then(|| MomentReport {
        ks_strictly_decreasing: moments.iter().all(|m| m.usable)
            && moments.windows(2).all(|w| w[1].ks_max < w[0].ks_max),
        per_eps: moments,
    });
    Ok(ErrorReport {
        case,
        eps_grid: eps_grid.to_vec(),
        kappa: config.kappa,
        rate_exponent: rate,
        per_eps,
        fitted_slope,
        slope_se,
        slope_lower: fitted_slope - 2.0 * slope_se,
        ols_slope_se,
        bootstrap_resamples: setup.bootstrap_resamples,
        distribution,
    })
}

/// Distributional comparison of the kernel modes at `T₀` against the
/// averaged amplitude SDE, for `σ_ε = ε` models.
pub fn moment_compare_case2(
    model: &ModelSpec,
    config: &SimConfig,
    eps_grid: &[f64],
    setup: &CampaignSetup,
) -> Result<MomentReport> {
    check_grid(eps_grid)?;
    check_case(model, Case::II)?;
    let sde = case2_reference_sde(model)?;
    let mut per_eps = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let cfg = config.with_epsilon(eps);
        cfg.validate_for(NoiseScaling::AdditiveEps1)?;
        let results = run_paths(model, Case::II, &sde, &cfg, setup)?;
        per_eps.push(moment_stats(&sde, &cfg, setup, &results)?);
    }
    Ok(MomentReport {
        ks_strictly_decreasing: per_eps.iter().all(|m| m.usable)
            && per_eps.windows(2).all(|w| w[1].ks_max < w[0].ks_max),
        per_eps,
    })
}

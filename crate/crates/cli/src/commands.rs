use amplitude_core::burgers::sin_x_scale;
use amplitude_core::derive::{derive_case1, derive_case2, AmplitudeSDE, Case2Spec, Sigmas};
use amplitude_core::experiments::{
    case2_reference_sde, ou_variance_test, run_error_scaling, stability_scan, Case, ErrorReport, OuReport,
    OuTestConfig, StabilityReport, DOMAIN_AMPLITUDE, DOMAIN_SPDE,
};
use amplitude_core::sim::{simulate_amplitude, simulate_spde, AmplitudeClock, NoiseSource};
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{FileRecord, Manifest, Outputs, RunRecord, SCHEMA_VERSION};
use crate::reference::{case1_deviation, case2_deviation, sigmas_rescaled, stability_threshold, Deviation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Derive,
    Simulate,
    Compare,
    Stability,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Derive => "derive",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::Stability => "stability",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<FileRecord>,
    pub warnings: Vec<String>,
}

/// Derived amplitude equation as written by `derive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeriveDoc {
    pub schema_version: u32,
    pub case: Case,
    pub model: ModelConfig,
    pub n_kernel: usize,
    pub n_modes: usize,
    /// In the coordinates of the model basis.
    pub amplitude_sde: AmplitudeSDE,
    /// Burgers only: the same SDE for the coefficient of `sin x`.
    pub sin_x: Option<AmplitudeSDE>,
    pub case2: Option<Case2Spec>,
    pub sigmas_sin_x: Option<Sigmas>,
    /// Burgers only: derived values against the published constants.
    pub published_deviation: Option<Vec<Deviation>>,
}

pub fn cmd_derive(cfg: &RunConfig) -> CliResult<DeriveDoc> {
    let model = cfg.model()?;
    let burgers = match &cfg.model {
        ModelConfig::Burgers { nu, alphas, .. } => Some((*nu, *alphas)),
        _ => None,
    };
    let s = sin_x_scale();
    let (sde, case2) = match cfg.case {
        Case::I => (derive_case1(&model)?, None),
        Case::II => {
            let (spec, _) = derive_case2(&model)?;
            (case2_reference_sde(&model)?, Some(spec))
        }
    };
    let sin_x = burgers.map(|_| sde.rescale(s)).transpose()?;
    let sigmas_sin_x = case2
        .as_ref()
        .and_then(|c| c.sigmas.as_ref())
        .filter(|_| burgers.is_some())
        .map(|sig| sigmas_rescaled(sig, s));
    let published_deviation = match (burgers, cfg.case) {
        (Some((nu, alphas)), Case::I) => Some(case1_deviation(sin_x.as_ref().expect("Burgers"), nu, alphas)),
        (Some((nu, alphas)), Case::II) => Some(case2_deviation(
            sigmas_sin_x.as_ref().expect("one-dimensional kernel"),
            nu,
            alphas[2],
        )),
        _ => None,
    };
    Ok(DeriveDoc {
        schema_version: SCHEMA_VERSION,
        case: cfg.case,
        model: cfg.model.clone(),
        n_kernel: model.n_kernel(),
        n_modes: model.n_modes(),
        amplitude_sde: sde,
        sin_x,
        case2,
        sigmas_sin_x,
        published_deviation,
    })
}

fn metadata(cfg: &RunConfig, path: u64) -> Vec<(&'static str, String)> {
    vec![
        ("case", format!("{:?}", cfg.case)),
        ("epsilon", cfg.sim.epsilon.to_string()),
        ("seed", cfg.sim.seed.to_string()),
        ("path", path.to_string()),
        ("kappa", cfg.sim.kappa.to_string()),
    ]
}

fn simulate(cfg: &RunConfig, out: &mut Outputs, warnings: &mut Vec<String>) -> CliResult<()> {
    let model = cfg.model()?;
    let setup = cfg.campaign()?;
    let sim = &cfg.sim;
    let eps = sim.epsilon;
    let u0 = setup.initial_field(&model, cfg.case, eps)?;
    let spde_noise = NoiseSource::with_domain(sim.seed, DOMAIN_SPDE, model.n_channels());
    let (sde, amp_noise, clock) = match cfg.case {
        Case::I => (
            derive_case1(&model)?,
            spde_noise.clone(),
            AmplitudeClock::Coupled(sim.fast_grid(model.lambda_max())?),
        ),
        Case::II => {
            let sde = case2_reference_sde(&model)?;
            let noise = NoiseSource::with_domain(sim.seed, DOMAIN_AMPLITUDE, sde.n_noise());
            let clock = AmplitudeClock::Direct {
                substeps: setup.amplitude_substeps,
            };
            (sde, noise, clock)
        }
    };
    let mut stopped = 0;
    for p in 0..sim.n_paths as u64 {
        let spde = simulate_spde(&model, sim, &spde_noise, p, &u0)?;
        let amp = simulate_amplitude(&sde, sim, &amp_noise, p, &setup.kernel0, clock)?;
        if let Some(t) = spde.stopped_at {
            stopped += 1;
            warnings.push(format!("path {p}: SPDE guard fired at T = {t}"));
        }
        if let Some(t) = amp.stopped_at {
            warnings.push(format!("path {p}: amplitude guard fired at T = {t}"));
        }
        let meta = metadata(cfg, p);
        out.write_with(&format!("paths/spde_{p:04}.csv"), |w| spde.write_csv(w, &meta))?;
        out.write_with(&format!("paths/amplitude_{p:04}.csv"), |w| amp.write_csv(w, &meta))?;
    }
    if stopped == sim.n_paths {
        warnings.push("every SPDE path stopped before T0".into());
    }
    Ok(())
}

fn compare(cfg: &RunConfig, out: &mut Outputs, warnings: &mut Vec<String>) -> CliResult<ErrorReport> {
    let model = cfg.model()?;
    if cfg.experiment.eps_grid.len() < 2 {
        return Err(CliError::Config("compare needs an eps_grid with at least two values".into()));
    }
    let report = run_error_scaling(&model, cfg.case, &cfg.sim, &cfg.experiment.eps_grid, &cfg.campaign()?)?;
    for s in &report.per_eps {
        if !s.usable {
            warnings.push(format!("eps {}: too few unstopped paths", s.eps));
        }
        if s.stopped.count > 0 {
            warnings.push(format!("eps {}: {} of {} paths stopped", s.eps, s.stopped.count, s.n_paths));
        }
    }
    if let Some(d) = &report.distribution {
        if !d.ks_strictly_decreasing {
            warnings.push("KS statistic is not strictly decreasing in eps".into());
        }
    }
    out.write_json("compare.json", &report)?;
    out.write_with("compare.csv", |w| report.write_csv(w))?;
    out.write_with("compare.dat", |w| report.write_dat(w))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityDoc {
    pub schema_version: u32,
    pub report: StabilityReport,
    /// `64 α₃² / (225 π³)` when `α₁ = 0`.
    pub reference_threshold: Option<f64>,
    pub relative_deviation: Option<f64>,
}

fn stability(cfg: &RunConfig, out: &mut Outputs) -> CliResult<StabilityDoc> {
    let ModelConfig::Burgers { alphas, .. } = &cfg.model else {
        return Err(CliError::Config("stability scans need a Burgers model".into()));
    };
    if cfg.case != Case::I {
        return Err(CliError::Config("stability scans use the Case I equation".into()));
    }
    let report = stability_scan(
        |nu| {
            let model = cfg
                .model_with_nu(Some(nu))
                .map_err(|e| amplitude_core::Error::Config(e.to_string()))?;
            derive_case1(&model)
        },
        &cfg.experiment.nu_grid,
        &cfg.lyapunov(),
    )?;
    let reference_threshold = (alphas[0] == 0.0).then(|| stability_threshold(alphas[2]));
    let relative_deviation = reference_threshold.map(|r| (report.threshold_estimate - r) / r);
    let doc = StabilityDoc {
        schema_version: SCHEMA_VERSION,
        report,
        reference_threshold,
        relative_deviation,
    };
    out.write_json("stability.json", &doc)?;
    out.write_with("stability.csv", |w| doc.report.write_csv(w))?;
    Ok(doc)
}

fn report(cfg: &RunConfig, out: &mut Outputs, warnings: &mut Vec<String>) -> CliResult<OuReport> {
    let manifest = Manifest::load_or_new(&cfg.output_dir)?;
    let bad = manifest.verify(&cfg.output_dir);
    if !bad.is_empty() {
        return Err(CliError::Integrity(format!("hash mismatch for {}", bad.join(", "))));
    }
    let model = cfg.model()?;
    let eps_values = if cfg.experiment.eps_grid.is_empty() {
        vec![cfg.sim.epsilon]
    } else {
        cfg.experiment.eps_grid.clone()
    };
    let ou = &cfg.experiment.ou;
    let ou_report = ou_variance_test(
        &model,
        &OuTestConfig {
            eps_values,
            n_samples: ou.n_samples,
            dt: ou.dt,
            seed: cfg.sim.seed,
            band: ou.band,
        },
    )?;
    if !ou_report.all_pass() {
        warnings.push("OU stationary variance outside its band".into());
    }
    out.write_json("ou.json", &ou_report)?;
    out.write_with("ou.csv", |w| ou_report.write_csv(w))?;
    let mut text = String::new();
    for (name, run) in &manifest.runs {
        text.push_str(&format!(
            "{name}: {} files, {} warnings, config {}\n",
            run.files.len(),
            run.warnings.len(),
            &run.config_sha256[..12]
        ));
    }
    text.push_str(&format!("ou: {}\n", if ou_report.all_pass() { "pass" } else { "fail" }));
    out.write("summary.txt", text.as_bytes())?;
    Ok(ou_report)
}

/// Runs a subcommand, writes its artifacts and updates the manifest.
pub fn run(command: Command, cfg: &RunConfig) -> CliResult<RunSummary> {
    let mut out = Outputs::new(&cfg.output_dir)?;
    let mut warnings = Vec::new();
    match command {
        Command::Derive => {
            let doc = cmd_derive(cfg)?;
            out.write_json("derive.json", &doc)?;
        }
        Command::Simulate => simulate(cfg, &mut out, &mut warnings)?,
        Command::Compare => {
            compare(cfg, &mut out, &mut warnings)?;
        }
        Command::Stability => {
            stability(cfg, &mut out)?;
        }
        Command::Report => {
            report(cfg, &mut out, &mut warnings)?;
        }
    }
    let config = cfg.to_toml()?;
    let mut manifest = Manifest::load_or_new(&cfg.output_dir)?;
    manifest.runs.insert(
        command.name().to_string(),
        RunRecord {
            config_sha256: cfg.content_hash()?,
            seed: cfg.sim.seed,
            config,
            files: out.files.clone(),
            warnings: warnings.clone(),
        },
    );
    manifest.save(&cfg.output_dir)?;
    Ok(RunSummary {
        files: out.files,
        warnings,
    })
}

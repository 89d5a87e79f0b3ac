//! Run configuration: one TOML file per run. Unknown keys are rejected and
//! every physical parameter is validated when the file is loaded.

use std::path::{Path, PathBuf};

use amplitude_core::burgers::{build_burgers_model, BurgersParams, BURGERS_CHANNELS};
use amplitude_core::experiments::{CampaignSetup, Case, LyapunovConfig};
use amplitude_core::sim::SimConfig;
use amplitude_core::spectral::{ModelParts, ModelSpec, SparseBilinear};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Relative paths are resolved against the config file's directory.
    pub output_dir: PathBuf,
    pub case: Case,
    pub model: ModelConfig,
    pub sim: SimConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Burgers {
        nu: f64,
        alphas: [f64; BURGERS_CHANNELS],
        n_modes: usize,
    },
    Spectral(SpectralModel),
    /// A JSON file holding a [`SpectralModel`].
    SpectralFile { path: PathBuf },
}

/// A generic Galerkin model. Mode and channel indices are one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralModel {
    pub n_kernel: usize,
    pub lambdas: Vec<f64>,
    /// Rows of `L`.
    pub linear: Vec<Vec<f64>>,
    /// `[i, j, k, value]` for `<B(e_i, e_j), e_k>`.
    pub bilinear: Vec<(usize, usize, usize, f64)>,
    pub alphas: Vec<f64>,
    /// `[channel][i][k]` of `<Ḡ'(0)(e_i) f_j, e_k>`.
    pub gprime: Vec<Vec<Vec<f64>>>,
    pub alpha_exp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub eps_grid: Vec<f64>,
    pub nu_grid: Vec<f64>,
    /// Rescaled kernel coefficients at `T = 0`; empty means zero.
    pub kernel0: Vec<f64>,
    /// Rescaled coefficients of every mode at `T = 0` (kernel entries are
    /// ignored); empty means zero.
    pub stable0: Vec<f64>,
    pub bootstrap_resamples: usize,
    pub reference_paths: usize,
    pub amplitude_substeps: usize,
    pub lyapunov: LyapunovSettings,
    pub ou: OuSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            eps_grid: Vec::new(),
            nu_grid: Vec::new(),
            kernel0: Vec::new(),
            stable0: Vec::new(),
            bootstrap_resamples: 200,
            reference_paths: 2000,
            amplitude_substeps: 10,
            lyapunov: LyapunovSettings::default(),
            ou: OuSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovSettings {
    pub t_end: f64,
    pub dt: f64,
    pub n_paths: usize,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        Self {
            t_end: 200.0,
            dt: 0.01,
            n_paths: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuSettings {
    pub n_samples: usize,
    pub dt: f64,
    /// Acceptance band in standard errors.
    pub band: f64,
}

impl Default for OuSettings {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            dt: 0.01,
            band: 3.0,
        }
    }
}

impl SpectralModel {
    pub fn build(&self, case: Case) -> CliResult<ModelSpec> {
        let n = self.lambdas.len();
        let bad = |m: String| CliError::Config(m);
        if self.linear.len() != n || self.linear.iter().any(|r| r.len() != n) {
            return Err(bad(format!("linear must be {n}x{n}")));
        }
        let one_based = |i: usize, what: &str| {
            if i == 0 || i > n {
                Err(bad(format!("{what} index {i} outside 1..={n}")))
            } else {
                Ok(i - 1)
            }
        };
        let mut entries = Vec::with_capacity(self.bilinear.len());
        for &(i, j, k, v) in &self.bilinear {
            entries.push((one_based(i, "bilinear")?, one_based(j, "bilinear")?, one_based(k, "bilinear")?, v));
        }
        if self.gprime.len() != self.alphas.len() {
            return Err(bad(format!(
                "gprime has {} channels but alphas has {}",
                self.gprime.len(),
                self.alphas.len()
            )));
        }
        let mut gprime = Vec::with_capacity(self.alphas.len() * n * n);
        for slab in &self.gprime {
            if slab.len() != n || slab.iter().any(|r| r.len() != n) {
                return Err(bad(format!("each gprime channel must be {n}x{n}")));
            }
            gprime.extend(slab.iter().flatten());
        }
        let linear = DMatrix::from_fn(n, n, |r, c| self.linear[r][c]);
        let model = ModelSpec::new(ModelParts {
            n_kernel: self.n_kernel,
            lambdas: self.lambdas.clone(),
            linear,
            bilinear: SparseBilinear::from_entries(n, entries)?,
            alphas: self.alphas.clone(),
            gprime,
            alpha_exp: self.alpha_exp,
            noise_scaling: case.scaling(),
        })
        .map_err(|e| bad(e.to_string()))?;
        Ok(model)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory and
    /// validates.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if let ModelConfig::SpectralFile { path } = &mut cfg.model {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Hash of the configuration with `output_dir` blanked, so identical
    /// runs written to different places share it.
    pub fn content_hash(&self) -> CliResult<String> {
        let blank = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        Ok(crate::manifest::sha256_hex(blank.to_toml()?.as_bytes()))
    }

    pub fn model(&self) -> CliResult<ModelSpec> {
        self.model_with_nu(None)
    }

    /// The model, with the Burgers `ν` overridden if given.
    pub fn model_with_nu(&self, nu_override: Option<f64>) -> CliResult<ModelSpec> {
        match &self.model {
            ModelConfig::Burgers { nu, alphas, n_modes } => Ok(build_burgers_model(&BurgersParams {
                nu: nu_override.unwrap_or(*nu),
                alphas: *alphas,
                n_modes: *n_modes,
                case: self.case.scaling(),
            })?),
            _ if nu_override.is_some() => Err(CliError::Config(
                "a nu override needs a Burgers model".into(),
            )),
            ModelConfig::Spectral(m) => m.build(self.case),
            ModelConfig::SpectralFile { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let m: SpectralModel = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                m.build(self.case)
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let model = self.model()?;
        self.sim.validate_for(self.case.scaling())?;
        if self.sim.seed > i64::MAX as u64 {
            return Err(CliError::Config("seed must fit a TOML integer (at most 2^63 - 1)".into()));
        }
        if self.case == Case::II {
            model.check_degenerate_noise_structure()?;
        }
        let e = &self.experiment;
        for (name, grid) in [("eps_grid", &e.eps_grid), ("nu_grid", &e.nu_grid)] {
            if grid.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config(format!("{name} has non-finite entries")));
            }
        }
        if e.eps_grid.iter().any(|&v| !(v > 0.0 && v <= 0.5)) {
            return Err(CliError::Config("eps_grid entries must lie in (0, 0.5]".into()));
        }
        if e.eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CliError::Config("eps_grid must be strictly decreasing".into()));
        }
        if e.nu_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("nu_grid must be strictly increasing".into()));
        }
        if !e.kernel0.is_empty() && e.kernel0.len() != model.n_kernel() {
            return Err(CliError::Config(format!(
                "kernel0 needs {} entries, got {}",
                model.n_kernel(),
                e.kernel0.len()
            )));
        }
        if !e.stable0.is_empty() && e.stable0.len() != model.n_modes() {
            return Err(CliError::Config(format!(
                "stable0 needs {} entries, got {}",
                model.n_modes(),
                e.stable0.len()
            )));
        }
        if e.amplitude_substeps == 0 {
            return Err(CliError::Config("amplitude_substeps must be positive".into()));
        }
        self.lyapunov().validate()?;
        if !(e.ou.dt > 0.0 && e.ou.band > 0.0 && e.ou.n_samples >= 10) {
            return Err(CliError::Config("ou needs dt > 0, band > 0 and n_samples >= 10".into()));
        }
        Ok(())
    }

    pub fn campaign(&self) -> CliResult<CampaignSetup> {
        let model = self.model()?;
        let e = &self.experiment;
        Ok(CampaignSetup {
            kernel0: if e.kernel0.is_empty() {
                vec![0.0; model.n_kernel()]
            } else {
                e.kernel0.clone()
            },
            stable0: e.stable0.clone(),
            bootstrap_resamples: e.bootstrap_resamples,
            reference_paths: e.reference_paths,
            amplitude_substeps: e.amplitude_substeps,
        })
    }

    pub fn lyapunov(&self) -> LyapunovConfig {
        let l = &self.experiment.lyapunov;
        LyapunovConfig {
            t_end: l.t_end,
            dt: l.dt,
            n_paths: l.n_paths,
            seed: self.sim.seed,
            bootstrap_resamples: self.experiment.bootstrap_resamples,
        }
    }
}

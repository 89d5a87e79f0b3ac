//! Truncated eigenbasis representation of the abstract model.
//!
//! A field `u = Σ γ_k e_k` is stored as its coefficient vector. The linear
//! operator `A` is diagonal in this basis (`A e_k = -λ_k e_k`), the first
//! `n` eigenvalues are exactly zero (the kernel, or dominant modes) and the
//! remaining ones are strictly positive (the stable modes).
//!
//! Indices are zero-based throughout: mode `k` in the usual one-based
//! numbering lives at index `k - 1`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Absolute tolerance used when checking structural zeros of the bilinear
/// tensor (kernel annihilation and the diagonal stable-mode condition).
pub const STRUCTURAL_ZERO_TOL: f64 = 1e-12;

/// Coefficients of a field over the full truncated basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralField(Vec<f64>);

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// The basis vector `e_{index+1}`.
    pub fn unit(len: usize, index: usize) -> Self {
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|c| c * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl From<Vec<f64>> for SpectralField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Coefficients over the kernel modes `e_1..e_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KernelVector(Vec<f64>);

impl KernelVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn unit(len: usize, index: usize) -> Self {
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl From<Vec<f64>> for KernelVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Which spectral subspace to keep in [`ModelSpec::project`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Kernel,
    Stable,
}

/// Scaling of the additive noise: `σ_ε = ε²` or `σ_ε = ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseScaling {
    /// Non-degenerate additive noise of order ε².
    AdditiveEps2,
    /// Degenerate additive noise of order ε acting on stable modes only.
    AdditiveEps1,
}

impl NoiseScaling {
    pub fn sigma(self, eps: f64) -> f64 {
        match self {
            NoiseScaling::AdditiveEps2 => eps * eps,
            NoiseScaling::AdditiveEps1 => eps,
        }
    }
}

/// One stored coefficient `B_{ijk} = <B(e_i, e_j), e_k>` with `i <= j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilinearEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

/// Coordinate-sparse symmetric bilinear tensor.
///
/// Only the canonical half `i <= j` is stored; symmetry in the first two
/// slots holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBilinear {
    n_modes: usize,
    entries: Vec<BilinearEntry>,
    by_pair: HashMap<(usize, usize), Vec<(usize, f64)>>,
}

impl SparseBilinear {
    /// Builds the tensor from `(i, j, k, value)` triples. Both orderings of a
    /// pair may be supplied as long as they agree; zero values are dropped.
    pub fn from_entries<I>(n_modes: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, usize, f64)>,
    {
        let mut map: HashMap<(usize, usize, usize), f64> = HashMap::new();
        for (i, j, k, value) in entries {
            if i >= n_modes || j >= n_modes || k >= n_modes {
                return Err(Error::InvalidModel(format!(
                    "bilinear index ({i}, {j}, {k}) outside {n_modes} modes"
                )));
            }
            if !value.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "bilinear entry ({i}, {j}, {k}) is not finite"
                )));
            }
            if value == 0.0 {
                continue;
            }
            let key = (i.min(j), i.max(j), k);
            match map.get(&key) {
                Some(&prev) if (prev - value).abs() > STRUCTURAL_ZERO_TOL * prev.abs().max(1.0) => {
                    return Err(Error::InvalidModel(format!(
                        "bilinear tensor not symmetric at ({i}, {j}, {k}): {prev} vs {value}"
                    )));
                }
                Some(_) => {}
                None => {
                    map.insert(key, value);
                }
            }
        }
        let mut entries: Vec<BilinearEntry> = map
            .into_iter()
            .map(|((i, j, k), value)| BilinearEntry { i, j, k, value })
            .collect();
        entries.sort_by_key(|e| (e.i, e.j, e.k));
        let mut by_pair: HashMap<(usize, usize), Vec<(usize, f64)>> = HashMap::new();
        for e in &entries {
            by_pair.entry((e.i, e.j)).or_default().push((e.k, e.value));
        }
        Ok(Self {
            n_modes,
            entries,
            by_pair,
        })
    }

    /// Evaluates `f(i, j, k)` for every `i <= j` and every `k`.
    pub fn from_fn(n_modes: usize, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let mut triples = Vec::new();
        for i in 0..n_modes {
            for j in i..n_modes {
                for k in 0..n_modes {
                    let v = f(i, j, k);
                    if v != 0.0 {
                        triples.push((i, j, k, v));
                    }
                }
            }
        }
        Self::from_entries(n_modes, triples)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn entries(&self) -> &[BilinearEntry] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.by_pair
            .get(&(i.min(j), i.max(j)))
            .and_then(|row| row.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v))
            .unwrap_or(0.0)
    }

    /// All `(k, B_{ijk})` with a nonzero value.
    pub fn fiber(&self, i: usize, j: usize) -> &[(usize, f64)] {
        self.by_pair
            .get(&(i.min(j), i.max(j)))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// `out = B(u, v)`.
    pub fn apply_into(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for e in &self.entries {
            let w = if e.i == e.j {
                u[e.i] * v[e.j]
            } else {
                u[e.i] * v[e.j] + u[e.j] * v[e.i]
            };
            out[e.k] += e.value * w;
        }
    }

    /// `out = B(u, u)`, slightly cheaper than [`Self::apply_into`].
    pub fn apply_square_into(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for e in &self.entries {
            let w = if e.i == e.j {
                u[e.i] * u[e.i]
            } else {
                2.0 * u[e.i] * u[e.j]
            };
            out[e.k] += e.value * w;
        }
    }
}

/// Raw ingredients of a [`ModelSpec`], validated by [`ModelSpec::new`].
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub n_kernel: usize,
    pub lambdas: Vec<f64>,
    pub linear: DMatrix<f64>,
    pub bilinear: SparseBilinear,
    /// Additive amplitudes `α_j`, one per noise channel `f_j`, with
    /// `G̃ f_j = α_j e_j`.
    pub alphas: Vec<f64>,
    /// `g[j][i][k] = <Ḡ'(0)(e_i) f_j, e_k>`, flattened channel-major.
    pub gprime: Vec<f64>,
    pub alpha_exp: f64,
    pub noise_scaling: NoiseScaling,
}

/// Immutable spectral model. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    n_kernel: usize,
    lambdas: Vec<f64>,
    linear: DMatrix<f64>,
    bilinear: SparseBilinear,
    alphas: Vec<f64>,
    gprime: Vec<f64>,
    alpha_exp: f64,
    noise_scaling: NoiseScaling,
}

impl ModelSpec {
    pub fn new(parts: ModelParts) -> Result<Self> {
        let ModelParts {
            n_kernel,
            lambdas,
            linear,
            bilinear,
            alphas,
            gprime,
            alpha_exp,
            noise_scaling,
        } = parts;
        let n_modes = lambdas.len();
        if n_kernel == 0 || n_kernel >= n_modes {
            return Err(Error::InvalidModel(format!(
                "kernel dimension {n_kernel} must satisfy 1 <= n < N_modes = {n_modes}"
            )));
        }
        for (k, &l) in lambdas.iter().enumerate() {
            if !l.is_finite() {
                return Err(Error::InvalidModel(format!("eigenvalue {} is not finite", k + 1)));
            }
            if k < n_kernel && l != 0.0 {
                return Err(Error::InvalidModel(format!(
                    "kernel eigenvalue {} must be exactly zero, got {l}",
                    k + 1
                )));
            }
            if k >= n_kernel && l <= 0.0 {
                return Err(Error::InvalidModel(format!(
                    "stable eigenvalue {} must be positive, got {l}",
                    k + 1
                )));
            }
            if k > 0 && l < lambdas[k - 1] {
                return Err(Error::InvalidModel("eigenvalues must be nondecreasing".into()));
            }
        }
        if linear.nrows() != n_modes || linear.ncols() != n_modes {
            return Err(Error::InvalidModel(format!(
                "linear drift must be {n_modes}x{n_modes}, got {}x{}",
                linear.nrows(),
                linear.ncols()
            )));
        }
        if linear.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("linear drift has non-finite entries".into()));
        }
        if bilinear.n_modes() != n_modes {
            return Err(Error::InvalidModel(format!(
                "bilinear tensor has {} modes, expected {n_modes}",
                bilinear.n_modes()
            )));
        }
        let n_channels = alphas.len();
        if n_channels > n_modes {
            return Err(Error::InvalidModel(format!(
                "{n_channels} noise channels exceed {n_modes} modes"
            )));
        }
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidModel("noise amplitudes must be finite".into()));
        }
        if gprime.len() != n_channels * n_modes * n_modes {
            return Err(Error::InvalidModel(format!(
                "multiplicative coupling has {} entries, expected {}",
                gprime.len(),
                n_channels * n_modes * n_modes
            )));
        }
        if gprime.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidModel("multiplicative coupling has non-finite entries".into()));
        }
        if !alpha_exp.is_finite() {
            return Err(Error::InvalidModel("norm index must be finite".into()));
        }
        // B_c(a, a) = 0 for every kernel a forces every B_{ijm} with
        // i, j, m in the kernel to vanish.
        for e in bilinear.entries() {
            if e.i < n_kernel && e.j < n_kernel && e.k < n_kernel && e.value.abs() > STRUCTURAL_ZERO_TOL {
                return Err(Error::InvalidModel(format!(
                    "kernel annihilation violated: B({}, {}, {}) = {}",
                    e.i + 1,
                    e.j + 1,
                    e.k + 1,
                    e.value
                )));
            }
        }
        Ok(Self {
            n_kernel,
            lambdas,
            linear,
            bilinear,
            alphas,
            gprime,
            alpha_exp,
            noise_scaling,
        })
    }

    pub fn n_kernel(&self) -> usize {
        self.n_kernel
    }

    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn n_channels(&self) -> usize {
        self.alphas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Spectral gap `ρ = λ_{n+1}`.
    pub fn rho(&self) -> f64 {
        self.lambdas[self.n_kernel]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.lambdas.last().expect("model has at least two modes")
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn bilinear(&self) -> &SparseBilinear {
        &self.bilinear
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `α_j`, zero for channels beyond the configured ones.
    pub fn alpha(&self, j: usize) -> f64 {
        self.alphas.get(j).copied().unwrap_or(0.0)
    }

    /// `<Ḡ'(0)(e_i) f_j, e_k>`.
    pub fn gprime(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.n_modes();
        self.gprime[(j * n + i) * n + k]
    }

    /// Row-major `N x N` slab `[i][k]` of the coupling for channel `j`.
    pub fn gprime_channel(&self, j: usize) -> &[f64] {
        let n = self.n_modes();
        &self.gprime[j * n * n..(j + 1) * n * n]
    }

    pub fn alpha_exp(&self) -> f64 {
        self.alpha_exp
    }

    pub fn noise_scaling(&self) -> NoiseScaling {
        self.noise_scaling
    }

    pub fn is_kernel(&self, k: usize) -> bool {
        k < self.n_kernel
    }

    /// Checks the extra structure needed by the degenerate-noise reduction:
    /// `B_c(e_k, e_k) = 0` for stable `k`, `L` commuting with the
    /// projections, and no additive noise on kernel modes.
    pub fn check_degenerate_noise_structure(&self) -> Result<()> {
        let n = self.n_kernel;
        for k in n..self.n_modes() {
            for m in 0..n {
                let b = self.bilinear.get(k, k, m);
                if b.abs() > STRUCTURAL_ZERO_TOL {
                    return Err(Error::InvalidModel(format!(
                        "B_c(e_{0}, e_{0}) has kernel component {b} on e_{1}",
                        k + 1,
                        m + 1
                    )));
                }
            }
        }
        for r in 0..self.n_modes() {
            for c in 0..self.n_modes() {
                if self.is_kernel(r) != self.is_kernel(c) && self.linear[(r, c)] != 0.0 {
                    return Err(Error::InvalidModel(
                        "linear drift does not commute with the kernel projection".into(),
                    ));
                }
            }
        }
        if let Some(j) = (0..n.min(self.n_channels())).find(|&j| self.alphas[j] != 0.0) {
            return Err(Error::InvalidModel(format!(
                "additive noise acts on kernel mode {}",
                j + 1
            )));
        }
        Ok(())
    }

    fn check_field(&self, field: &SpectralField) -> Result<()> {
        check_len(self.n_modes(), field.len())
    }

    fn check_kernel(&self, v: &KernelVector) -> Result<()> {
        check_len(self.n_kernel, v.len())
    }

    /// Keeps either the kernel or the stable coefficients.
    pub fn project(&self, field: &SpectralField, part: Part) -> Result<SpectralField> {
        self.check_field(field)?;
        let n = self.n_kernel;
        let coeffs = field
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, &c)| match part {
                Part::Kernel if k < n => c,
                Part::Stable if k >= n => c,
                _ => 0.0,
            })
            .collect();
        Ok(SpectralField(coeffs))
    }

    /// Kernel coefficients as a [`KernelVector`].
    pub fn kernel_part(&self, field: &SpectralField) -> Result<KernelVector> {
        self.check_field(field)?;
        Ok(KernelVector(field.coeffs()[..self.n_kernel].to_vec()))
    }

    /// Embeds kernel coefficients into a full field.
    pub fn embed_kernel(&self, v: &KernelVector) -> Result<SpectralField> {
        self.check_kernel(v)?;
        let mut out = vec![0.0; self.n_modes()];
        out[..self.n_kernel].copy_from_slice(v.coeffs());
        Ok(SpectralField(out))
    }

    /// `(λ_k + 1)^{α/2}` per mode; squared sums of weighted coefficients give
    /// the `H^α` norm.
    pub fn norm_weights(&self, alpha: f64) -> Vec<f64> {
        self.lambdas.iter().map(|l| (l + 1.0).powf(alpha / 2.0)).collect()
    }

    /// `H^α` norm `(Σ γ_k² (λ_k + 1)^α)^{1/2}`.
    pub fn h_alpha_norm(&self, field: &SpectralField, alpha: f64) -> Result<f64> {
        self.check_field(field)?;
        if !field.is_finite() {
            return Err(Error::BlowUp("field passed to the H^alpha norm".into()));
        }
        Ok(weighted_norm(field.coeffs(), &self.norm_weights(alpha)))
    }

    /// `B(u, v)`.
    pub fn eval_b(&self, u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
        self.check_field(u)?;
        self.check_field(v)?;
        let mut out = vec![0.0; self.n_modes()];
        self.bilinear.apply_into(u.coeffs(), v.coeffs(), &mut out);
        Ok(SpectralField(out))
    }

    /// `A_s^{-1}` on the stable coefficients of `field`: each stable
    /// coefficient is multiplied by `-1/λ_k`, kernel coefficients are dropped.
    pub fn stable_inverse(&self, field: &SpectralField) -> Result<SpectralField> {
        self.check_field(field)?;
        let mut out = vec![0.0; self.n_modes()];
        for k in self.n_kernel..self.n_modes() {
            let l = self.lambdas[k];
            if l <= 0.0 {
                return Err(Error::Singular(format!("stable eigenvalue {} is zero", k + 1)));
            }
            out[k] = -field.coeffs()[k] / l;
        }
        Ok(SpectralField(out))
    }

    /// `-B_c(u, A_s^{-1} B_s(v, w))` without symmetrization.
    fn f_unsymmetrized(&self, u: &KernelVector, v: &KernelVector, w: &KernelVector) -> Result<Vec<f64>> {
        let bvw = self.eval_b(&self.embed_kernel(v)?, &self.embed_kernel(w)?)?;
        let inv = self.stable_inverse(&bvw)?;
        let r = self.eval_b(&self.embed_kernel(u)?, &inv)?;
        Ok(r.coeffs()[..self.n_kernel].iter().map(|x| -x).collect())
    }

    /// The trilinear map `F(u, v, w) = -B_c(u, A_s^{-1} B_s(v, w))`,
    /// symmetrized over all orderings of its arguments.
    pub fn eval_f(&self, u: &KernelVector, v: &KernelVector, w: &KernelVector) -> Result<KernelVector> {
        self.check_kernel(u)?;
        self.check_kernel(v)?;
        self.check_kernel(w)?;
        // The raw form is already symmetric in its last two slots, so the
        // three cyclic choices of the first slot cover all six orderings.
        let a = self.f_unsymmetrized(u, v, w)?;
        let b = self.f_unsymmetrized(v, w, u)?;
        let c = self.f_unsymmetrized(w, u, v)?;
        Ok(KernelVector(
            a.iter().zip(&b).zip(&c).map(|((x, y), z)| (x + y + z) / 3.0).collect(),
        ))
    }

    /// `e^{At}` applied coefficient-wise.
    pub fn semigroup_step(&self, field: &SpectralField, t: f64) -> Result<SpectralField> {
        self.check_field(field)?;
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("semigroup time must be nonnegative, got {t}")));
        }
        Ok(SpectralField(
            field
                .coeffs()
                .iter()
                .zip(&self.lambdas)
                .map(|(c, l)| c * (-l * t).exp())
                .collect(),
        ))
    }
}

pub(crate) fn weighted_norm(coeffs: &[f64], weights: &[f64]) -> f64 {
    coeffs
        .iter()
        .zip(weights)
        .map(|(c, w)| {
            let x = c * w;
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

//! Reduced equations on the kernel: the amplitude SDE for `σ_ε = ε²` and the
//! averaged drift / diffusion form for `σ_ε = ε`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{KernelVector, ModelSpec};

/// Eigenvalues of a matrix passed to [`spd_sqrt`] above `-PSD_CLAMP` are
/// treated as zero.
pub const PSD_CLAMP: f64 = 1e-10;

/// How the diffusion columns of an [`AmplitudeSDE`] are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffusionForm {
    /// Column `j` is `diff_add[j] + diff_mult[j] y`, driven by its own
    /// Brownian motion.
    Channels,
    /// The columns only define the covariance
    /// `Σ(y) = Σ_j (a_j + M_j y)(a_j + M_j y)ᵀ`; the SDE is driven by
    /// `Σ(y)^{1/2} dW` with `dim` Brownian motions.
    SqrtCovariance,
}

/// Itô SDE `dy = [D y + C(y, y, y)] dT + diffusion` on the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSDE {
    pub dim: usize,
    /// Row-major `dim x dim`.
    pub drift_lin: Vec<Vec<f64>>,
    /// Flattened `[m][a][b][c]`, symmetric in `a, b, c`.
    pub drift_cubic: Vec<f64>,
    pub diff_add: Vec<Vec<f64>>,
    pub diff_mult: Vec<Vec<Vec<f64>>>,
    pub form: DiffusionForm,
}

impl AmplitudeSDE {
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        let bad = |what: &str| Err(Error::InvalidModel(format!("amplitude SDE: {what}")));
        if self.drift_lin.len() != d || self.drift_lin.iter().any(|r| r.len() != d) {
            return bad("linear drift has the wrong shape");
        }
        if self.drift_cubic.len() != d * d * d * d {
            return bad("cubic drift has the wrong shape");
        }
        if self.diff_add.len() != self.diff_mult.len() {
            return bad("additive and multiplicative channel counts differ");
        }
        if self.diff_add.iter().any(|a| a.len() != d)
            || self
                .diff_mult
                .iter()
                .any(|m| m.len() != d || m.iter().any(|r| r.len() != d))
        {
            return bad("diffusion channel has the wrong shape");
        }
        let all = self
            .drift_lin
            .iter()
            .flatten()
            .chain(&self.drift_cubic)
            .chain(self.diff_add.iter().flatten())
            .chain(self.diff_mult.iter().flatten().flatten());
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("non-finite coefficient");
        }
        Ok(())
    }

    /// Number of driving Brownian motions.
    pub fn n_noise(&self) -> usize {
        match self.form {
            DiffusionForm::Channels => self.diff_add.len(),
            DiffusionForm::SqrtCovariance => self.dim,
        }
    }

    pub fn cubic(&self, m: usize, a: usize, b: usize, c: usize) -> f64 {
        let d = self.dim;
        self.drift_cubic[((m * d + a) * d + b) * d + c]
    }

    pub fn drift(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for m in 0..d {
            let mut s: f64 = self.drift_lin[m].iter().zip(y).map(|(l, v)| l * v).sum();
            let slab = &self.drift_cubic[m * d * d * d..(m + 1) * d * d * d];
            for a in 0..d {
                for b in 0..d {
                    let yab = y[a] * y[b];
                    for c in 0..d {
                        s += slab[(a * d + b) * d + c] * yab * y[c];
                    }
                }
            }
            out[m] = s;
        }
        out
    }

    /// `a_j + M_j y` for every channel.
    pub fn channel_columns(&self, y: &[f64]) -> Vec<Vec<f64>> {
        self.diff_add
            .iter()
            .zip(&self.diff_mult)
            .map(|(a, m)| {
                a.iter()
                    .zip(m)
                    .map(|(ai, row)| ai + row.iter().zip(y).map(|(r, v)| r * v).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    /// Diffusion covariance `Σ_j c_j c_jᵀ`.
    pub fn covariance(&self, y: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let mut s = DMatrix::zeros(d, d);
        for c in self.channel_columns(y) {
            for r in 0..d {
                for k in 0..d {
                    s[(r, k)] += c[r] * c[k];
                }
            }
        }
        s
    }

    /// Diffusion matrix with one column per driving Brownian motion.
    pub fn diffusion(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        match self.form {
            DiffusionForm::Channels => {
                let cols = self.channel_columns(y);
                Ok(DMatrix::from_fn(self.dim, cols.len(), |r, j| cols[j][r]))
            }
            DiffusionForm::SqrtCovariance => spd_sqrt(&self.covariance(y)),
        }
    }

    /// Rewrites the SDE for `ỹ = s y`.
    pub fn rescale(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s != 0.0) {
            return Err(Error::Domain(format!("coordinate scale must be finite and nonzero, got {s}")));
        }
        Ok(Self {
            dim: self.dim,
            drift_lin: self.drift_lin.clone(),
            drift_cubic: self.drift_cubic.iter().map(|c| c / (s * s)).collect(),
            diff_add: self
                .diff_add
                .iter()
                .map(|a| a.iter().map(|v| v * s).collect())
                .collect(),
            diff_mult: self.diff_mult.clone(),
            form: self.form,
        })
    }

    /// `<C(x, x, x), x>`, the quartic part of the energy balance.
    pub fn cubic_energy(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for m in 0..d {
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        s += self.cubic(m, a, b, c) * x[m] * x[a] * x[b] * x[c];
                    }
                }
            }
        }
        s
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// Flattened `2F` tensor on the kernel.
fn cubic_tensor(model: &ModelSpec) -> Result<Vec<f64>> {
    let n = model.n_kernel();
    let mut out = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in a..n {
            for c in b..n {
                let f = model.eval_f(
                    &KernelVector::unit(n, a),
                    &KernelVector::unit(n, b),
                    &KernelVector::unit(n, c),
                )?;
                for m in 0..n {
                    let v = 2.0 * f.coeffs()[m];
                    for (x, y, z) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
                        out[((m * n + x) * n + y) * n + z] = v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Amplitude SDE for `σ_ε = ε²`:
/// `dx = [L_c x + 2F(x)] dT + [G̃_c + Ḡ'_c(0) x] dW̃`.
pub fn derive_case1(model: &ModelSpec) -> Result<AmplitudeSDE> {
    let n = model.n_kernel();
    let lin = model.linear().view((0, 0), (n, n)).into_owned();
    let mut diff_add = Vec::with_capacity(model.n_channels());
    let mut diff_mult = Vec::with_capacity(model.n_channels());
    for j in 0..model.n_channels() {
        let mut a = vec![0.0; n];
        if j < n {
            a[j] = model.alpha(j);
        }
        diff_add.push(a);
        diff_mult.push(
            (0..n)
                .map(|m| (0..n).map(|p| model.gprime(p, j, m)).collect())
                .collect(),
        );
    }
    let sde = AmplitudeSDE {
        dim: n,
        drift_lin: matrix_rows(&lin),
        drift_cubic: cubic_tensor(model)?,
        diff_add,
        diff_mult,
        form: DiffusionForm::Channels,
    };
    sde.validate()?;
    Ok(sde)
}

/// `A_s^{-1} G̃ f_j` coefficient on `e_j`, zero for kernel channels.
fn inv_additive(model: &ModelSpec, j: usize) -> Result<f64> {
    if model.is_kernel(j) {
        return Ok(0.0);
    }
    let l = model.lambdas()[j];
    if l <= 0.0 {
        return Err(Error::Singular(format!("zero eigenvalue on stable mode {}", j + 1)));
    }
    Ok(-model.alpha(j) / l)
}

/// Eigenvalue of `(I ⊗_s A_s)^{-1}` on the symmetric pair `e_i ⊗_s e_k`.
fn pair_inverse(model: &ModelSpec, i: usize, k: usize) -> Result<f64> {
    let s = model.lambdas()[i] + model.lambdas()[k];
    if s <= 0.0 {
        return Err(Error::Singular(format!("pair ({}, {}) has zero eigenvalue", i + 1, k + 1)));
    }
    Ok(-2.0 / s)
}

/// Stable channels with nonzero additive noise, with `λ_i > 0` checked.
fn forced_stable(model: &ModelSpec) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..model.n_channels() {
        if model.alpha(i) == 0.0 {
            continue;
        }
        if model.lambdas()[i] <= 0.0 {
            return Err(Error::Singular(format!(
                "additive noise on mode {} with zero eigenvalue",
                i + 1
            )));
        }
        out.push(i);
    }
    Ok(out)
}

/// Averaged linear drift `L̄` on the kernel for `σ_ε = ε`.
pub fn derive_lbar(model: &ModelSpec) -> Result<DMatrix<f64>> {
    model.check_degenerate_noise_structure()?;
    let n = model.n_kernel();
    let big_n = model.n_modes();
    let b = model.bilinear();
    let lam = model.lambdas();
    let forced = forced_stable(model)?;
    let mut out = model.linear().view((0, 0), (n, n)).into_owned();

    for m in 0..n {
        for p in 0..n {
            let mut corr = 0.0;
            for &i in &forced {
                let a2 = model.alpha(i).powi(2);
                let li = lam[i];
                // B_c(B_c(φ, e_i), e_i)
                let mut t2 = 0.0;
                for q in 0..n {
                    t2 += b.get(p, i, q) * b.get(q, i, m);
                }
                corr -= 2.0 * a2 / (li * li) * t2;
                let mut t3 = 0.0;
                let mut t5 = 0.0;
                for k in n..big_n {
                    // B_c(φ, A_s^{-1} B_s(e_i, e_i))
                    t3 += b.get(i, i, k) * (-1.0 / lam[k]) * b.get(p, k, m);
                    // B_c (I ⊗_s A_s)^{-1} (e_i ⊗_s B_s(φ, e_i))
                    t5 += b.get(p, i, k) * pair_inverse(model, i, k)? * b.get(i, k, m);
                }
                corr -= a2 / li * (t3 + t5);
            }
            for j in 0..model.n_channels() {
                let inv = inv_additive(model, j)?;
                if inv != 0.0 {
                    // B_c(Ḡ'_c(0)(φ) f_j, A_s^{-1} G̃ f_j)
                    let mut t4 = 0.0;
                    for q in 0..n {
                        t4 += model.gprime(p, j, q) * b.get(q, j, m);
                    }
                    corr -= 2.0 * inv * t4;
                }
                let alpha = model.alpha(j);
                if alpha != 0.0 {
                    // B_c (I ⊗_s A_s)^{-1} (e_j ⊗_s Ḡ'_s(0)(φ) f_j)
                    let mut t6 = 0.0;
                    for k in n..big_n {
                        let g = model.gprime(p, j, k);
                        if g != 0.0 {
                            t6 += g * pair_inverse(model, j, k)? * b.get(j, k, m);
                        }
                    }
                    corr -= alpha * t6;
                }
            }
            out[(m, p)] += corr;
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp("averaged drift".into()));
    }
    Ok(out)
}

/// Constant rank-one contribution `weight · w wᵀ` to `Σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaConstTerm {
    /// One-based stable mode `i` and channel `j` this term comes from.
    pub mode: usize,
    pub channel: usize,
    pub weight: f64,
    pub vector: Vec<f64>,
}

/// `Σ(φ) = Σ_j (V_j φ)(V_j φ)ᵀ + Σ_{ij} weight_{ij} w_{ij} w_{ij}ᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaForm {
    pub dim: usize,
    /// One row-major `dim x dim` matrix per channel.
    pub linear: Vec<Vec<Vec<f64>>>,
    pub constant: Vec<SigmaConstTerm>,
}

impl SigmaForm {
    pub fn eval(&self, phi: &[f64]) -> Result<DMatrix<f64>> {
        if phi.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: phi.len(),
            });
        }
        let d = self.dim;
        let mut s = DMatrix::zeros(d, d);
        for v in &self.linear {
            let col: Vec<f64> = v
                .iter()
                .map(|row| row.iter().zip(phi).map(|(a, b)| a * b).sum())
                .collect();
            for r in 0..d {
                for k in 0..d {
                    s[(r, k)] += col[r] * col[k];
                }
            }
        }
        for t in &self.constant {
            for r in 0..d {
                for k in 0..d {
                    s[(r, k)] += t.weight * t.vector[r] * t.vector[k];
                }
            }
        }
        Ok(s)
    }
}

pub fn derive_sigma_form(model: &ModelSpec) -> Result<SigmaForm> {
    model.check_degenerate_noise_structure()?;
    let n = model.n_kernel();
    let b = model.bilinear();
    let forced = forced_stable(model)?;
    let mut linear = Vec::with_capacity(model.n_channels());
    for j in 0..model.n_channels() {
        let inv = inv_additive(model, j)?;
        linear.push(
            (0..n)
                .map(|m| {
                    (0..n)
                        .map(|p| model.gprime(p, j, m) - 2.0 * inv * b.get(p, j, m))
                        .collect()
                })
                .collect(),
        );
    }
    let mut constant = Vec::new();
    for &i in &forced {
        if model.is_kernel(i) {
            continue;
        }
        let weight = model.alpha(i).powi(2) / (2.0 * model.lambdas()[i]);
        for j in 0..model.n_channels() {
            let aj = model.alpha(j);
            let pair = if aj != 0.0 { pair_inverse(model, i, j)? } else { 0.0 };
            let vector: Vec<f64> = (0..n)
                .map(|m| model.gprime(i, j, m) - aj * pair * b.get(i, j, m))
                .collect();
            if vector.iter().any(|v| *v != 0.0) {
                constant.push(SigmaConstTerm {
                    mode: i + 1,
                    channel: j + 1,
                    weight,
                    vector,
                });
            }
        }
    }
    Ok(SigmaForm {
        dim: n,
        linear,
        constant,
    })
}

/// One-dimensional reduced constants in `e_1` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigmas {
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub sigma4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case2Spec {
    pub lbar: Vec<Vec<f64>>,
    pub sigma_form: SigmaForm,
    pub sigmas: Option<Sigmas>,
}

/// Averaged amplitude SDE `dy = [L̄ y + 2F(y)] dT + Σ(y)^{1/2} dW` together
/// with its ingredients.
pub fn derive_case2(model: &ModelSpec) -> Result<(Case2Spec, AmplitudeSDE)> {
    let lbar = derive_lbar(model)?;
    let form = derive_sigma_form(model)?;
    let n = model.n_kernel();
    let mut diff_add = Vec::new();
    let mut diff_mult = Vec::new();
    for v in &form.linear {
        diff_add.push(vec![0.0; n]);
        diff_mult.push(v.clone());
    }
    for t in &form.constant {
        let s = t.weight.sqrt();
        diff_add.push(t.vector.iter().map(|v| v * s).collect());
        diff_mult.push(vec![vec![0.0; n]; n]);
    }
    let sigmas = if n == 1 { Some(sigmas_from(&lbar, &form, model)?) } else { None };
    let sde = AmplitudeSDE {
        dim: n,
        drift_lin: matrix_rows(&lbar),
        drift_cubic: cubic_tensor(model)?,
        diff_add,
        diff_mult,
        form: DiffusionForm::SqrtCovariance,
    };
    sde.validate()?;
    Ok((
        Case2Spec {
            lbar: matrix_rows(&lbar),
            sigma_form: form,
            sigmas,
        },
        sde,
    ))
}

fn sigmas_from(lbar: &DMatrix<f64>, form: &SigmaForm, model: &ModelSpec) -> Result<Sigmas> {
    let e = KernelVector::unit(1, 0);
    let f = model.eval_f(&e, &e, &e)?;
    Ok(Sigmas {
        sigma1: lbar[(0, 0)],
        sigma2: 2.0 * f.coeffs()[0],
        sigma3: form.linear.iter().map(|v| v[0][0] * v[0][0]).sum(),
        sigma4: form.constant.iter().map(|t| t.weight * t.vector[0] * t.vector[0]).sum(),
    })
}

/// Scalar reduction `dỹ = (σ₁ỹ + σ₂ỹ³) dT + (σ₃ỹ² + σ₄)^{1/2} dB`.
pub fn derive_case2_1d(model: &ModelSpec) -> Result<(Sigmas, AmplitudeSDE)> {
    if model.n_kernel() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: model.n_kernel(),
        });
    }
    let (spec, _) = derive_case2(model)?;
    let s = spec.sigmas.expect("one-dimensional kernel");
    let sde = AmplitudeSDE {
        dim: 1,
        drift_lin: vec![vec![s.sigma1]],
        drift_cubic: vec![s.sigma2],
        diff_add: vec![vec![0.0], vec![s.sigma4.sqrt()]],
        diff_mult: vec![vec![vec![s.sigma3.sqrt()]], vec![vec![0.0]]],
        form: DiffusionForm::SqrtCovariance,
    };
    sde.validate()?;
    Ok((s, sde))
}

/// Symmetric square root of a symmetric positive semidefinite matrix.
pub fn spd_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() {
        return Err(Error::Dimension {
            expected: s.nrows(),
            got: s.ncols(),
        });
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp("matrix square root".into()));
    }
    let scale = s.amax().max(1.0);
    if (s - s.transpose()).amax() > PSD_CLAMP * scale {
        return Err(Error::Precondition("matrix is not symmetric".into()));
    }
    if s.nrows() == 1 {
        let v = s[(0, 0)];
        if v < -PSD_CLAMP * scale {
            return Err(Error::NotPsd(v));
        }
        return Ok(DMatrix::from_element(1, 1, v.max(0.0).sqrt()));
    }
    let eig = s.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -PSD_CLAMP * scale {
        return Err(Error::NotPsd(min));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    let r = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::quadrature::integrate_unit;
use crate::error::{Error, Result};
use crate::linalg::{inv_spd, Mat};
use crate::ols::{target_from_moments, Dataset};

/// Absolute tolerance for every numerically integrated population moment.
pub const QUAD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// `X = (1, U_1, …, U_{p−1})`, `Y = Xᵀc + s·ε`.
    LinearHomoscedastic,
    /// `X = (1, U)`, `Y = U² + s·ε`.
    QuadraticMeanIid,
    /// `X = (1, U)`, `Y = 1 + U + s·(0.2 + |U − 1/2|)·ε`.
    HeteroscedasticIid,
    /// `x_i = (1, i/n)`, `Y_i = 1 + i/n + s·(0.1 + i/n)·ε_i`.
    FixedXHeteroscedastic,
    /// `x_i = (1, i/n)`, `Y_i = (i/n)² + s·(0.1 + i/n)·ε_i`.
    FixedXNonidenticalMean,
}

impl DgpKind {
    pub const ALL: [DgpKind; 5] = [
        DgpKind::LinearHomoscedastic,
        DgpKind::QuadraticMeanIid,
        DgpKind::HeteroscedasticIid,
        DgpKind::FixedXHeteroscedastic,
        DgpKind::FixedXNonidenticalMean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DgpKind::LinearHomoscedastic => "linear_homoscedastic",
            DgpKind::QuadraticMeanIid => "quadratic_mean_iid",
            DgpKind::HeteroscedasticIid => "heteroscedastic_iid",
            DgpKind::FixedXHeteroscedastic => "fixed_x_heteroscedastic",
            DgpKind::FixedXNonidenticalMean => "fixed_x_nonidentical_mean",
        }
    }

    pub fn is_fixed_design(self) -> bool {
        matches!(self, DgpKind::FixedXHeteroscedastic | DgpKind::FixedXNonidenticalMean)
    }
}

impl fmt::Display for DgpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DgpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown DGP '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dgp {
    pub kind: DgpKind,
    pub p: usize,
    /// Multiplies the noise term; zero gives a noiseless response.
    pub noise_scale: f64,
    /// True coefficients for `linear_homoscedastic` (all ones when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coef: Option<Vec<f64>>,
}

impl Dgp {
    /// The parameterization the shipped scenarios use.
    pub fn canonical(kind: DgpKind) -> Dgp {
        match kind {
            DgpKind::LinearHomoscedastic => Dgp { kind, p: 3, noise_scale: 1.0, coef: Some(vec![1.0, 2.0, -1.0]) },
            DgpKind::QuadraticMeanIid => Dgp { kind, p: 2, noise_scale: 0.1, coef: None },
            _ => Dgp { kind, p: 2, noise_scale: 1.0, coef: None },
        }
    }

    pub fn with_noise(mut self, noise_scale: f64) -> Dgp {
        self.noise_scale = noise_scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise scale must be finite and ≥ 0, got {}",
                self.noise_scale
            )));
        }
        match self.kind {
            DgpKind::LinearHomoscedastic => {
                if self.p == 0 {
                    return Err(Error::InvalidArgument("p must be at least 1".into()));
                }
                if let Some(c) = &self.coef {
                    if c.len() != self.p {
                        return Err(Error::DimensionMismatch(format!("{} coefficients for p = {}", c.len(), self.p)));
                    }
                    if c.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite("coefficients"));
                    }
                }
            }
            _ => {
                if self.p != 2 {
                    return Err(Error::InvalidArgument(format!("{} is defined for p = 2 only", self.kind)));
                }
                if self.coef.is_some() {
                    return Err(Error::InvalidArgument(format!("{} takes no coefficients", self.kind)));
                }
            }
        }
        Ok(())
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.coef.clone().unwrap_or_else(|| vec![1.0; self.p])
    }

    /// Conditional mean and standard deviation of `Y` at scalar covariate `u`
    /// (the second coordinate for the two-column kinds).
    fn mean_sd(&self, u: f64) -> (f64, f64) {
        let s = self.noise_scale;
        match self.kind {
            DgpKind::QuadraticMeanIid => (u * u, s),
            DgpKind::HeteroscedasticIid => (1.0 + u, s * (0.2 + (u - 0.5).abs())),
            DgpKind::FixedXHeteroscedastic => (1.0 + u, s * (0.1 + u)),
            DgpKind::FixedXNonidenticalMean => (u * u, s * (0.1 + u)),
            DgpKind::LinearHomoscedastic => unreachable!("multivariate kind"),
        }
    }

    fn design_point(i: usize, n: usize) -> f64 {
        (i + 1) as f64 / n as f64
    }
}

/// Population quantities at sample size `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PopulationTargets {
    pub beta_n: Vec<f64>,
    pub sigma_n: Mat,
    pub gamma_n: Vec<f64>,
    /// Covariance of `n^{-1/2} Σ S_i`.
    pub k_n: Mat,
    /// `n⁻¹ Σ E[raw_i raw_iᵀ]` with `raw_i = X_i (Y_i − X_iᵀβ_n)`.
    pub k_n_star: Mat,
    pub av_n: Mat,
    pub av_n_star: Mat,
    /// `E[raw_i]`, one row per observation (zero rows in iid kinds).
    pub score_means: Mat,
}

fn sandwich(bread: &Mat, meat: &Mat) -> Result<Mat> {
    Ok(bread.matmul(meat)?.matmul(bread)?.symmetrized())
}

fn finish(sigma: Mat, gamma: Vec<f64>, k_n: Mat, k_n_star: Mat, score_means: Mat) -> Result<PopulationTargets> {
    let beta_n = target_from_moments(&sigma, &gamma)?;
    let bread = inv_spd(&sigma)?;
    Ok(PopulationTargets {
        av_n: sandwich(&bread, &k_n)?,
        av_n_star: sandwich(&bread, &k_n_star)?,
        beta_n,
        sigma_n: sigma,
        gamma_n: gamma,
        k_n,
        k_n_star,
        score_means,
    })
}

fn linear_targets(dgp: &Dgp, n: usize) -> Result<PopulationTargets> {
    let p = dgp.p;
    // E[1] = 1, E[U] = 1/2, E[U²] = 1/3, E[U_j U_k] = 1/4
    let mut sigma = Mat::zeros(p, p);
    for j in 0..p {
        for k in 0..p {
            sigma[(j, k)] = match (j, k) {
                (0, 0) => 1.0,
                (0, _) | (_, 0) => 0.5,
                _ if j == k => 1.0 / 3.0,
                _ => 0.25,
            };
        }
    }
    let coef = dgp.coefficients();
    let gamma = sigma.matvec(&coef)?;
    let k = sigma.scale(dgp.noise_scale * dgp.noise_scale);
    finish(sigma, gamma, k.clone(), k, Mat::zeros(n, p))
}

fn iid_targets(dgp: &Dgp, n: usize) -> Result<PopulationTargets> {
    let x = |u: f64| [1.0, u];
    let mut sigma = Mat::zeros(2, 2);
    let mut gamma = vec![0.0; 2];
    for j in 0..2 {
        gamma[j] = integrate_unit(|u| x(u)[j] * dgp.mean_sd(u).0, QUAD_TOL)?;
        for k in j..2 {
            let v = integrate_unit(|u| x(u)[j] * x(u)[k], QUAD_TOL)?;
            sigma[(j, k)] = v;
            sigma[(k, j)] = v;
        }
    }
    let beta = target_from_moments(&sigma, &gamma)?;
    let resid = |u: f64| dgp.mean_sd(u).0 - beta[0] - beta[1] * u;
    let mut mean = [0.0; 2];
    let mut k_star = Mat::zeros(2, 2);
    for j in 0..2 {
        mean[j] = integrate_unit(|u| x(u)[j] * resid(u), QUAD_TOL)?;
        for k in j..2 {
            let v = integrate_unit(
                |u| {
                    let (_, sd) = dgp.mean_sd(u);
                    x(u)[j] * x(u)[k] * (resid(u).powi(2) + sd * sd)
                },
                QUAD_TOL,
            )?;
            k_star[(j, k)] = v;
            k_star[(k, j)] = v;
        }
    }
    let mut k = k_star.clone();
    for j in 0..2 {
        for l in 0..2 {
            k[(j, l)] -= mean[j] * mean[l];
        }
    }
    finish(sigma, gamma, k, k_star, Mat::zeros(n, 2))
}

fn fixed_targets(dgp: &Dgp, n: usize) -> Result<PopulationTargets> {
    let nf = n as f64;
    let mut sigma = Mat::zeros(2, 2);
    let mut gamma = vec![0.0; 2];
    for i in 0..n {
        let u = Dgp::design_point(i, n);
        let x = [1.0, u];
        let (mu, _) = dgp.mean_sd(u);
        for j in 0..2 {
            gamma[j] += x[j] * mu / nf;
            for k in 0..2 {
                sigma[(j, k)] += x[j] * x[k] / nf;
            }
        }
    }
    let beta = target_from_moments(&sigma, &gamma)?;
    let mut means = Mat::zeros(n, 2);
    let mut k = Mat::zeros(2, 2);
    let mut k_star = Mat::zeros(2, 2);
    for i in 0..n {
        let u = Dgp::design_point(i, n);
        let x = [1.0, u];
        let (mu, sd) = dgp.mean_sd(u);
        let r = mu - beta[0] - beta[1] * u;
        for j in 0..2 {
            means[(i, j)] = x[j] * r;
            for l in 0..2 {
                let var = x[j] * x[l] * sd * sd / nf;
                k[(j, l)] += var;
                k_star[(j, l)] += var + x[j] * x[l] * r * r / nf;
            }
        }
    }
    finish(sigma, gamma, k, k_star, means)
}

/// Exact population targets; iid kinds do not depend on `n` except through
/// the shape of `score_means`.
pub fn population_targets(dgp: &Dgp, n: usize) -> Result<PopulationTargets> {
    dgp.validate()?;
    if n == 0 {
        return Err(Error::EmptyData);
    }
    match dgp.kind {
        DgpKind::LinearHomoscedastic => linear_targets(dgp, n),
        DgpKind::QuadraticMeanIid | DgpKind::HeteroscedasticIid => iid_targets(dgp, n),
        DgpKind::FixedXHeteroscedastic | DgpKind::FixedXNonidenticalMean => fixed_targets(dgp, n),
    }
}

/// `E[X_i (Y_i − X_iᵀb)]` for each observation, at an arbitrary `b`.
pub fn score_means_at(dgp: &Dgp, n: usize, b: &[f64]) -> Result<Mat> {
    let t = population_targets(dgp, n)?;
    let p = dgp.p;
    if b.len() != p {
        return Err(Error::DimensionMismatch(format!("b has length {}, expected {p}", b.len())));
    }
    let mut out = Mat::zeros(n, p);
    if dgp.kind.is_fixed_design() {
        for i in 0..n {
            let u = Dgp::design_point(i, n);
            let r = dgp.mean_sd(u).0 - b[0] - b[1] * u;
            out[(i, 0)] = r;
            out[(i, 1)] = u * r;
        }
    } else {
        let sb = t.sigma_n.matvec(b)?;
        for i in 0..n {
            for j in 0..p {
                out[(i, j)] = t.gamma_n[j] - sb[j];
            }
        }
    }
    Ok(out)
}

/// Draws `n` observations. Fixed designs keep `x` identical across draws.
pub fn sample<R: Rng + ?Sized>(dgp: &Dgp, n: usize, rng: &mut R) -> Result<Dataset> {
    dgp.validate()?;
    let p = dgp.p;
    let mut x = Mat::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    match dgp.kind {
        DgpKind::LinearHomoscedastic => {
            let coef = dgp.coefficients();
            for i in 0..n {
                let row = x.row_mut(i);
                row[0] = 1.0;
                for v in row.iter_mut().skip(1) {
                    *v = rng.random::<f64>();
                }
                let eps: f64 = rng.sample(StandardNormal);
                y.push(crate::linalg::dot(row, &coef) + dgp.noise_scale * eps);
            }
        }
        kind => {
            for i in 0..n {
                let u = if kind.is_fixed_design() { Dgp::design_point(i, n) } else { rng.random::<f64>() };
                x[(i, 0)] = 1.0;
                x[(i, 1)] = u;
                let (mu, sd) = dgp.mean_sd(u);
                let eps: f64 = rng.sample(StandardNormal);
                y.push(mu + sd * eps);
            }
        }
    }
    Dataset::new(x, y)
}

//! Least squares fit in moment form.
//!
//! The fit is computed literally as `β̂ = Σ̂⁻¹ Γ̂` with `Σ̂ = n⁻¹ Σ x_i x_iᵀ` and
//! `Γ̂ = n⁻¹ Σ x_i y_i`. No intercept is ever added here; callers that want one
//! put a column of ones in the design.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Mat};

/// Observations: rows of `x` are covariate vectors, `y` the responses.
///
/// Covariates may be random or fixed; nothing here distinguishes the two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Mat,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Mat, y: Vec<f64>) -> Result<Self> {
        let d = Dataset { x, y };
        d.validate()?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() == 0 || self.p() == 0 {
            return Err(Error::EmptyData);
        }
        if self.y.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but response has {} entries",
                self.n(),
                self.y.len()
            )));
        }
        if !self.x.is_finite() {
            return Err(Error::NonFinite("design"));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response"));
        }
        Ok(())
    }
}

/// A fitted least squares problem and the moment statistics inference needs.
#[derive(Clone, Debug, Serialize)]
pub struct OlsFit {
    pub beta_hat: Vec<f64>,
    /// `Σ̂_n = n⁻¹ Σ x_i x_iᵀ`
    pub sigma_hat: Mat,
    /// `Γ̂_n = n⁻¹ Σ x_i y_i`
    pub gamma_hat: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Row `i` is the estimated score `Ŝ_i = x_i e_i`. Rows sum to zero.
    pub scores_hat: Mat,
    pub n: usize,
    pub p: usize,
    #[serde(skip)]
    sigma_chol: Option<Cholesky>,
}

impl OlsFit {
    /// Cholesky factor of `Σ̂_n`, kept from the fit.
    pub fn sigma_chol(&self) -> &Cholesky {
        self.sigma_chol.as_ref().expect("set by fit_ols")
    }

    pub fn sigma_hat_inv(&self) -> Mat {
        self.sigma_chol().inverse()
    }
}

/// Second moments `(Σ̂, Γ̂)` of a dataset.
pub fn moments(data: &Dataset) -> (Mat, Vec<f64>) {
    let n = data.n() as f64;
    let p = data.p();
    let sigma = data.x.gram().scale(1.0 / n);
    let mut gamma = vec![0.0; p];
    for (i, &yi) in data.y.iter().enumerate() {
        for (g, &xij) in gamma.iter_mut().zip(data.x.row(i)) {
            *g += xij * yi;
        }
    }
    gamma.iter_mut().for_each(|g| *g /= n);
    (sigma, gamma)
}

pub fn fit_ols(data: &Dataset) -> Result<OlsFit> {
    data.validate()?;
    let (sigma_hat, gamma_hat) = moments(data);
    let chol = Cholesky::new(&sigma_hat).map_err(|e| match e {
        Error::NotPositiveDefinite => Error::SingularDesign,
        other => other,
    })?;
    let beta_hat = chol.solve(&gamma_hat)?;
    let residuals = residuals_at(data, &beta_hat);
    let scores_hat = scores_from_residuals(&data.x, &residuals);
    Ok(OlsFit {
        beta_hat,
        sigma_hat,
        gamma_hat,
        residuals,
        scores_hat,
        n: data.n(),
        p: data.p(),
        sigma_chol: Some(chol),
    })
}

fn residuals_at(data: &Dataset, beta: &[f64]) -> Vec<f64> {
    data.y.iter().enumerate().map(|(i, &yi)| yi - dot(data.x.row(i), beta)).collect()
}

fn scores_from_residuals(x: &Mat, residuals: &[f64]) -> Mat {
    let mut s = x.clone();
    for (i, &e) in residuals.iter().enumerate() {
        s.row_mut(i).iter_mut().for_each(|v| *v *= e);
    }
    s
}

/// Uncentered scores `x_i (y_i - x_iᵀ β)` at an arbitrary `beta`, one row per observation.
pub fn scores_at(data: &Dataset, beta: &[f64]) -> Result<Mat> {
    if beta.len() != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {}, design has {} columns",
            beta.len(),
            data.p()
        )));
    }
    data.validate()?;
    Ok(scores_from_residuals(&data.x, &residuals_at(data, beta)))
}

/// Solves the population normal equations `Σ β = Γ`.
pub fn target_from_moments(sigma: &Mat, gamma: &[f64]) -> Result<Vec<f64>> {
    Cholesky::new(sigma)?.solve(gamma)
}

//! Covariance estimates for `√n (β̂_n − β_n)`.
//!
//! Under independent but non-identically distributed observations the true
//! score covariance `K_n` cannot be estimated consistently: the per-observation
//! score means are not identifiable from one draw each. What can be estimated
//! is the uncentered `K_n* ⪰ K_n`, through
//!
//! ```text
//! Ǩ_n = n⁻¹ Σ x_i x_iᵀ e_i²
//! ```
//!
//! so the sandwich `Σ̂⁻¹ Ǩ_n Σ̂⁻¹` is consistent under iid sampling and
//! conservative otherwise. This module only ever exposes `Ǩ_n`.
//!
//! The classical homoscedastic estimate `σ̂² Σ̂⁻¹` is kept as a comparator; it
//! is wrong whenever the conditional variance or the mean is not what the
//! linear model says.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::ols::OlsFit;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    /// `σ̂² Σ̂⁻¹` with `σ̂² = Σ e_i² / (n − p)`.
    Classical,
    /// `Σ̂⁻¹ Ǩ Σ̂⁻¹`.
    #[default]
    SandwichHc0,
    /// HC0 scaled by `n / (n − p)`.
    SandwichHc1,
}

impl VarianceMethod {
    pub fn is_sandwich(self) -> bool {
        !matches!(self, VarianceMethod::Classical)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VarianceEstimate {
    pub method: VarianceMethod,
    /// Estimated covariance of `√n (β̂_n − β_n)`.
    pub avar: Mat,
    /// `se[j] = sqrt(avar[j][j] / n)`.
    pub se: Vec<f64>,
    /// `Ǩ_n` for sandwich methods, `σ̂² Σ̂_n` for the classical one.
    pub meat: Mat,
    /// `max_j |β̂_j|`; standard errors below `1e-12` of this are treated as zero.
    #[serde(skip)]
    beta_scale: f64,
}

impl VarianceEstimate {
    fn new(method: VarianceMethod, avar: Mat, meat: Mat, fit: &OlsFit) -> Self {
        let se = avar.diag().iter().map(|v| (v.max(0.0) / fit.n as f64).sqrt()).collect();
        let beta_scale = fit.beta_hat.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
        VarianceEstimate { method, avar, se, meat, beta_scale }
    }

    pub fn p(&self) -> usize {
        self.avar.rows()
    }

    /// `sqrt(avar[j][j])`, failing on a degenerate coordinate.
    ///
    /// A standard error at rounding level relative to the coefficients (as left
    /// behind by an exact fit) counts as zero.
    pub fn studentizer(&self, j: usize) -> Result<f64> {
        if j >= self.p() {
            return Err(Error::BadCoordinate { coord: j, p: self.p() });
        }
        let v = self.avar[(j, j)];
        if !(v > 0.0) || self.se[j] <= 1e-12 * self.beta_scale {
            return Err(Error::ZeroVariance { coord: j });
        }
        Ok(v.sqrt())
    }

    /// Studentizers for every coordinate.
    pub fn studentizers(&self) -> Result<Vec<f64>> {
        (0..self.p()).map(|j| self.studentizer(j)).collect()
    }
}

/// `Ǩ_n = n⁻¹ Σ Ŝ_i Ŝ_iᵀ`, the conservative estimate of the score covariance.
pub fn k_check(fit: &OlsFit) -> Mat {
    fit.scores_hat.gram().scale(1.0 / fit.n as f64)
}

pub fn sandwich_avar(fit: &OlsFit, dof_correct: bool) -> Result<VarianceEstimate> {
    let (n, p) = (fit.n, fit.p);
    if dof_correct && n <= p {
        return Err(Error::DegenerateDof { n, p });
    }
    let meat = k_check(fit);
    let bread = fit.sigma_hat_inv();
    let mut avar = bread.matmul(&meat)?.matmul(&bread)?.symmetrized();
    let method = if dof_correct {
        avar = avar.scale(n as f64 / (n - p) as f64);
        VarianceMethod::SandwichHc1
    } else {
        VarianceMethod::SandwichHc0
    };
    Ok(VarianceEstimate::new(method, avar, meat, fit))
}

pub fn classical_avar(fit: &OlsFit) -> Result<VarianceEstimate> {
    let (n, p) = (fit.n, fit.p);
    if n <= p {
        return Err(Error::DegenerateDof { n, p });
    }
    let sigma2 = fit.residuals.iter().map(|e| e * e).sum::<f64>() / (n - p) as f64;
    let avar = fit.sigma_hat_inv().scale(sigma2);
    let meat = fit.sigma_hat.scale(sigma2);
    Ok(VarianceEstimate::new(VarianceMethod::Classical, avar, meat, fit))
}

/// Dispatches on `method`.
pub fn estimate(fit: &OlsFit, method: VarianceMethod) -> Result<VarianceEstimate> {
    match method {
        VarianceMethod::Classical => classical_avar(fit),
        VarianceMethod::SandwichHc0 => sandwich_avar(fit, false),
        VarianceMethod::SandwichHc1 => sandwich_avar(fit, true),
    }
}

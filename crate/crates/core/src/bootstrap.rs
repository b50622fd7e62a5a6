//! Score bootstraps and the confidence regions built from them.
//!
//! Both schemes perturb the estimated scores `Ŝ_i` rather than refitting on
//! resampled data, so no replicate ever needs a new (possibly singular) solve.
//!
//! * multiplier: `T* = n^{-1/2} Σ W_i Ŝ_i` with iid mean-zero, unit-variance `W_i`.
//!   Gaussian weights make `T*` exactly `N(0, Ǩ_n)` given the data.
//! * m-of-n resampling: `T* = m^{-1/2} Σ_{j≤m} Ŝ_{I_j}` with `I_j` uniform on `1..=n`.
//!
//! Regions for `β_n` come from inverting `T_n = √n Σ̂_n (β̂_n − β_n)`: each
//! replicate is mapped to `U* = Σ̂_n⁻¹ T*`, which plays the role of `√n (β̂_n − β_n)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::ols::OlsFit;
use crate::rng::stream_rng;
use crate::variance::{k_check, VarianceEstimate};

pub const DEFAULT_REPLICATES: usize = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDist {
    #[default]
    Gaussian,
    Rademacher,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMethod {
    #[default]
    Multiplier,
    ResampleMOfN,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub method: BootstrapMethod,
    pub b: usize,
    /// Resample size; `None` means `m = n`. Ignored by the multiplier bootstrap.
    pub m: Option<usize>,
    pub weights: WeightDist,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn multiplier(b: usize, weights: WeightDist, seed: u64) -> Self {
        BootstrapConfig { method: BootstrapMethod::Multiplier, b, m: None, weights, seed }
    }

    pub fn resample(b: usize, m: Option<usize>, seed: u64) -> Self {
        BootstrapConfig { method: BootstrapMethod::ResampleMOfN, b, m, weights: WeightDist::default(), seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BootstrapDraws {
    pub method: BootstrapMethod,
    pub b: usize,
    /// Resample size (resampling only).
    pub m: Option<usize>,
    /// Weight law (multiplier only).
    pub weights: Option<WeightDist>,
    /// Row `b` is `T*_b`.
    pub draws_t: Mat,
    /// Row `b` is `U*_b = Σ̂_n⁻¹ T*_b`.
    pub draws_u: Mat,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    Rectangle,
    Ellipsoid,
}

/// A confidence region for `β_n` centered at `β̂_n`.
///
/// Rectangle: `Π_j [β̂_j ± half_widths_j]`.
/// Ellipsoid: `{β : n (β̂ − β)ᵀ quad_form (β̂ − β) ≤ radius}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfidenceRegion {
    pub shape: RegionShape,
    pub level: f64,
    pub center: Vec<f64>,
    pub n: usize,
    /// Bootstrap quantile of the max-|t| statistic (rectangle only).
    pub critical_value: Option<f64>,
    pub half_widths: Option<Vec<f64>>,
    pub quad_form: Option<Mat>,
    pub radius: Option<f64>,
}

impl ConfidenceRegion {
    pub fn contains(&self, beta: &[f64]) -> bool {
        if beta.len() != self.center.len() {
            return false;
        }
        let d: Vec<f64> = self.center.iter().zip(beta).map(|(c, b)| c - b).collect();
        match self.shape {
            RegionShape::Rectangle => {
                let hw = self.half_widths.as_ref().expect("rectangle has half widths");
                d.iter().zip(hw).all(|(di, h)| di.abs() <= *h)
            }
            RegionShape::Ellipsoid => {
                let q = self.quad_form.as_ref().expect("ellipsoid has a quadratic form");
                let qd = q.matvec(&d).expect("dimensions match");
                let stat = self.n as f64 * crate::linalg::dot(&d, &qd);
                stat <= self.radius.expect("ellipsoid has a radius")
            }
        }
    }
}

pub fn gen_weights<R: Rng + ?Sized>(dist: WeightDist, n: usize, rng: &mut R) -> Vec<f64> {
    match dist {
        WeightDist::Gaussian => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        WeightDist::Rademacher => (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect(),
    }
}

/// `n^{-1/2} Σ W_i Ŝ_i`.
pub fn multiplier_draw(fit: &OlsFit, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != fit.n {
        return Err(Error::DimensionMismatch(format!("{} weights for {} observations", weights.len(), fit.n)));
    }
    let mut t = vec![0.0; fit.p];
    for (i, &w) in weights.iter().enumerate() {
        for (tj, &s) in t.iter_mut().zip(fit.scores_hat.row(i)) {
            *tj += w * s;
        }
    }
    let scale = 1.0 / (fit.n as f64).sqrt();
    t.iter_mut().for_each(|v| *v *= scale);
    Ok(t)
}

/// `m^{-1/2} Σ_{j≤m} Ŝ_{I_j}` with indices drawn uniformly with replacement.
pub fn resample_draw<R: Rng + ?Sized>(fit: &OlsFit, m: usize, rng: &mut R) -> Vec<f64> {
    let mut t = vec![0.0; fit.p];
    for _ in 0..m {
        let i = rng.random_range(0..fit.n);
        for (tj, &s) in t.iter_mut().zip(fit.scores_hat.row(i)) {
            *tj += s;
        }
    }
    let scale = 1.0 / (m as f64).sqrt();
    t.iter_mut().for_each(|v| *v *= scale);
    t
}

/// One replicate, drawn from the generator for `(config.seed, index)`.
pub fn replicate(fit: &OlsFit, config: &BootstrapConfig, index: usize) -> Result<Vec<f64>> {
    let mut rng = stream_rng(config.seed, index as u64);
    match config.method {
        BootstrapMethod::Multiplier => {
            let w = gen_weights(config.weights, fit.n, &mut rng);
            multiplier_draw(fit, &w)
        }
        BootstrapMethod::ResampleMOfN => Ok(resample_draw(fit, config.m.unwrap_or(fit.n), &mut rng)),
    }
}

/// Runs `config.b` replicates in parallel. Output does not depend on the
/// number of threads or on scheduling.
pub fn run_bootstrap(fit: &OlsFit, config: &BootstrapConfig) -> Result<BootstrapDraws> {
    if config.b == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one replicate".into()));
    }
    if config.m == Some(0) {
        return Err(Error::InvalidArgument("resample size m must be at least 1".into()));
    }
    let rows: Vec<Vec<f64>> =
        (0..config.b).into_par_iter().map(|k| replicate(fit, config, k)).collect::<Result<_>>()?;
    let chol = fit.sigma_chol();
    let mut draws_t = Mat::zeros(config.b, fit.p);
    let mut draws_u = Mat::zeros(config.b, fit.p);
    for (k, t) in rows.iter().enumerate() {
        draws_t.row_mut(k).copy_from_slice(t);
        draws_u.row_mut(k).copy_from_slice(&chol.solve(t)?);
    }
    let (m, weights) = match config.method {
        BootstrapMethod::Multiplier => (None, Some(config.weights)),
        BootstrapMethod::ResampleMOfN => (Some(config.m.unwrap_or(fit.n)), None),
    };
    Ok(BootstrapDraws { method: config.method, b: config.b, m, weights, draws_t, draws_u, seed: config.seed })
}

/// 1-based index `ceil((1 − α)(B + 1))` clamped to `[1, B]`.
///
/// The product is nudged down by a relative `1e-12` so that values like
/// `0.95 · 1000` that should be integers do not round up a whole step.
pub fn quantile_index(alpha: f64, b: usize) -> usize {
    let x = (1.0 - alpha) * (b as f64 + 1.0);
    let k = (x * (1.0 - 1e-12)).ceil();
    (k.max(1.0) as usize).min(b)
}

/// Order statistic at [`quantile_index`]; `values` must be non-empty.
pub fn bootstrap_quantile(values: &[f64], alpha: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[quantile_index(alpha, sorted.len()) - 1]
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// `max_j |U*_b(j)| / sqrt(avar[j][j])` for every replicate.
pub fn studentized_max_draws(draws: &BootstrapDraws, var: &VarianceEstimate) -> Result<Vec<f64>> {
    if var.p() != draws.draws_u.cols() {
        return Err(Error::DimensionMismatch("variance and draws disagree on p".into()));
    }
    let scale = var.studentizers()?;
    Ok((0..draws.b)
        .map(|k| draws.draws_u.row(k).iter().zip(&scale).fold(0.0_f64, |m, (u, s)| m.max(u.abs() / s)))
        .collect())
}

/// Simultaneous max-|t| rectangle calibrated on the bootstrap draws.
pub fn region_rectangle(
    fit: &OlsFit,
    draws: &BootstrapDraws,
    var: &VarianceEstimate,
    alpha: f64,
) -> Result<ConfidenceRegion> {
    check_alpha(alpha)?;
    if !var.method.is_sandwich() {
        return Err(Error::InvalidArgument("bootstrap rectangles need a sandwich variance estimate".into()));
    }
    let stats = studentized_max_draws(draws, var)?;
    let c = bootstrap_quantile(&stats, alpha);
    let n = fit.n as f64;
    let half_widths = var.studentizers()?.iter().map(|s| c * s / n.sqrt()).collect();
    Ok(ConfidenceRegion {
        shape: RegionShape::Rectangle,
        level: 1.0 - alpha,
        center: fit.beta_hat.clone(),
        n: fit.n,
        critical_value: Some(c),
        half_widths: Some(half_widths),
        quad_form: None,
        radius: None,
    })
}

/// Ellipsoid `{β : T_nᵀ Ǩ⁻¹ T_n ≤ r}` with `r` the bootstrap quantile of `T*ᵀ Ǩ⁻¹ T*`.
pub fn region_ellipsoid(fit: &OlsFit, draws: &BootstrapDraws, alpha: f64) -> Result<ConfidenceRegion> {
    check_alpha(alpha)?;
    let k = k_check(fit);
    let chol = Cholesky::new(&k)?;
    let stats: Vec<f64> = (0..draws.b)
        .map(|b| {
            let t = draws.draws_t.row(b);
            let z = chol.solve(t).expect("dimension checked");
            crate::linalg::dot(t, &z)
        })
        .collect();
    let radius = bootstrap_quantile(&stats, alpha);
    let quad_form = fit.sigma_hat.matmul(&chol.inverse())?.matmul(&fit.sigma_hat)?.symmetrized();
    Ok(ConfidenceRegion {
        shape: RegionShape::Ellipsoid,
        level: 1.0 - alpha,
        center: fit.beta_hat.clone(),
        n: fit.n,
        critical_value: None,
        half_widths: None,
        quad_form: Some(quad_form),
        radius: Some(radius),
    })
}

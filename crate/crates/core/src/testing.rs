//! Conservative tests for single coefficients and for the whole vector.
//!
//! With a sandwich variance the studentized coefficient is asymptotically
//! `N(0, AV_n(j,j) / AV*_n(j,j))`, whose variance is at most one and cannot be
//! estimated. Referring it to `N(0, 1)` therefore gives a test whose size is at
//! most nominal in the limit. Student-t references are heavier-tailed still.
//!
//! These guarantees are asymptotic; in small samples the tests can still over-reject.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::bootstrap::{studentized_max_draws, BootstrapDraws};
use crate::error::{Error, Result};
use crate::ols::OlsFit;
use crate::variance::VarianceEstimate;

/// Null distribution against which a statistic is referred.
#[derive(Clone, Copy, Debug)]
pub enum Reference<'a> {
    StdNormal,
    /// Student t with `n − p` degrees of freedom.
    StudentT,
    Bootstrap(&'a BootstrapDraws),
}

/// Serializable description of the reference that was used.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceKind {
    StdNormal,
    StudentT { df: usize },
    Bootstrap { b: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub reference: ReferenceKind,
    pub p_value: f64,
    /// Whether the test inherits the asymptotic conservativeness of the sandwich.
    pub conservative: bool,
    pub target_coord: Option<usize>,
    pub null_value: Vec<f64>,
}

fn two_sided_normal(stat: f64) -> f64 {
    (2.0 * Normal::standard().sf(stat.abs())).min(1.0)
}

fn two_sided_t(stat: f64, df: usize) -> f64 {
    let t = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    (2.0 * t.sf(stat.abs())).min(1.0)
}

fn student_df(fit: &OlsFit) -> Result<usize> {
    if fit.n <= fit.p {
        return Err(Error::DegenerateDof { n: fit.n, p: fit.p });
    }
    Ok(fit.n - fit.p)
}

/// `(1 + #{draws ≥ stat}) / (B + 1)`.
fn bootstrap_tail(stat: f64, draws: &[f64]) -> f64 {
    let exceed = draws.iter().filter(|&&d| d >= stat).count();
    (1 + exceed) as f64 / (draws.len() + 1) as f64
}

/// `√n (β̂_j − β0) / sqrt(avar[j][j])`.
pub fn t_statistic(fit: &OlsFit, var: &VarianceEstimate, j: usize, beta0: f64) -> Result<f64> {
    if j >= fit.p {
        return Err(Error::BadCoordinate { coord: j, p: fit.p });
    }
    let s = var.studentizer(j)?;
    Ok((fit.n as f64).sqrt() * (fit.beta_hat[j] - beta0) / s)
}

/// Two-sided test of `β_n(j) = beta0`.
pub fn t_test(
    fit: &OlsFit,
    var: &VarianceEstimate,
    j: usize,
    beta0: f64,
    reference: Reference<'_>,
) -> Result<TestResult> {
    let statistic = t_statistic(fit, var, j, beta0)?;
    let (reference, p_value) = match reference {
        Reference::StdNormal => (ReferenceKind::StdNormal, two_sided_normal(statistic)),
        Reference::StudentT => {
            let df = student_df(fit)?;
            (ReferenceKind::StudentT { df }, two_sided_t(statistic, df))
        }
        Reference::Bootstrap(draws) => {
            let s = var.studentizer(j)?;
            let stats: Vec<f64> = draws.draws_u.col(j).iter().map(|u| u.abs() / s).collect();
            (ReferenceKind::Bootstrap { b: draws.b }, bootstrap_tail(statistic.abs(), &stats))
        }
    };
    Ok(TestResult {
        statistic,
        reference,
        p_value,
        conservative: var.method.is_sandwich(),
        target_coord: Some(j),
        null_value: vec![beta0],
    })
}

/// Simultaneous test of `β_n = beta0` through `max_j |t_j|`.
///
/// The bootstrap reference is the calibrated one. Normal and t references fall
/// back to a Bonferroni bound `min(1, p · two-sided tail)`.
pub fn max_t_test(fit: &OlsFit, var: &VarianceEstimate, beta0: &[f64], reference: Reference<'_>) -> Result<TestResult> {
    if beta0.len() != fit.p {
        return Err(Error::DimensionMismatch(format!("null vector has length {}, expected {}", beta0.len(), fit.p)));
    }
    let statistic = (0..fit.p)
        .map(|j| t_statistic(fit, var, j, beta0[j]).map(f64::abs))
        .try_fold(0.0_f64, |m, t| t.map(|t| m.max(t)))?;
    let p = fit.p as f64;
    let (reference, p_value) = match reference {
        Reference::StdNormal => (ReferenceKind::StdNormal, (p * two_sided_normal(statistic)).min(1.0)),
        Reference::StudentT => {
            let df = student_df(fit)?;
            (ReferenceKind::StudentT { df }, (p * two_sided_t(statistic, df)).min(1.0))
        }
        Reference::Bootstrap(draws) => {
            let stats = studentized_max_draws(draws, var)?;
            (ReferenceKind::Bootstrap { b: draws.b }, bootstrap_tail(statistic, &stats))
        }
    };
    Ok(TestResult {
        statistic,
        reference,
        p_value,
        conservative: var.method.is_sandwich(),
        target_coord: None,
        null_value: beta0.to_vec(),
    })
}

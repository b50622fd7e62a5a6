use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::dgp::{population_targets, sample, score_means_at, Dgp, DgpKind, PopulationTargets};
use crate::bootstrap::{
    region_ellipsoid, region_rectangle, run_bootstrap, BootstrapConfig, BootstrapDraws, WeightDist, DEFAULT_REPLICATES,
};
use crate::diagnostics::influence_remainder;
use crate::error::{Error, Result};
use crate::linalg::{norm2, op_norm, sub_vec};
use crate::ols::{fit_ols, OlsFit};
use crate::rng::{derive_seed, stream_rng};
use crate::testing::{max_t_test, Reference};
use crate::variance::{classical_avar, estimate, k_check, VarianceMethod};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMethod {
    /// Per-coordinate `β̂_j ± z·se` with the homoscedastic standard error.
    ClassicalNormal,
    /// Per-coordinate `β̂_j ± z·se` with the sandwich standard error.
    SandwichNormal,
    BootstrapRectangle,
    BootstrapEllipsoid,
    /// Rejection of `β = β_n` by max-|t| against its bootstrap law.
    MaxTBootstrap,
    /// Rejection of `β = β_n` by max-|t| with the Bonferroni normal bound.
    MaxTNormal,
}

impl CoverageMethod {
    pub const ALL: [CoverageMethod; 6] = [
        CoverageMethod::ClassicalNormal,
        CoverageMethod::SandwichNormal,
        CoverageMethod::BootstrapRectangle,
        CoverageMethod::BootstrapEllipsoid,
        CoverageMethod::MaxTBootstrap,
        CoverageMethod::MaxTNormal,
    ];

    fn needs_bootstrap(self) -> bool {
        matches!(
            self,
            CoverageMethod::BootstrapRectangle | CoverageMethod::BootstrapEllipsoid | CoverageMethod::MaxTBootstrap
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Coverage,
    Rejection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub dgp: Dgp,
    pub n: usize,
    pub replications: usize,
    pub methods: Vec<CoverageMethod>,
    pub alpha: f64,
    /// Bootstrap replicates per replication.
    pub b: usize,
    pub weights: WeightDist,
    /// Variance used by every sandwich-based method.
    pub variance: VarianceMethod,
    pub seed: u64,
}

impl CoverageConfig {
    pub fn new(dgp: Dgp, n: usize, replications: usize, methods: Vec<CoverageMethod>, alpha: f64, seed: u64) -> Self {
        CoverageConfig {
            dgp,
            n,
            replications,
            methods,
            alpha,
            b: DEFAULT_REPLICATES,
            weights: WeightDist::Gaussian,
            variance: VarianceMethod::SandwichHc0,
            seed,
        }
    }
}

/// One line of a coverage table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub method: CoverageMethod,
    pub kind: RowKind,
    /// `None` for joint regions and simultaneous tests.
    pub coord: Option<usize>,
    pub proportion: f64,
    pub mc_se: f64,
    pub mean_half_width: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub scenario: DgpKind,
    pub dgp: Dgp,
    pub n: usize,
    pub replications: usize,
    /// Replications that produced a fit; proportions are over these.
    pub used: usize,
    /// Replications dropped for a singular design.
    pub excluded: usize,
    pub alpha: f64,
    pub b: usize,
    pub seed: u64,
    pub beta_n: Vec<f64>,
    pub median_err_norm: f64,
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn row(&self, method: CoverageMethod, coord: Option<usize>) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.method == method && r.coord == coord)
    }
}

enum Outcome {
    Coords { covered: Vec<bool>, half_widths: Vec<f64> },
    Joint { covered: bool, half_widths: Option<Vec<f64>> },
    Test { rejected: bool },
}

struct Replication {
    err_norm: f64,
    outcomes: Vec<Outcome>,
}

pub fn mc_se(c: f64, r: usize) -> f64 {
    (c * (1.0 - c) / r as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn normal_interval(fit: &OlsFit, se: &[f64], z: f64, beta: &[f64]) -> Outcome {
    let half_widths: Vec<f64> = se.iter().map(|s| z * s).collect();
    let covered = (0..fit.p).map(|j| (fit.beta_hat[j] - beta[j]).abs() <= half_widths[j]).collect();
    Outcome::Coords { covered, half_widths }
}

fn one_replication(config: &CoverageConfig, targets: &PopulationTargets, z: f64, r: usize) -> Result<Replication> {
    let sub = derive_seed(config.seed, r as u64);
    let data = sample(&config.dgp, config.n, &mut stream_rng(sub, 0))?;
    let fit = fit_ols(&data)?;
    let beta = &targets.beta_n;
    let var = estimate(&fit, config.variance)?;
    let draws: Option<BootstrapDraws> = if config.methods.iter().any(|m| m.needs_bootstrap()) {
        let bc = BootstrapConfig::multiplier(config.b, config.weights, derive_seed(sub, 1));
        Some(run_bootstrap(&fit, &bc)?)
    } else {
        None
    };
    let draws_ref = || draws.as_ref().expect("drawn when a bootstrap method is requested");
    let mut outcomes = Vec::with_capacity(config.methods.len());
    for method in &config.methods {
        let o = match method {
            CoverageMethod::ClassicalNormal => normal_interval(&fit, &classical_avar(&fit)?.se, z, beta),
            CoverageMethod::SandwichNormal => normal_interval(&fit, &var.se, z, beta),
            CoverageMethod::BootstrapRectangle => {
                let region = region_rectangle(&fit, draws_ref(), &var, config.alpha)?;
                Outcome::Joint { covered: region.contains(beta), half_widths: region.half_widths }
            }
            CoverageMethod::BootstrapEllipsoid => {
                let region = region_ellipsoid(&fit, draws_ref(), config.alpha)?;
                Outcome::Joint { covered: region.contains(beta), half_widths: None }
            }
            CoverageMethod::MaxTBootstrap => {
                let t = max_t_test(&fit, &var, beta, Reference::Bootstrap(draws_ref()))?;
                Outcome::Test { rejected: t.p_value <= config.alpha }
            }
            CoverageMethod::MaxTNormal => {
                let t = max_t_test(&fit, &var, beta, Reference::StdNormal)?;
                Outcome::Test { rejected: t.p_value <= config.alpha }
            }
        };
        outcomes.push(o);
    }
    Ok(Replication { err_norm: norm2(&sub_vec(&fit.beta_hat, beta)), outcomes })
}

fn proportion(flags: impl Iterator<Item = bool>, r: usize) -> (f64, f64) {
    let c = flags.filter(|&f| f).count() as f64 / r as f64;
    (c, mc_se(c, r))
}

fn mean(values: impl Iterator<Item = f64>, r: usize) -> f64 {
    values.sum::<f64>() / r as f64
}

fn aggregate(config: &CoverageConfig, reps: &[Replication]) -> Vec<CoverageRow> {
    let r = reps.len();
    let p = config.dgp.p;
    let mut rows = Vec::new();
    for (k, &method) in config.methods.iter().enumerate() {
        match &reps[0].outcomes[k] {
            Outcome::Coords { .. } => {
                for j in 0..p {
                    let pick = |rep: &Replication| match &rep.outcomes[k] {
                        Outcome::Coords { covered, half_widths } => (covered[j], half_widths[j]),
                        _ => unreachable!("outcome shape is fixed per method"),
                    };
                    let (c, se) = proportion(reps.iter().map(|x| pick(x).0), r);
                    rows.push(CoverageRow {
                        method,
                        kind: RowKind::Coverage,
                        coord: Some(j),
                        proportion: c,
                        mc_se: se,
                        mean_half_width: Some(mean(reps.iter().map(|x| pick(x).1), r)),
                    });
                }
            }
            Outcome::Joint { half_widths, .. } => {
                let covered = |rep: &Replication| match &rep.outcomes[k] {
                    Outcome::Joint { covered, .. } => *covered,
                    _ => unreachable!("outcome shape is fixed per method"),
                };
                let (c, se) = proportion(reps.iter().map(covered), r);
                rows.push(CoverageRow {
                    method,
                    kind: RowKind::Coverage,
                    coord: None,
                    proportion: c,
                    mc_se: se,
                    mean_half_width: None,
                });
                if half_widths.is_some() {
                    for j in 0..p {
                        let w = reps.iter().map(|rep| match &rep.outcomes[k] {
                            Outcome::Joint { half_widths: Some(h), .. } => h[j],
                            _ => unreachable!("outcome shape is fixed per method"),
                        });
                        rows.push(CoverageRow {
                            method,
                            kind: RowKind::Coverage,
                            coord: Some(j),
                            proportion: c,
                            mc_se: se,
                            mean_half_width: Some(mean(w, r)),
                        });
                    }
                }
            }
            Outcome::Test { .. } => {
                let rejected = |rep: &Replication| match &rep.outcomes[k] {
                    Outcome::Test { rejected } => *rejected,
                    _ => unreachable!("outcome shape is fixed per method"),
                };
                let (c, se) = proportion(reps.iter().map(rejected), r);
                rows.push(CoverageRow {
                    method,
                    kind: RowKind::Rejection,
                    coord: None,
                    proportion: c,
                    mc_se: se,
                    mean_half_width: None,
                });
            }
        }
    }
    rows
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Monte Carlo coverage and rejection rates. Replication `r` draws from
/// sub-seed `derive_seed(seed, r)`, so the report does not depend on threads.
pub fn run_coverage(config: &CoverageConfig) -> Result<CoverageReport> {
    if config.replications == 0 {
        return Err(Error::InvalidArgument("at least one replication is required".into()));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidArgument("no coverage methods requested".into()));
    }
    check_alpha(config.alpha)?;
    if !config.variance.is_sandwich() {
        return Err(Error::InvalidArgument(
            "coverage methods need a sandwich variance; the classical one is always included as its own method".into(),
        ));
    }
    let targets = population_targets(&config.dgp, config.n)?;
    let z = Normal::standard().inverse_cdf(1.0 - config.alpha / 2.0);

    let results: Vec<Result<Replication>> =
        (0..config.replications).into_par_iter().map(|r| one_replication(config, &targets, z, r)).collect();
    let mut reps = Vec::with_capacity(results.len());
    let mut excluded = 0;
    for res in results {
        match res {
            Ok(rep) => reps.push(rep),
            Err(Error::SingularDesign) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if reps.is_empty() {
        return Err(Error::SingularDesign);
    }
    let errs: Vec<f64> = reps.iter().map(|r| r.err_norm).collect();
    Ok(CoverageReport {
        scenario: config.dgp.kind,
        dgp: config.dgp.clone(),
        n: config.n,
        replications: config.replications,
        used: reps.len(),
        excluded,
        alpha: config.alpha,
        b: config.b,
        seed: config.seed,
        beta_n: targets.beta_n.clone(),
        median_err_norm: median(&errs),
        rows: aggregate(config, &reps),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub dgp: Dgp,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// When set, the remainder is evaluated at `β_n + offset` with score
    /// means recomputed there, as a negative control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_offset: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub used: usize,
    pub excluded: usize,
    /// Median of `‖β̂_n − β_n‖₂`.
    pub median_err_norm: f64,
    /// Median of `‖Ǩ_n − K_n*‖_op`.
    pub median_kcheck_dev: f64,
    /// Median of the linear-representation remainder.
    pub median_remainder: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub scenario: DgpKind,
    pub dgp: Dgp,
    pub replications: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_offset: Option<Vec<f64>>,
    pub rows: Vec<ConsistencyRow>,
    /// Least-squares slope of `log median_err_norm` on `log n`; absent with
    /// fewer than two sizes or a zero median.
    pub log_log_slope: Option<f64>,
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

struct ConsistencyDraw {
    err: f64,
    kdev: f64,
    remainder: f64,
}

pub fn run_consistency(config: &ConsistencyConfig) -> Result<ConsistencyReport> {
    if config.replications == 0 {
        return Err(Error::InvalidArgument("at least one replication is required".into()));
    }
    if config.n_grid.is_empty() || config.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n_grid must be non-empty and strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let targets = population_targets(&config.dgp, n)?;
        let (b_eval, means) = match &config.target_offset {
            Some(off) => {
                if off.len() != config.dgp.p {
                    return Err(Error::DimensionMismatch("target offset length differs from p".into()));
                }
                let b: Vec<f64> = targets.beta_n.iter().zip(off).map(|(a, o)| a + o).collect();
                let m = score_means_at(&config.dgp, n, &b)?;
                (b, m)
            }
            None => (targets.beta_n.clone(), targets.score_means.clone()),
        };
        let draws: Vec<Result<ConsistencyDraw>> = (0..config.replications)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream_rng(derive_seed(config.seed, n as u64), r as u64);
                let data = sample(&config.dgp, n, &mut rng)?;
                let fit = fit_ols(&data)?;
                Ok(ConsistencyDraw {
                    err: norm2(&sub_vec(&fit.beta_hat, &targets.beta_n)),
                    kdev: op_norm(&k_check(&fit).sub(&targets.k_n_star)?)?,
                    remainder: influence_remainder(&fit, &targets.sigma_n, &b_eval, Some(&means))?,
                })
            })
            .collect();
        let mut ok = Vec::with_capacity(draws.len());
        let mut excluded = 0;
        for d in draws {
            match d {
                Ok(d) => ok.push(d),
                Err(Error::SingularDesign) => excluded += 1,
                Err(e) => return Err(e),
            }
        }
        if ok.is_empty() {
            return Err(Error::SingularDesign);
        }
        let col = |f: fn(&ConsistencyDraw) -> f64| median(&ok.iter().map(f).collect::<Vec<_>>());
        rows.push(ConsistencyRow {
            n,
            used: ok.len(),
            excluded,
            median_err_norm: col(|d| d.err),
            median_kcheck_dev: col(|d| d.kdev),
            median_remainder: col(|d| d.remainder),
        });
    }
    let log_log_slope = if rows.len() >= 2 && rows.iter().all(|r| r.median_err_norm > 0.0) {
        let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.median_err_norm.ln()).collect();
        Some(ls_slope(&x, &y))
    } else {
        None
    };
    Ok(ConsistencyReport {
        scenario: config.dgp.kind,
        dgp: config.dgp.clone(),
        replications: config.replications,
        seed: config.seed,
        target_offset: config.target_offset.clone(),
        rows,
        log_log_slope,
    })
}

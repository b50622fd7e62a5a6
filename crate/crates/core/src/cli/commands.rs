use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::csvio::{read_csv, LabeledDataset};
use super::{Command, ErrorReport, ReferenceFlag, Report, RunConfig, VarianceFlag};
use crate::bootstrap::{region_ellipsoid, region_rectangle, run_bootstrap, BootstrapConfig, BootstrapDraws};
use crate::diagnostics::{det_inequality_check, influence_remainder};
use crate::error::{Error, Result};
use crate::ols::{fit_ols, OlsFit};
use crate::rng::{derive_seed, stream_rng};
use crate::simlab::{
    median, population_targets, run_consistency, run_coverage, sample, ConsistencyConfig, CoverageConfig,
    CoverageMethod, CoverageReport, Dgp, DgpKind,
};
use crate::testing::{max_t_test, t_test, Reference};
use crate::variance::{classical_avar, estimate, VarianceEstimate, VarianceMethod};

struct Outcome {
    results: Value,
    warnings: Vec<String>,
    coverage: Option<CoverageReport>,
}

impl Outcome {
    fn new(results: Value, warnings: Vec<String>) -> Self {
        Outcome { results, warnings, coverage: None }
    }
}

pub(super) fn failed(config: RunConfig, e: Error) -> Report {
    Report { command: config.command, config, results: None, warnings: Vec::new(), error: Some(ErrorReport::from(&e)) }
}

/// Dispatches one command. Errors are captured in the report, never raised.
pub fn run_command(config: RunConfig) -> Report {
    match dispatch(&config) {
        Ok(out) => {
            let report = Report {
                command: config.command,
                config: config.clone(),
                results: Some(out.results),
                warnings: out.warnings,
                error: None,
            };
            match write_outputs(&report, out.coverage.as_ref()) {
                Ok(()) => report,
                Err(e) => failed(config, e),
            }
        }
        Err(e) => failed(config, e),
    }
}

fn dispatch(config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    match config.command {
        Command::Fit => cmd_fit(config),
        Command::Test => cmd_test(config),
        Command::Bootstrap => cmd_bootstrap(config),
        Command::Simulate => cmd_simulate(config),
        Command::Check => cmd_check(config),
    }
}

fn require<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::InvalidArgument(format!("{flag} is required for this command")))
}

fn seed(config: &RunConfig) -> Result<u64> {
    config.seed.ok_or_else(|| Error::InvalidArgument("a seed is required".into()))
}

fn load(config: &RunConfig) -> Result<(LabeledDataset, OlsFit)> {
    let path = require(&config.data, "--data")?;
    let response = require(&config.response, "--response")?;
    let labeled = read_csv(path, response, config.add_intercept)?;
    let fit = fit_ols(&labeled.data)?;
    Ok((labeled, fit))
}

fn variance_block(var: &VarianceEstimate, flag: VarianceFlag) -> Value {
    json!({ "method": flag, "se": var.se, "avar": var.avar })
}

fn sandwich_flag(config: &RunConfig) -> VarianceFlag {
    match config.variance {
        VarianceFlag::Classical => VarianceFlag::Hc0,
        v => v,
    }
}

const CLASSICAL_WARNING: &str =
    "classical standard errors assume a correct linear mean and constant variance; prefer a sandwich estimate";

fn cmd_fit(config: &RunConfig) -> Result<Outcome> {
    let (labeled, fit) = load(config)?;
    let mut warnings = Vec::new();
    let classical = match classical_avar(&fit) {
        Ok(v) => Some(variance_block(&v, VarianceFlag::Classical)),
        Err(e @ Error::DegenerateDof { .. }) => {
            warnings.push(format!("classical variance unavailable: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let flag = sandwich_flag(config);
    let sandwich = estimate(&fit, flag.into())?;
    if config.variance == VarianceFlag::Classical {
        warnings.push(CLASSICAL_WARNING.into());
    }
    let results = json!({
        "columns": labeled.columns,
        "response": labeled.response,
        "n": fit.n,
        "p": fit.p,
        "beta_hat": fit.beta_hat,
        "classical": classical,
        "sandwich": variance_block(&sandwich, flag),
        "sigma_hat": fit.sigma_hat,
        "gamma_hat": fit.gamma_hat,
        "k_check": sandwich.meat,
    });
    Ok(Outcome::new(results, warnings))
}

fn bootstrap_config(config: &RunConfig) -> Result<BootstrapConfig> {
    let seed = seed(config)?;
    Ok(match config.m {
        Some(m) => BootstrapConfig::resample(config.b, Some(m), seed),
        None => BootstrapConfig::multiplier(config.b, config.weights.into(), seed),
    })
}

fn bootstrap_summary(draws: &BootstrapDraws) -> Value {
    json!({ "method": draws.method, "B": draws.b, "m": draws.m, "weights": draws.weights, "seed": draws.seed })
}

fn cmd_test(config: &RunConfig) -> Result<Outcome> {
    let (labeled, fit) = load(config)?;
    let method: VarianceMethod = config.variance.into();
    let var = estimate(&fit, method)?;
    let mut warnings = Vec::new();
    let draws = match config.reference {
        ReferenceFlag::Bootstrap => {
            if !method.is_sandwich() {
                return Err(Error::InvalidArgument("the bootstrap reference needs a sandwich variance".into()));
            }
            Some(run_bootstrap(&fit, &bootstrap_config(config)?)?)
        }
        _ => None,
    };
    let reference = match config.reference {
        ReferenceFlag::Normal => Reference::StdNormal,
        ReferenceFlag::T => Reference::StudentT,
        ReferenceFlag::Bootstrap => Reference::Bootstrap(draws.as_ref().expect("drawn above")),
    };
    let result = match config.coord {
        Some(j) => {
            let null = match &config.null {
                None => 0.0,
                Some(v) if v.len() == 1 => v[0],
                Some(v) => {
                    return Err(Error::InvalidArgument(format!("--null takes one value with --coord, got {}", v.len())))
                }
            };
            t_test(&fit, &var, j, null, reference)?
        }
        None => {
            let null = config.null.clone().unwrap_or_else(|| vec![0.0; fit.p]);
            if null.len() != fit.p {
                return Err(Error::InvalidArgument(format!("--null needs {} values, got {}", fit.p, null.len())));
            }
            if config.reference != ReferenceFlag::Bootstrap && fit.p > 1 {
                warnings.push("max-|t| with a normal or t reference uses a Bonferroni bound".into());
            }
            max_t_test(&fit, &var, &null, reference)?
        }
    };
    if method.is_sandwich() {
        warnings
            .push("sandwich standard errors are conservative when observations are not identically distributed".into());
    } else {
        warnings.push(CLASSICAL_WARNING.into());
    }
    let results = json!({
        "columns": labeled.columns,
        "beta_hat": fit.beta_hat,
        "variance": config.variance,
        "test": result,
        "reject": result.p_value <= config.alpha,
        "alpha": config.alpha,
        "bootstrap": draws.as_ref().map(bootstrap_summary),
    });
    Ok(Outcome::new(results, warnings))
}

fn cmd_bootstrap(config: &RunConfig) -> Result<Outcome> {
    let (labeled, fit) = load(config)?;
    let flag = sandwich_flag(config);
    let var = estimate(&fit, flag.into())?;
    let mut warnings = Vec::new();
    if config.variance == VarianceFlag::Classical {
        warnings.push("bootstrap regions always studentize with a sandwich variance; using hc0".into());
    }
    let draws = run_bootstrap(&fit, &bootstrap_config(config)?)?;
    let rectangle = region_rectangle(&fit, &draws, &var, config.alpha)?;
    let ellipsoid = match region_ellipsoid(&fit, &draws, config.alpha) {
        Ok(r) => Some(r),
        Err(Error::NotPositiveDefinite) => {
            warnings.push("estimated score covariance is singular; ellipsoid omitted".into());
            None
        }
        Err(e) => return Err(e),
    };
    let results = json!({
        "columns": labeled.columns,
        "beta_hat": fit.beta_hat,
        "variance": variance_block(&var, flag),
        "bootstrap": bootstrap_summary(&draws),
        "rectangle": rectangle,
        "ellipsoid": ellipsoid,
    });
    Ok(Outcome::new(results, warnings))
}

fn dgp(config: &RunConfig) -> Result<Dgp> {
    let kind: DgpKind = *require(&config.dgp, "--dgp")?;
    Ok(Dgp::canonical(kind))
}

fn cmd_simulate(config: &RunConfig) -> Result<Outcome> {
    let dgp = dgp(config)?;
    let n = *require(&config.n, "--n")?;
    let reps = *require(&config.reps, "--reps")?;
    let seed = seed(config)?;
    if config.variance == VarianceFlag::Classical {
        return Err(Error::InvalidArgument(
            "simulate always reports the classical intervals; --variance selects the sandwich (hc0 or hc1)".into(),
        ));
    }
    let mut cov = CoverageConfig::new(dgp.clone(), n, reps, CoverageMethod::ALL.to_vec(), config.alpha, seed);
    cov.b = config.b;
    cov.weights = config.weights.into();
    cov.variance = config.variance.into();
    let coverage = run_coverage(&cov)?;
    let consistency = match &config.n_grid {
        Some(grid) => Some(run_consistency(&ConsistencyConfig {
            dgp,
            n_grid: grid.clone(),
            replications: reps,
            seed: derive_seed(seed, u64::MAX),
            target_offset: None,
        })?),
        None => None,
    };
    let mut warnings = Vec::new();
    if coverage.excluded > 0 {
        warnings.push(format!("{} replications excluded for a singular design", coverage.excluded));
    }
    let results = json!({ "coverage": coverage, "consistency": consistency });
    Ok(Outcome { results, warnings, coverage: Some(coverage) })
}

fn cmd_check(config: &RunConfig) -> Result<Outcome> {
    let dgp = dgp(config)?;
    let n = *require(&config.n, "--n")?;
    let reps = config.reps.unwrap_or(1);
    let seed = seed(config)?;
    if reps == 0 {
        return Err(Error::InvalidArgument("--reps must be at least 1".into()));
    }
    let targets = population_targets(&dgp, n)?;
    let mut reports = Vec::with_capacity(reps);
    let mut remainders = Vec::with_capacity(reps);
    let mut excluded = 0;
    for r in 0..reps {
        let data = sample(&dgp, n, &mut stream_rng(seed, r as u64))?;
        let fit = match fit_ols(&data) {
            Ok(f) => f,
            Err(Error::SingularDesign) => {
                excluded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        reports.push(det_inequality_check(&fit.sigma_hat, &fit.gamma_hat, &targets.sigma_n, &targets.gamma_n)?);
        remainders.push(influence_remainder(&fit, &targets.sigma_n, &targets.beta_n, Some(&targets.score_means))?);
    }
    let violations = reports.iter().filter(|r| !r.consistent()).count();
    let mut warnings = Vec::new();
    if violations > 0 {
        warnings.push(format!("{violations} instances violate the deterministic bound beyond rounding slack"));
    }
    if excluded > 0 {
        warnings.push(format!("{excluded} replications excluded for a singular design"));
    }
    let results = json!({
        "dgp": dgp,
        "n": n,
        "beta_n": targets.beta_n,
        "instances": reports.len(),
        "excluded": excluded,
        "precondition_held": reports.iter().filter(|r| r.precondition_holds).count(),
        "violations": violations,
        "median_remainder": if remainders.is_empty() { None } else { Some(median(&remainders)) },
        "det_checks": reports,
        "remainders": remainders,
    });
    Ok(Outcome::new(results, warnings))
}

fn csv_path(out: &Path) -> PathBuf {
    out.with_extension("csv")
}

fn json_path(out: &Path) -> PathBuf {
    if out.extension().is_some_and(|e| e == "csv") {
        out.with_extension("json")
    } else {
        out.to_path_buf()
    }
}

/// Coverage rows flattened for plotting.
pub fn write_coverage_csv(path: &Path, report: &CoverageReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scenario", "n", "used", "method", "kind", "coord", "proportion", "mc_se", "mean_half_width"])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for row in &report.rows {
        let method = serde_json::to_value(row.method)?;
        let kind = serde_json::to_value(row.kind)?;
        w.write_record([
            report.scenario.name().to_string(),
            report.n.to_string(),
            report.used.to_string(),
            method.as_str().unwrap_or_default().to_string(),
            kind.as_str().unwrap_or_default().to_string(),
            opt(row.coord.map(|c| c.to_string())),
            row.proportion.to_string(),
            row.mc_se.to_string(),
            opt(row.mean_half_width.map(|h| h.to_string())),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_outputs(report: &Report, coverage: Option<&CoverageReport>) -> Result<()> {
    let Some(out) = &report.config.out else { return Ok(()) };
    std::fs::write(json_path(out), report.to_json())?;
    if let Some(c) = coverage {
        write_coverage_csv(&csv_path(out), c)?;
    }
    Ok(())
}

//! Checks that need the population quantities, so they only run where those
//! are known (the simulation lab, or the `check` subcommand).
//!
//! Two facts are verified:
//!
//! * the deterministic perturbation bound for the least squares solve: with
//!   `Λ = λ_min(Σ)`, `D = ‖Σ̂ − Σ‖_op` and `L = Σ⁻¹(Γ̂ − Σ̂β)`, whenever
//!   `D ≤ Λ/2`
//!
//!   ```text
//!   ‖L‖/2 ≤ ‖β̂ − β‖ ≤ 2‖L‖    and    ‖β̂ − β − L‖ ≤ 2 D ‖L‖ / Λ
//!   ```
//!
//! * the linear representation `√n(β̂ − β) = n^{-1/2} Σ Σ⁻¹ (S_i) + o_p(1)`,
//!   by reporting the size of the remainder.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eig_sym_extremes, norm2, op_norm, solve_spd, sub_vec, Cholesky, Mat};
use crate::ols::OlsFit;

/// Relative slack used when checking inequalities that hold exactly in real arithmetic.
pub const INEQUALITY_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetCheckReport {
    /// `Λ_n = λ_min(Σ_n)`
    pub lambda_n: f64,
    /// `‖Σ̂_n − Σ_n‖_op`
    pub d2n: f64,
    /// `d2n ≤ lambda_n / 2`
    pub precondition_holds: bool,
    /// `‖β̂_n − β_n‖₂`
    pub err_norm: f64,
    /// `‖Σ_n⁻¹(Γ̂_n − Σ̂_n β_n)‖₂`
    pub lin_term_norm: f64,
    /// `‖β̂_n − β_n − Σ_n⁻¹(Γ̂_n − Σ̂_n β_n)‖₂`
    pub remainder_norm: f64,
    /// Two-sided bound on `err_norm` in terms of `lin_term_norm`.
    pub sandwich_ok: bool,
    /// Bound on `remainder_norm`.
    pub remainder_ok: bool,
}

impl DetCheckReport {
    /// False only if the precondition holds and an inequality fails.
    pub fn consistent(&self) -> bool {
        !self.precondition_holds || (self.sandwich_ok && self.remainder_ok)
    }
}

fn within(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + INEQUALITY_SLACK * (1.0 + lhs.abs() + rhs.abs())
}

pub fn det_inequality_check(
    sigma_hat: &Mat,
    gamma_hat: &[f64],
    sigma_pop: &Mat,
    gamma_pop: &[f64],
) -> Result<DetCheckReport> {
    let p = sigma_pop.rows();
    if sigma_hat.rows() != p || gamma_hat.len() != p || gamma_pop.len() != p {
        return Err(Error::DimensionMismatch("population and sample moments disagree on p".into()));
    }
    let sigma_chol = Cholesky::new(sigma_pop)?;
    let beta_hat = solve_spd(sigma_hat, gamma_hat)?;
    let beta = sigma_chol.solve(gamma_pop)?;

    let (lambda_n, _) = eig_sym_extremes(sigma_pop)?;
    let d2n = op_norm(&sigma_hat.sub(sigma_pop)?)?;

    let centered = sub_vec(gamma_hat, &sigma_hat.matvec(&beta)?);
    let lin = sigma_chol.solve(&centered)?;
    let err = sub_vec(&beta_hat, &beta);
    let rem = sub_vec(&err, &lin);

    let err_norm = norm2(&err);
    let lin_term_norm = norm2(&lin);
    let remainder_norm = norm2(&rem);

    let sandwich_ok = within(0.5 * lin_term_norm, err_norm) && within(err_norm, 2.0 * lin_term_norm);
    let remainder_ok = within(remainder_norm, 2.0 * d2n * lin_term_norm / lambda_n);

    Ok(DetCheckReport {
        lambda_n,
        d2n,
        precondition_holds: d2n <= lambda_n / 2.0,
        err_norm,
        lin_term_norm,
        remainder_norm,
        sandwich_ok,
        remainder_ok,
    })
}

fn remainder_from_sum(
    beta_hat: &[f64],
    sigma_pop: &Mat,
    beta_pop: &[f64],
    centered_sum: &[f64],
    n: usize,
) -> Result<f64> {
    let rt = (n as f64).sqrt();
    let scaled: Vec<f64> = centered_sum.iter().map(|s| s / rt).collect();
    let linear = Cholesky::new(sigma_pop)?.solve(&scaled)?;
    let scaled_err: Vec<f64> = beta_hat.iter().zip(beta_pop).map(|(b, t)| rt * (b - t)).collect();
    Ok(norm2(&sub_vec(&scaled_err, &linear)))
}

fn check_means(score_means: Option<&Mat>, n: usize, p: usize) -> Result<()> {
    match score_means {
        Some(m) if m.rows() != n || m.cols() != p => {
            Err(Error::DimensionMismatch(format!("score means are {}x{}, expected {n}x{p}", m.rows(), m.cols())))
        }
        _ => Ok(()),
    }
}

fn column_sums(m: &Mat) -> Vec<f64> {
    let mut total = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        total.iter_mut().zip(m.row(i)).for_each(|(t, v)| *t += v);
    }
    total
}

/// `‖√n(β̂ − β) − n^{-1/2} Σ_i Σ⁻¹(raw_i − mean_i)‖₂` from explicit raw scores.
///
/// `score_means = None` stands for all-zero means.
pub fn influence_remainder_from_scores(
    beta_hat: &[f64],
    sigma_pop: &Mat,
    beta_pop: &[f64],
    raw_scores: &Mat,
    score_means: Option<&Mat>,
) -> Result<f64> {
    let (n, p) = (raw_scores.rows(), raw_scores.cols());
    if beta_hat.len() != p || beta_pop.len() != p || sigma_pop.rows() != p {
        return Err(Error::DimensionMismatch("score width disagrees with p".into()));
    }
    check_means(score_means, n, p)?;
    let mut sum = column_sums(raw_scores);
    if let Some(m) = score_means {
        sum = sub_vec(&sum, &column_sums(m));
    }
    remainder_from_sum(beta_hat, sigma_pop, beta_pop, &sum, n)
}

/// Remainder of the efficient linear representation of `√n(β̂_n − β_n)`.
///
/// Raw scores are `x_i (y_i − x_iᵀ beta_pop)`; `score_means` holds their
/// expectations (zero in iid designs, non-zero rows averaging to zero in fixed
/// designs with a misspecified mean). The fit carries everything needed:
/// `Σ_i raw_i = Σ_i Ŝ_i + n Σ̂ (β̂ − beta_pop)`.
pub fn influence_remainder(fit: &OlsFit, sigma_pop: &Mat, beta_pop: &[f64], score_means: Option<&Mat>) -> Result<f64> {
    let (n, p) = (fit.n, fit.p);
    if beta_pop.len() != p || sigma_pop.rows() != p || sigma_pop.cols() != p {
        return Err(Error::DimensionMismatch("population target disagrees with p".into()));
    }
    check_means(score_means, n, p)?;
    let shift = fit.sigma_hat.matvec(&sub_vec(&fit.beta_hat, beta_pop))?;
    let mut sum: Vec<f64> = column_sums(&fit.scores_hat).iter().zip(&shift).map(|(s, d)| s + n as f64 * d).collect();
    if let Some(m) = score_means {
        sum = sub_vec(&sum, &column_sums(m));
    }
    remainder_from_sum(&fit.beta_hat, sigma_pop, beta_pop, &sum, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{add_vec, SymEigen};
    use crate::ols::{fit_ols, scores_at, Dataset};
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(p: usize, rng: &mut ChaCha8Rng) -> Mat {
        let g = Mat::from_row_major(p, p, (0..p * p).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        g.gram().add(&Mat::identity(p).scale(0.1)).unwrap()
    }

    /// Symmetric perturbation with operator norm exactly `target`.
    fn perturbation(p: usize, target: f64, rng: &mut ChaCha8Rng) -> Mat {
        let g = Mat::from_row_major(p, p, (0..p * p).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let e = g.add(&g.transpose()).unwrap().scale(0.5);
        let norm = op_norm(&e).unwrap();
        e.scale(target / norm)
    }

    fn fuzz_case(p: usize, frac: f64, rng: &mut ChaCha8Rng) -> DetCheckReport {
        let sigma = random_spd(p, rng);
        let gamma: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (lambda, _) = eig_sym_extremes(&sigma).unwrap();
        let sigma_hat = sigma.add(&perturbation(p, frac * lambda / 2.0, rng)).unwrap();
        let gamma_hat = add_vec(&gamma, &(0..p).map(|_| rng.random_range(-0.5..0.5)).collect::<Vec<_>>());
        det_inequality_check(&sigma_hat, &gamma_hat, &sigma, &gamma).unwrap()
    }

    #[test]
    fn zero_perturbation() {
        let sigma = Mat::from_rows(&[[2.0, 0.5], [0.5, 1.0]]);
        let gamma = [1.0, -1.0];
        let r = det_inequality_check(&sigma, &gamma, &sigma, &gamma).unwrap();
        assert_eq!(r.d2n, 0.0);
        assert!(r.remainder_norm < 1e-15);
        assert!(r.err_norm < 1e-15);
        assert!(r.precondition_holds && r.sandwich_ok && r.remainder_ok);
    }

    #[test]
    fn exact_sigma_makes_linearization_exact() {
        let sigma = Mat::from_rows(&[[2.0, 0.5], [0.5, 1.0]]);
        let r = det_inequality_check(&sigma, &[1.5, 0.2], &sigma, &[1.0, -1.0]).unwrap();
        assert_eq!(r.d2n, 0.0);
        assert!(r.remainder_norm <= 1e-15 * r.err_norm.max(1.0));
        assert!((r.err_norm - r.lin_term_norm).abs() <= 1e-14 * r.err_norm);
        assert!(r.sandwich_ok && r.remainder_ok);
    }

    #[test]
    fn fuzz_within_precondition() {
        let mut rng = stream_rng(2024, 0);
        for k in 0..1000 {
            let p = [2, 5, 10][k % 3];
            let frac = rng.random_range(0.0..1.0);
            let r = fuzz_case(p, frac, &mut rng);
            assert!(r.precondition_holds, "{r:?}");
            assert!(r.sandwich_ok && r.remainder_ok, "case {k}: {r:?}");
        }
    }

    #[test]
    fn sharpness_probe_near_boundary() {
        let mut rng = stream_rng(77, 1);
        for k in 0..500 {
            let p = [2, 5, 10][k % 3];
            let r = fuzz_case(p, 0.999, &mut rng);
            assert!(r.precondition_holds);
            let ratio = r.err_norm / r.lin_term_norm;
            assert!((0.5 - 1e-9..=2.0 + 1e-9).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn outside_precondition_is_reported_not_asserted() {
        let sigma = Mat::identity(2);
        let sigma_hat = Mat::from_diag(&[1.0, 0.05]);
        let r = det_inequality_check(&sigma_hat, &[0.0, 1.0], &sigma, &[0.0, 0.0]).unwrap();
        assert!(!r.precondition_holds);
        // β̂ = (0, 20) while L = (0, 1): the upper bound fails and that is allowed
        assert!(!r.sandwich_ok);
        assert!(r.consistent());
    }

    #[test]
    fn rejects_non_spd_population() {
        let bad = Mat::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(
            det_inequality_check(&Mat::identity(2), &[0.0, 0.0], &bad, &[0.0, 0.0]),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn remainder_vanishes_when_design_moments_are_exact() {
        // rows (1, ±1) give Σ̂ = I exactly
        let x = Mat::from_rows(&[[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]]);
        let data = Dataset::new(x, vec![0.3, -1.2, 2.0, 0.7]).unwrap();
        let fit = fit_ols(&data).unwrap();
        let beta = [0.5, 0.25];
        let r = influence_remainder(&fit, &Mat::identity(2), &beta, None).unwrap();
        assert!(r < 1e-14, "{r}");
        let eigen = SymEigen::new(&fit.sigma_hat).unwrap();
        assert_eq!(eigen.values, vec![1.0, 1.0]);
    }

    #[test]
    fn fit_path_matches_explicit_scores() {
        let x = Mat::from_rows(&[[1.0, 0.1], [1.0, 0.7], [1.0, 0.4], [1.0, 0.95], [1.0, 0.2]]);
        let data = Dataset::new(x, vec![0.3, 1.2, 0.1, 2.0, -0.4]).unwrap();
        let fit = fit_ols(&data).unwrap();
        let sigma = Mat::from_rows(&[[1.0, 0.5], [0.5, 1.0 / 3.0]]);
        let beta = [-0.2, 1.1];
        let means = Mat::from_row_major(5, 2, (0..10).map(|k| 0.01 * k as f64).collect()).unwrap();
        let raw = scores_at(&data, &beta).unwrap();
        for m in [None, Some(&means)] {
            let a = influence_remainder(&fit, &sigma, &beta, m).unwrap();
            let b = influence_remainder_from_scores(&fit.beta_hat, &sigma, &beta, &raw, m).unwrap();
            assert!((a - b).abs() <= 1e-12 * (1.0 + a), "{a} vs {b}");
        }
    }

    #[test]
    fn remainder_dimension_errors() {
        let x = Mat::from_rows(&[[1.0, 1.0], [1.0, -1.0], [1.0, 0.0]]);
        let data = Dataset::new(x, vec![0.3, -1.2, 2.0]).unwrap();
        let fit = fit_ols(&data).unwrap();
        let bad_means = Mat::zeros(2, 2);
        assert!(matches!(
            influence_remainder(&fit, &Mat::identity(2), &[0.0, 0.0], Some(&bad_means)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(influence_remainder(&fit, &Mat::identity(2), &[0.0], None), Err(Error::DimensionMismatch(_))));
    }

    proptest! {
        #[test]
        fn fuzz_seeds(seed in 0u64..5000, pi in 0usize..3, frac in 0.0..1.0f64) {
            let mut rng = stream_rng(seed, 9);
            let r = fuzz_case([2, 5, 10][pi], frac, &mut rng);
            prop_assert!(r.precondition_holds);
            prop_assert!(r.sandwich_ok && r.remainder_ok);
        }

        #[test]
        fn centering_shift_cancels(seed in 0u64..1000, c0 in -5.0..5.0f64, c1 in -5.0..5.0f64) {
            let mut rng = stream_rng(seed, 3);
            let n = 30;
            let raw = Mat::from_row_major(n, 2, (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let means = Mat::from_row_major(n, 2, (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let sigma = random_spd(2, &mut rng);
            let beta_hat = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let beta = [0.1, -0.2];
            let base = influence_remainder_from_scores(&beta_hat, &sigma, &beta, &raw, Some(&means)).unwrap();

            let mut raw2 = raw.clone();
            let mut means2 = means.clone();
            for i in 0..n {
                raw2[(i, 0)] += c0;
                raw2[(i, 1)] += c1;
                means2[(i, 0)] += c0;
                means2[(i, 1)] += c1;
            }
            let shifted = influence_remainder_from_scores(&beta_hat, &sigma, &beta, &raw2, Some(&means2)).unwrap();
            prop_assert!((base - shifted).abs() <= 1e-9 * (1.0 + base));
        }
    }
}

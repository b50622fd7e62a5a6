//! Data-generating processes with known population targets, and the Monte
//! Carlo engine built on them.
//!
//! Random kinds draw `U ~ Uniform(0, 1)` covariates; their moments are
//! integrated numerically (or in closed form for the linear kind). Fixed kinds
//! use the design `x_i = (1, i/n)` and exact finite sums.

mod dgp;
mod engine;
mod quadrature;

pub use dgp::{population_targets, sample, score_means_at, Dgp, DgpKind, PopulationTargets, QUAD_TOL};
pub use engine::{
    ls_slope, mc_se, median, run_consistency, run_coverage, ConsistencyConfig, ConsistencyReport, ConsistencyRow,
    CoverageConfig, CoverageMethod, CoverageReport, CoverageRow, RowKind,
};
pub use quadrature::{integrate, integrate_unit};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::linalg::{inv_spd, op_norm, psd_leq, SymEigen};
    use crate::ols::moments;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;

    /// `E[U^k (U² − U + 1/6)²]` from the polynomial expansion.
    fn quad_resid_moment(k: i32) -> f64 {
        let k = k as f64;
        1.0 / (k + 5.0) - 2.0 / (k + 4.0) + (4.0 / 3.0) / (k + 3.0) - (1.0 / 3.0) / (k + 2.0) + (1.0 / 36.0) / (k + 1.0)
    }

    fn assert_mat_close(a: &crate::linalg::Mat, b: &[[f64; 2]; 2], tol: f64) {
        for j in 0..2 {
            for k in 0..2 {
                assert_abs_diff_eq!(a[(j, k)], b[j][k], epsilon = tol);
            }
        }
    }

    #[test]
    fn quadratic_targets_match_polynomial_moments() {
        let t = population_targets(&Dgp::canonical(DgpKind::QuadraticMeanIid), 10).unwrap();
        assert_abs_diff_eq!(t.beta_n[0], -1.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.beta_n[1], 1.0, epsilon = 1e-12);
        assert_mat_close(&t.sigma_n, &[[1.0, 0.5], [0.5, 1.0 / 3.0]], 1e-12);
        let s2 = 0.01;
        let want = |k: i32| quad_resid_moment(k) + s2 / (k as f64 + 1.0);
        assert_mat_close(&t.k_n_star, &[[want(0), want(1)], [want(1), want(2)]], 1e-10);
    }

    #[test]
    fn heteroscedastic_targets_match_folded_moments() {
        let t = population_targets(&Dgp::canonical(DgpKind::HeteroscedasticIid), 10).unwrap();
        assert_abs_diff_eq!(t.beta_n[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.beta_n[1], 1.0, epsilon = 1e-12);
        // (0.2 + a)² with a = |u − 1/2|: E a = 1/4, E ua = 1/8, E u²a = 3/32,
        // E a² = 1/12, E u a² = 1/24, E u² a² = 1/30
        let k00 = 0.04 + 0.4 / 4.0 + 1.0 / 12.0;
        let k01 = 0.04 / 2.0 + 0.4 / 8.0 + 1.0 / 24.0;
        let k11 = 0.04 / 3.0 + 0.4 * 3.0 / 32.0 + 1.0 / 30.0;
        assert_mat_close(&t.k_n_star, &[[k00, k01], [k01, k11]], 1e-10);
    }

    #[test]
    fn linear_kind_recovers_its_coefficients() {
        for n in [1, 50, 5000] {
            let dgp = Dgp::canonical(DgpKind::LinearHomoscedastic);
            let t = population_targets(&dgp, n).unwrap();
            for (a, b) in t.beta_n.iter().zip(dgp.coef.as_ref().unwrap()) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
            assert!(t.k_n.max_abs_diff(&t.sigma_n) < 1e-15);
        }
    }

    #[test]
    fn iid_kinds_have_equal_k() {
        for kind in [DgpKind::LinearHomoscedastic, DgpKind::QuadraticMeanIid, DgpKind::HeteroscedasticIid] {
            let t = population_targets(&Dgp::canonical(kind), 100).unwrap();
            assert!(t.k_n.max_abs_diff(&t.k_n_star) <= 1e-12, "{kind}");
            assert!(t.score_means.max_abs() == 0.0);
        }
    }

    #[test]
    fn structural_invariants_for_every_kind() {
        for kind in DgpKind::ALL {
            for n in [7, 500] {
                let t = population_targets(&Dgp::canonical(kind), n).unwrap();
                assert!(psd_leq(&t.k_n, &t.k_n_star, 1e-9).unwrap(), "{kind}");
                assert!(psd_leq(&t.av_n, &t.av_n_star, 1e-9).unwrap(), "{kind}");
                let sb = t.sigma_n.matvec(&t.beta_n).unwrap();
                for (a, b) in sb.iter().zip(&t.gamma_n) {
                    assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
                }
                let bread = inv_spd(&t.sigma_n).unwrap();
                let av = bread.matmul(&t.k_n).unwrap().matmul(&bread).unwrap();
                assert!(av.max_abs_diff(&t.av_n) < 1e-12);
            }
        }
    }

    #[test]
    fn nonidentical_means_are_strictly_conservative() {
        let n = 500;
        let t = population_targets(&Dgp::canonical(DgpKind::FixedXNonidenticalMean), n).unwrap();
        let avg: Vec<f64> = (0..2).map(|j| t.score_means.col(j).iter().sum::<f64>() / n as f64).collect();
        assert!(avg.iter().all(|a| a.abs() < 1e-10), "{avg:?}");
        assert!(t.score_means.max_abs() > 1e-3);
        let gap = SymEigen::new(&t.k_n_star.sub(&t.k_n).unwrap()).unwrap().min();
        assert!(gap > 0.0, "{gap}");
        // x_i = (1, u) with u = i/n
        let nf = n as f64;
        let s1: f64 = (1..=n).map(|i| i as f64 / nf).sum::<f64>() / nf;
        assert_abs_diff_eq!(t.sigma_n[(0, 1)], s1, epsilon = 1e-14);
    }

    #[test]
    fn correct_fixed_design_has_zero_means() {
        let t = population_targets(&Dgp::canonical(DgpKind::FixedXHeteroscedastic), 300).unwrap();
        assert!(t.score_means.max_abs() < 1e-12);
        assert!(t.k_n.max_abs_diff(&t.k_n_star) < 1e-12);
        assert_abs_diff_eq!(t.beta_n[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn score_means_at_target() {
        for kind in DgpKind::ALL {
            let dgp = Dgp::canonical(kind);
            let t = population_targets(&dgp, 40).unwrap();
            let m = score_means_at(&dgp, 40, &t.beta_n).unwrap();
            assert!(m.max_abs_diff(&t.score_means) < 1e-12, "{kind}");
        }
        let dgp = Dgp::canonical(DgpKind::QuadraticMeanIid);
        let m = score_means_at(&dgp, 3, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(m[(2, 1)], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn validation() {
        let mut d = Dgp::canonical(DgpKind::QuadraticMeanIid);
        d.p = 3;
        assert!(matches!(population_targets(&d, 10), Err(Error::InvalidArgument(_))));
        let d = Dgp::canonical(DgpKind::HeteroscedasticIid).with_noise(-1.0);
        assert!(matches!(d.validate(), Err(Error::InvalidArgument(_))));
        let mut d = Dgp::canonical(DgpKind::LinearHomoscedastic);
        d.coef = Some(vec![1.0]);
        assert!(matches!(d.validate(), Err(Error::DimensionMismatch(_))));
        assert!("nope".parse::<DgpKind>().is_err());
        for k in DgpKind::ALL {
            assert_eq!(k.name().parse::<DgpKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
    }

    #[test]
    fn sampling_is_reproducible_and_fixed_designs_stay_fixed() {
        for kind in DgpKind::ALL {
            let dgp = Dgp::canonical(kind);
            let a = sample(&dgp, 20, &mut stream_rng(5, 0)).unwrap();
            let b = sample(&dgp, 20, &mut stream_rng(5, 0)).unwrap();
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
            let c = sample(&dgp, 20, &mut stream_rng(6, 0)).unwrap();
            assert_ne!(a.y, c.y);
            assert_eq!(a.x == c.x, kind.is_fixed_design(), "{kind}");
        }
    }

    #[test]
    fn sample_moments_converge() {
        let dgp = Dgp::canonical(DgpKind::QuadraticMeanIid);
        let t = population_targets(&dgp, 1).unwrap();
        let data = sample(&dgp, 100_000, &mut stream_rng(11, 0)).unwrap();
        let (sigma_hat, _) = moments(&data);
        let dev = op_norm(&sigma_hat.sub(&t.sigma_n).unwrap()).unwrap();
        assert!(dev <= 0.02 * op_norm(&t.sigma_n).unwrap(), "{dev}");
    }

    fn small_config(methods: Vec<CoverageMethod>, reps: usize, alpha: f64) -> CoverageConfig {
        let mut c = CoverageConfig::new(Dgp::canonical(DgpKind::HeteroscedasticIid), 60, reps, methods, alpha, 99);
        c.b = 200;
        c
    }

    #[test]
    fn single_replication_gives_zero_or_one() {
        let r = run_coverage(&small_config(CoverageMethod::ALL.to_vec(), 1, 0.05)).unwrap();
        assert_eq!(r.used, 1);
        for row in &r.rows {
            assert!(row.proportion == 0.0 || row.proportion == 1.0);
            assert_eq!(row.mc_se, 0.0);
        }
    }

    #[test]
    fn tiny_alpha_covers_everything() {
        let r = run_coverage(&small_config(
            vec![CoverageMethod::SandwichNormal, CoverageMethod::ClassicalNormal],
            50,
            1e-9,
        ))
        .unwrap();
        assert!(r.rows.iter().all(|row| row.proportion == 1.0));
    }

    #[test]
    fn report_shape() {
        let r = run_coverage(&small_config(CoverageMethod::ALL.to_vec(), 5, 0.1)).unwrap();
        // two per-coordinate methods, rectangle joint + widths, ellipsoid, two tests
        assert_eq!(r.rows.len(), 2 + 2 + 3 + 1 + 1 + 1);
        assert!(r.row(CoverageMethod::BootstrapEllipsoid, None).is_some());
        assert_eq!(r.row(CoverageMethod::MaxTBootstrap, None).unwrap().kind, RowKind::Rejection);
        for row in &r.rows {
            assert!((0.0..=1.0).contains(&row.proportion));
            assert_abs_diff_eq!(row.mc_se, mc_se(row.proportion, r.used), epsilon = 1e-15);
        }
    }

    #[test]
    fn coverage_is_thread_independent() {
        let config = small_config(CoverageMethod::ALL.to_vec(), 24, 0.05);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_coverage(&config))
        };
        let a = serde_json::to_string(&run(1).unwrap()).unwrap();
        let b = serde_json::to_string(&run(4).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singular_replications_are_counted() {
        let config = small_config(vec![CoverageMethod::SandwichNormal], 3, 0.05);
        let config = CoverageConfig { n: 1, ..config };
        assert!(matches!(run_coverage(&config), Err(Error::SingularDesign)));
    }

    #[test]
    fn coverage_argument_checks() {
        assert!(run_coverage(&small_config(vec![], 3, 0.05)).is_err());
        assert!(run_coverage(&small_config(vec![CoverageMethod::SandwichNormal], 0, 0.05)).is_err());
        assert!(run_coverage(&small_config(vec![CoverageMethod::SandwichNormal], 3, 0.0)).is_err());
        let mut c = small_config(vec![CoverageMethod::SandwichNormal], 3, 0.05);
        c.variance = crate::variance::VarianceMethod::Classical;
        assert!(matches!(run_coverage(&c), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn noiseless_consistency() {
        let dgp = Dgp::canonical(DgpKind::LinearHomoscedastic).with_noise(0.0);
        let config =
            ConsistencyConfig { dgp, n_grid: vec![20, 40, 80], replications: 10, seed: 3, target_offset: None };
        let r = run_consistency(&config).unwrap();
        assert!(r.rows.iter().all(|row| row.median_err_norm < 1e-12 && row.median_remainder < 1e-10));
    }

    #[test]
    fn consistency_grid_checks() {
        let dgp = Dgp::canonical(DgpKind::QuadraticMeanIid);
        let bad = ConsistencyConfig { dgp, n_grid: vec![100, 50], replications: 2, seed: 0, target_offset: None };
        assert!(matches!(run_consistency(&bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn slope_and_median_helpers() {
        assert_abs_diff_eq!(ls_slope(&[0.0, 1.0, 2.0], &[1.0, 0.5, 0.0]), -0.5, epsilon = 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

//! Randomized invariants of the CDF, quantile extraction, bootstrap and
//! goodness-of-fit layers.

mod support;

use mvq::bootstrap::{percentile_ci, PercentileRequest};
use mvq::mesh::{evaluate_cdf_grid, upsample_grid, GridSpec};
use mvq::mvn::CdfAccuracy;
use mvq::normality::{ad_test_chisq, kolmogorov_cdf, ks_test_chisq};
use mvq::rng::rng_from_seed;
use mvq::stats::MvnModel;
use mvq::tolerance::{tolerance_factor, ToleranceSpec};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand_distr::{ChiSquared, Distribution};

#[test]
fn cdf_is_monotone_in_every_coordinate() {
    support::cdf_monotonicity(200).unwrap();
}

#[test]
fn diagonal_covariance_factorizes() {
    support::independence_factorization(200).unwrap();
}

#[test]
fn contour_vertices_dominate_univariate_quantiles() {
    support::contour_asymptote(12).unwrap();
}

#[test]
fn joint_probability_stays_within_bonferroni_bounds() {
    support::bonferroni_sandwich(200).unwrap();
}

#[test]
fn fixed_seeds_are_bit_exact() {
    support::determinism().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        rng_seed: RngSeed::Fixed(support::PROPERTY_SEED),
        ..ProptestConfig::default()
    })]

    #[test]
    fn percentiles_rise_with_level(values in prop::collection::vec(-10.0f64..10.0, 100..400)) {
        let request = PercentileRequest::new(vec![0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99]).unwrap();
        let out = percentile_ci(&values, &request).unwrap();
        prop_assert!(out.windows(2).all(|w| w[0] <= w[1]), "{out:?}");
    }

    #[test]
    fn kolmogorov_cdf_is_monotone(n in 1usize..400, d in 0.0f64..1.0, step in 0.0f64..0.2) {
        prop_assert!(kolmogorov_cdf(n, d + step) >= kolmogorov_cdf(n, d) - 1e-12);
    }
}

#[test]
fn tolerance_factor_orders_by_size_coverage_and_confidence() {
    let k = |beta, conf, n| tolerance_factor(&ToleranceSpec::new(beta, conf, n).unwrap()).unwrap();
    let ns = [5, 10, 50, 500];
    for beta in [0.9, 0.99] {
        for conf in [0.9, 0.95] {
            for w in ns.windows(2) {
                assert!(k(beta, conf, w[1]) < k(beta, conf, w[0]));
            }
            for n in ns {
                assert!(k(0.99, conf, n) > k(0.9, conf, n));
                assert!(k(beta, 0.95, n) > k(beta, 0.9, n));
            }
        }
    }
}

#[test]
fn upsampling_keeps_grids_monotone() {
    let acc = CdfAccuracy::default();
    for rho in [-0.9, 0.0, 0.9] {
        let model = MvnModel::standard_bivariate(rho).unwrap();
        let spec = GridSpec::new(2, -4.0, 4.0, 0.1).unwrap();
        let grid = evaluate_cdf_grid(&model, &spec, &acc).unwrap();
        let fine = upsample_grid(&grid, 2).unwrap();
        assert!(fine.max_monotonicity_violation() <= 1e-9, "rho {rho}");
    }
}

/// Under the null, p-values are uniform: a KS test of 200 p-values against
/// U(0, 1) must not reject at 1%.
fn assert_uniform(mut p: Vec<f64>, label: &str) {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let d = p.iter().enumerate().map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n)).fold(0.0, f64::max);
    let sf = 1.0 - kolmogorov_cdf(p.len(), d);
    assert!(sf > 0.01, "{label}: D = {d}, p = {sf}");
}

#[test]
fn goodness_of_fit_p_values_are_calibrated() {
    let chi = ChiSquared::new(3.0).unwrap();
    let mut rng = rng_from_seed(2024);
    let (mut ad, mut ks) = (Vec::new(), Vec::new());
    for _ in 0..200 {
        let d: Vec<f64> = (0..10_000).map(|_| chi.sample(&mut rng)).collect();
        ad.push(ad_test_chisq(&d, 3).unwrap().p_value);
        ks.push(ks_test_chisq(&d, 3).unwrap().p_value);
    }
    assert_uniform(ad, "anderson-darling");
    assert_uniform(ks, "kolmogorov-smirnov");
}

//! Property checks shared by the property tests and the acceptance run.
//! Each check drives a proptest runner and reports the first failure.

#![allow(dead_code)]

use mvq::algorithms::algorithm1_joint_tau_uq;
use mvq::bootstrap::{BootstrapConfig, CiMethod, PercentileRequest};
use mvq::fixtures::fixture_data;
use mvq::mesh::{evaluate_cdf_grid, extract_quantile, GridSpec};
use mvq::mvn::{
    cvine_random_correlation, mvn_cdf, mvn_sample, norm_cdf, normal_quantile, CdfAccuracy, CorrelationMatrix,
};
use mvq::quantile::{bonferroni_bounds, joint_quantile_probability};
use mvq::simulation::{run_study, Study, StudyConfig};
use mvq::stats::MvnModel;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};

pub type Check = std::result::Result<(), String>;

pub const PROPERTY_SEED: u64 = 20_240_611;

/// Looser than the library default so four-variate quasi-Monte Carlo
/// stays within its evaluation budget; tolerances below scale with it.
fn property_accuracy() -> CdfAccuracy {
    CdfAccuracy { abs_tol: 1e-5, ..CdfAccuracy::default() }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn fail<E: std::fmt::Display>(e: E) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

/// Covariance with a C-vine correlation and the given standard deviations.
fn random_model(q: usize, seed: u64, mean: &[f64], sd: &[f64]) -> Result<MvnModel, TestCaseError> {
    let corr =
        if q == 1 { CorrelationMatrix::identity(1) } else { cvine_random_correlation(q, 2.0, seed).map_err(fail)? };
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(&sd[..q]));
    let cov = &d * corr.matrix() * &d;
    MvnModel::new(DVector::from_column_slice(&mean[..q]), cov).map_err(fail)
}

/// Raising one coordinate never lowers the CDF by more than abs_tol.
pub fn cdf_monotonicity(cases: u32) -> Check {
    let acc = property_accuracy();
    let strategy = (
        1usize..=4,
        any::<u64>(),
        prop::collection::vec(-2.0f64..2.0, 4),
        prop::collection::vec(0.5f64..3.0, 4),
        prop::collection::vec(-4.0f64..4.0, 4),
        0usize..4,
        0.0f64..1.5,
    );
    runner(cases)
        .run(&strategy, |(q, seed, mean, sd, x, axis, bump)| {
            let model = random_model(q, seed, &mean, &sd)?;
            let x0 = DVector::from_column_slice(&x[..q]);
            let mut x1 = x0.clone();
            x1[axis % q] += bump;
            let f0 = mvn_cdf(&x0, &model, &acc).map_err(fail)?;
            let f1 = mvn_cdf(&x1, &model, &acc).map_err(fail)?;
            prop_assert!(f1 >= f0 - acc.abs_tol, "q {q}: F(x) = {f0}, F(x + bump) = {f1}");
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// A diagonal covariance gives the product of univariate CDFs.
pub fn independence_factorization(cases: u32) -> Check {
    let acc = CdfAccuracy::default();
    let strategy = (
        1usize..=5,
        prop::collection::vec(-2.0f64..2.0, 5),
        prop::collection::vec(0.5f64..3.0, 5),
        prop::collection::vec(-3.0f64..3.0, 5),
    );
    runner(cases)
        .run(&strategy, |(q, mean, sd, z)| {
            let var: Vec<f64> = sd[..q].iter().map(|s| s * s).collect();
            let cov = DMatrix::from_diagonal(&DVector::from_vec(var));
            let model = MvnModel::new(DVector::from_column_slice(&mean[..q]), cov).map_err(fail)?;
            let x = DVector::from_iterator(q, (0..q).map(|i| mean[i] + z[i] * sd[i]));
            let got = mvn_cdf(&x, &model, &acc).map_err(fail)?;
            let want: f64 = z[..q].iter().map(|&v| norm_cdf(v)).product();
            prop_assert!((got - want).abs() <= 2.0 * acc.abs_tol, "q {q}: {got} vs {want}");
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Every vertex of an extracted contour sits at or beyond each variate's
/// univariate quantile, up to one grid step.
pub fn contour_asymptote(cases: u32) -> Check {
    let acc = CdfAccuracy::default();
    let spec = GridSpec::default_for(2).map_err(|e| e.to_string())?.with_step(0.05).map_err(|e| e.to_string())?;
    runner(cases)
        .run(&(-0.95f64..0.95, 0.5f64..0.99), |(rho, tau)| {
            let model = MvnModel::standard_bivariate(rho).map_err(fail)?;
            let grid = evaluate_cdf_grid(&model, &spec, &acc).map_err(fail)?;
            let set = extract_quantile(&grid, tau).map_err(fail)?;
            let floor = normal_quantile(tau).map_err(fail)? - spec.step;
            prop_assert!(!set.vertices.is_empty());
            for v in &set.vertices {
                prop_assert!(v.iter().all(|&c| c >= floor), "rho {rho}, tau {tau}: vertex {v:?} below {floor}");
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// The joint probability of concurrent univariate quantiles lies between
/// the Bonferroni lower bound and the individual probability, for random
/// correlations and for every Algorithm 1 bootstrap replicate.
pub fn bonferroni_sandwich(cases: u32) -> Check {
    let acc = property_accuracy();
    runner(cases)
        .run(&(2usize..=4, prop::sample::select(vec![0.5, 0.9, 0.99]), any::<u64>()), |(q, tau, seed)| {
            let corr = cvine_random_correlation(q, 2.0, seed).map_err(fail)?;
            let b = bonferroni_bounds(tau, q).map_err(fail)?;
            let p = joint_quantile_probability(tau, &corr, &acc).map_err(fail)?;
            prop_assert!(p >= b.lower - acc.abs_tol && p <= b.upper + acc.abs_tol, "q {q}, tau {tau}: {p}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let replicate_cases = (cases / 16).max(2);
    runner(replicate_cases)
        .run(&(2usize..=3, any::<u64>()), |(q, seed)| {
            let corr = cvine_random_correlation(q, 2.0, seed).map_err(fail)?;
            let data = mvn_sample(&corr.model().map_err(fail)?, 30, seed ^ 1).map_err(fail)?;
            let config = BootstrapConfig { b: 100, seed, ..Default::default() };
            let r =
                algorithm1_joint_tau_uq(&data, 0.9, &PercentileRequest::one_sided(0.05).map_err(fail)?, &config, &acc)
                    .map_err(fail)?;
            let b = bonferroni_bounds(0.9, q).map_err(fail)?;
            for x in &r.replicates {
                prop_assert!(*x >= b.lower && *x <= b.upper, "replicate {x} outside [{}, {}]", b.lower, b.upper);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Fixed seeds reproduce every randomized output bit for bit.
pub fn determinism() -> Check {
    let acc = CdfAccuracy::default();
    let err = |e: mvq::Error| e.to_string();

    let model = CorrelationMatrix::equicorrelated(5, 0.4).map_err(err)?.model().map_err(err)?;
    let x = DVector::from_element(5, 0.7);
    let a = mvn_cdf(&x, &model, &acc).map_err(err)?;
    let b = mvn_cdf(&x, &model, &acc).map_err(err)?;
    if a.to_bits() != b.to_bits() {
        return Err(format!("five-variate CDF differs: {a} vs {b}"));
    }

    let s1 = mvn_sample(&model, 50, 9).map_err(err)?;
    let s2 = mvn_sample(&model, 50, 9).map_err(err)?;
    if !same_bits(s1.values().as_slice(), s2.values().as_slice()) {
        return Err("samples differ under one seed".into());
    }

    let data = fixture_data();
    let config = BootstrapConfig { b: 300, ci_method: CiMethod::Bca, seed: 17, ..Default::default() };
    let request = PercentileRequest::new(vec![0.05, 0.95]).map_err(err)?;
    let r1 = algorithm1_joint_tau_uq(&data, 0.9, &request, &config, &acc).map_err(err)?;
    let r2 = algorithm1_joint_tau_uq(&data, 0.9, &request, &config, &acc).map_err(err)?;
    if !same_bits(&r1.replicates, &r2.replicates) || !same_bits(&r1.tau_values, &r2.tau_values) {
        return Err("joint probability bootstrap differs under one seed".into());
    }

    let mut study = StudyConfig::desk(Study::Alg3);
    study.q_list = vec![2];
    study.n_list = vec![30];
    study.tau_list = vec![0.9];
    study.mc_trials = 10;
    study.bootstrap.b = 100;
    study.seed = 4;
    let t1 = run_study(&study).map_err(err)?;
    let t2 = run_study(&study).map_err(err)?;
    let p1: Vec<f64> = t1.table.rows.iter().map(|r| r.p).collect();
    let p2: Vec<f64> = t2.table.rows.iter().map(|r| r.p).collect();
    if !same_bits(&p1, &p2) {
        return Err(format!("study results differ: {p1:?} vs {p2:?}"));
    }
    Ok(())
}

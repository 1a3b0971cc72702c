//! Quantile machinery for known models: joint quantile probabilities of
//! concurrent univariate quantiles, Bonferroni bounds, equicoordinate
//! quantiles, critical points and the Monte Carlo coverage functional.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mvn::{norm_ppf, normal_quantile, CdfAccuracy, CorrelationMatrix, MvnCdf, MvnSampler};
use crate::numeric::solve_increasing;
use crate::rng::derived_rng;
use crate::stats::MvnModel;

/// Convergence tolerance on the equicoordinate value.
pub const EQUICOORDINATE_XTOL: f64 = 1e-9;
const EQUICOORDINATE_MAX_ITER: usize = 5000;

/// Point of maximal density on the tau-quantile surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: Vec<f64>,
    pub tau: f64,
    /// common coordinate in the standardized domain
    pub equicoordinate_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBounds {
    pub lower: f64,
    pub upper: f64,
    pub independent_case: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustMode {
    Independent,
    Bonferroni,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return invalid(format!("probability must lie in (0, 1), got {tau}"));
    }
    Ok(())
}

/// CDF at the point formed by concurrent univariate `tau_individual`
/// quantiles, i.e. the joint coverage of per-axis quantiles.
pub fn joint_quantile_probability(tau_individual: f64, corr: &CorrelationMatrix, acc: &CdfAccuracy) -> Result<f64> {
    check_tau(tau_individual)?;
    let v = normal_quantile(tau_individual)?;
    let cdf = MvnCdf::new(&corr.model()?, *acc)?;
    cdf.standard_cdf(&vec![v; corr.dim()])
}

pub fn bonferroni_bounds(tau_individual: f64, q: usize) -> Result<ProbabilityBounds> {
    check_tau(tau_individual)?;
    if q == 0 {
        return invalid("q must be at least 1");
    }
    let lower = 1.0 - q as f64 * (1.0 - tau_individual);
    Ok(ProbabilityBounds {
        // rounding residue of an exactly vanishing bound is reported as zero
        lower: if lower < 1e-12 { 0.0 } else { lower },
        upper: tau_individual,
        independent_case: tau_individual.powi(q as i32),
    })
}

/// Per-axis probability needed for a joint target `tau_joint`.
pub fn adjusted_individual_tau(tau_joint: f64, q: usize, mode: AdjustMode) -> Result<f64> {
    check_tau(tau_joint)?;
    if q == 0 {
        return invalid("q must be at least 1");
    }
    Ok(match mode {
        AdjustMode::Independent => tau_joint.powf(1.0 / q as f64),
        AdjustMode::Bonferroni => 1.0 - (1.0 - tau_joint) / q as f64,
    })
}

/// Solves F(v 1_q; 0, corr) = tau for the scalar v.
pub fn equicoordinate_quantile(tau: f64, corr: &CorrelationMatrix, acc: &CdfAccuracy) -> Result<f64> {
    check_tau(tau)?;
    let q = corr.dim();
    if q == 1 {
        return normal_quantile(tau);
    }
    let cdf = MvnCdf::new(&corr.model()?, *acc)?;
    equicoordinate_with(&cdf, tau)
}

pub(crate) fn equicoordinate_with(cdf: &MvnCdf, tau: f64) -> Result<f64> {
    let q = cdf.dim();
    // F(v 1) <= Phi(v) and F(v 1) >= 1 - q (1 - Phi(v)) bracket the root
    let lo = norm_ppf(tau);
    let hi = norm_ppf(1.0 - (1.0 - tau) / q as f64);
    let mut point = vec![0.0; q];
    let mut failure = None;
    let root = solve_increasing(
        |v| {
            point.iter_mut().for_each(|p| *p = v);
            match cdf.standard_cdf(&point) {
                Ok(p) => p - tau,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        lo - 1e-6,
        hi + 1e-6,
        EQUICOORDINATE_XTOL,
        EQUICOORDINATE_MAX_ITER,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(root)
}

pub fn critical_point(tau: f64, model: &MvnModel, acc: &CdfAccuracy) -> Result<CriticalPoint> {
    check_tau(tau)?;
    let cdf = MvnCdf::new(model, *acc)?;
    let v = if model.dim() == 1 { normal_quantile(tau)? } else { equicoordinate_with(&cdf, tau)? };
    let sd = model.std_devs();
    let point = (0..model.dim()).map(|i| v * sd[i] + model.mean[i]).collect();
    Ok(CriticalPoint { point, tau, equicoordinate_value: v })
}

/// Decides whether a point lies in the region dominated by a quantile
/// surface (or another coverage region).
pub trait DominanceRule: Sync {
    fn dominated(&self, x: &[f64]) -> Result<bool>;
}

/// Region below the true tau-quantile surface of a model: F(x) <= tau.
pub struct CdfLevel {
    cdf: MvnCdf,
    tau: f64,
}

impl CdfLevel {
    pub fn new(model: &MvnModel, tau: f64, acc: CdfAccuracy) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self { cdf: MvnCdf::new(model, acc)?, tau })
    }
}

impl DominanceRule for CdfLevel {
    fn dominated(&self, x: &[f64]) -> Result<bool> {
        Ok(self.cdf.cdf(x)? <= self.tau)
    }
}

/// Orthant below a critical point: x <= v componentwise.
pub struct Orthant(pub Vec<f64>);

impl DominanceRule for Orthant {
    fn dominated(&self, x: &[f64]) -> Result<bool> {
        Ok(x.iter().zip(&self.0).all(|(a, b)| a <= b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub beta: f64,
    pub std_error: f64,
    pub n_mc: usize,
}

impl CoverageEstimate {
    fn from_count(hits: usize, n: usize) -> Self {
        let beta = hits as f64 / n as f64;
        Self { beta, std_error: (beta * (1.0 - beta) / n as f64).sqrt(), n_mc: n }
    }
}

pub const MIN_COVERAGE_SAMPLES: usize = 10_000;

/// Draws the population sample used by [`coverage_from_samples`].
pub fn coverage_samples(model: &MvnModel, n_mc: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if n_mc < MIN_COVERAGE_SAMPLES {
        return invalid(format!("n_mc must be at least {MIN_COVERAGE_SAMPLES}, got {n_mc}"));
    }
    let sampler = MvnSampler::new(model);
    let mut rng = derived_rng(seed, 0);
    Ok((0..n_mc).map(|_| sampler.draw(&mut rng)).collect())
}

pub fn coverage_from_samples(rule: &dyn DominanceRule, samples: &[DVector<f64>]) -> Result<CoverageEstimate> {
    let mut hits = 0usize;
    for x in samples {
        if rule.dominated(x.as_slice())? {
            hits += 1;
        }
    }
    Ok(CoverageEstimate::from_count(hits, samples.len()))
}

/// Monte Carlo estimate of the population fraction dominated by `rule`.
pub fn estimate_coverage_beta(
    rule: &dyn DominanceRule,
    model: &MvnModel,
    n_mc: usize,
    seed: u64,
) -> Result<CoverageEstimate> {
    let samples = coverage_samples(model, n_mc, seed)?;
    coverage_from_samples(rule, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn acc() -> CdfAccuracy {
        CdfAccuracy::default()
    }

    #[test]
    fn joint_probability_reference_values() {
        let cases = [(0.0, 0.81), (-0.99, 0.800), (0.99, 0.8901)];
        for (rho, want) in cases {
            let c = CorrelationMatrix::bivariate(rho).unwrap();
            let got = joint_quantile_probability(0.90, &c, &acc()).unwrap();
            assert!((got - want).abs() < 1e-3, "rho {rho}: {got}");
        }
        let c = CorrelationMatrix::bivariate(1.0 - 1e-9).unwrap();
        assert!((joint_quantile_probability(0.90, &c, &acc()).unwrap() - 0.90).abs() < 1e-3);
    }

    #[test]
    fn bonferroni_examples() {
        let b = bonferroni_bounds(0.90, 3).unwrap();
        assert!((b.lower - 0.70).abs() < 1e-12);
        assert!((b.independent_case - 0.729).abs() < 1e-12);
        assert_eq!(b.upper, 0.90);
        assert_eq!(bonferroni_bounds(0.90, 10).unwrap().lower, 0.0);
        let b = bonferroni_bounds(0.90, 1).unwrap();
        assert!((b.lower - 0.9).abs() < 1e-15 && b.independent_case == 0.9 && b.upper == 0.9);
        assert!(bonferroni_bounds(1.0, 2).is_err());
    }

    #[test]
    fn adjusted_tau_examples() {
        for mode in [AdjustMode::Independent, AdjustMode::Bonferroni] {
            assert!((adjusted_individual_tau(0.9, 1, mode).unwrap() - 0.9).abs() < 1e-15);
        }
        assert!((adjusted_individual_tau(0.9, 2, AdjustMode::Independent).unwrap() - 0.9f64.sqrt()).abs() < 1e-15);
        assert!((adjusted_individual_tau(0.9, 2, AdjustMode::Bonferroni).unwrap() - 0.95).abs() < 1e-15);
        for q in 2..10 {
            let ind = adjusted_individual_tau(0.9, q, AdjustMode::Independent).unwrap();
            let bon = adjusted_individual_tau(0.9, q, AdjustMode::Bonferroni).unwrap();
            assert!(bon >= ind);
        }
    }

    #[test]
    fn equicoordinate_examples() {
        let c = CorrelationMatrix::bivariate(0.0).unwrap();
        assert!((equicoordinate_quantile(0.81, &c, &acc()).unwrap() - 1.2816).abs() < 1e-3);
        let c1 = CorrelationMatrix::identity(1);
        assert!((equicoordinate_quantile(0.90, &c1, &acc()).unwrap() - 1.2816).abs() < 1e-4);
        let c3 = CorrelationMatrix::identity(3);
        assert!((equicoordinate_quantile(0.729, &c3, &acc()).unwrap() - 1.2816).abs() < 1e-3);
    }

    #[test]
    fn equicoordinate_round_trip_residual() {
        let c = CorrelationMatrix::new(DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.4, 1.0, 0.6, -0.2, 0.6, 1.0]))
            .unwrap();
        let cdf = MvnCdf::new(&c.model().unwrap(), acc()).unwrap();
        for tau in [0.05, 0.3, 0.7, 0.95, 0.999] {
            let v = equicoordinate_quantile(tau, &c, &acc()).unwrap();
            assert!((cdf.standard_cdf(&[v; 3]).unwrap() - tau).abs() < 1e-6);
        }
    }

    #[test]
    fn critical_point_examples() {
        let m = MvnModel::standard_bivariate(0.0).unwrap();
        let cp = critical_point(0.81, &m, &acc()).unwrap();
        assert!(cp.point.iter().all(|v| (v - 1.2816).abs() < 1e-3));
        let m = MvnModel::new(DVector::from_vec(vec![7.0, 7.0]), DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 4.0]))
            .unwrap();
        let cp = critical_point(0.81, &m, &acc()).unwrap();
        assert!(cp.point.iter().all(|v| (v - 9.5631).abs() < 2e-3), "{:?}", cp.point);
        let m = MvnModel::standard_bivariate(0.0).unwrap();
        let cp = critical_point(0.25, &m, &acc()).unwrap();
        assert!(cp.point.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn coverage_univariate_equals_tau() {
        let m = MvnModel::new(DVector::from_vec(vec![0.0]), DMatrix::identity(1, 1)).unwrap();
        let rule = CdfLevel::new(&m, 0.7, acc()).unwrap();
        let est = estimate_coverage_beta(&rule, &m, 20_000, 3).unwrap();
        assert!((est.beta - 0.7).abs() < 3.0 * est.std_error, "{est:?}");
        assert!(estimate_coverage_beta(&rule, &m, 100, 3).is_err());
    }

    #[test]
    fn coverage_near_one_tau() {
        let m = MvnModel::standard_bivariate(0.3).unwrap();
        let rule = CdfLevel::new(&m, 0.999_999, acc()).unwrap();
        let est = estimate_coverage_beta(&rule, &m, 10_000, 4).unwrap();
        assert!(est.beta > 0.999);
    }
}

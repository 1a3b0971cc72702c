//! Multivariate normal density, CDF, sampling and random correlation
//! matrices.
//!
//! CDF evaluation is dispatched by dimension: closed form for q = 1 and
//! diagonal covariances, Genz's bivariate method for q = 2, a one-dimensional
//! adaptive reduction for q = 3, and randomized lattice QMC for q >= 4.

pub mod bvn;
pub mod normal;
pub mod qmc;
mod sample;
pub mod tvn;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stats::{MvnModel, MAX_DIM};

pub use normal::{norm_cdf, norm_pdf, norm_ppf, normal_quantile};
pub use sample::{
    cvine_random_correlation, cvine_random_correlation_with, mvn_sample, mvn_sample_with, FactorKind, MvnSampler,
};

/// Accuracy controls for CDF evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfAccuracy {
    pub abs_tol: f64,
    pub max_evals: usize,
    pub rng_seed: u64,
}

impl Default for CdfAccuracy {
    fn default() -> Self {
        Self { abs_tol: 1e-6, max_evals: 10_000_000, rng_seed: 0x5EED }
    }
}

impl CdfAccuracy {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || self.max_evals == 0 {
            return invalid("abs_tol and max_evals must be positive");
        }
        Ok(())
    }

    /// Quadrature tolerance used by the deterministic q <= 3 routes.
    pub(crate) fn quad_tol(&self) -> f64 {
        (self.abs_tol * 1e-3).max(1e-13)
    }
}

const SHRINK: f64 = 1e-9;

/// Unit-diagonal, symmetric, positive semi-definite matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix(DMatrix<f64>);

impl CorrelationMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let q = values.nrows();
        if q == 0 || values.ncols() != q {
            return invalid("correlation matrix must be square and non-empty");
        }
        for i in 0..q {
            if (values[(i, i)] - 1.0).abs() > 1e-12 {
                return invalid(format!("diagonal entry {i} is {}, expected 1", values[(i, i)]));
            }
            for j in 0..i {
                let v = values[(i, j)];
                if !(-1.0..=1.0).contains(&v) {
                    return invalid(format!("entry ({i}, {j}) = {v} outside [-1, 1]"));
                }
            }
        }
        // symmetry and PSD checks
        MvnModel::new_psd(DVector::zeros(q), values.clone())?;
        Ok(Self(values))
    }

    pub fn bivariate(rho: f64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]))
    }

    pub fn equicorrelated(q: usize, rho: f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(q, q, |i, j| if i == j { 1.0 } else { rho }))
    }

    pub fn identity(q: usize) -> Self {
        Self(DMatrix::identity(q, q))
    }

    pub fn from_cov(cov: &DMatrix<f64>) -> Result<Self> {
        let mut c = crate::stats::cov_to_corr(cov);
        for i in 0..c.nrows() {
            for j in 0..c.ncols() {
                if i != j {
                    c[(i, j)] = c[(i, j)].clamp(-1.0, 1.0);
                }
            }
        }
        Self::new(c)
    }

    /// Correlation of a covariance matrix shrunk towards the identity by
    /// 1e-9, so exactly colinear inputs give a positive definite matrix with
    /// correlations bounded by 1 - 1e-9.
    pub fn from_cov_regularized(cov: &DMatrix<f64>) -> Result<Self> {
        let q = cov.nrows();
        let c = crate::stats::cov_to_corr(cov);
        let m = DMatrix::from_fn(q, q, |i, j| {
            if i == j {
                1.0
            } else {
                (1.0 - SHRINK) * (0.5 * (c[(i, j)] + c[(j, i)])).clamp(-1.0, 1.0)
            }
        });
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn model(&self) -> Result<MvnModel> {
        MvnModel::standard(self.0.clone())
    }
}

/// Model with the sample mean and a covariance whose correlation part is
/// regularized as in [`CorrelationMatrix::from_cov_regularized`].
pub fn regularized_model(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<MvnModel> {
    let q = cov.nrows();
    let corr = CorrelationMatrix::from_cov_regularized(cov)?;
    let sd: Vec<f64> = (0..q).map(|i| cov[(i, i)].sqrt()).collect();
    let c = corr.matrix();
    MvnModel::new(mean, DMatrix::from_fn(q, q, |i, j| c[(i, j)] * sd[i] * sd[j]))
}

pub fn mvn_pdf(x: &DVector<f64>, model: &MvnModel) -> Result<f64> {
    if x.len() != model.dim() {
        return invalid("mvn_pdf: dimension mismatch");
    }
    let chol = model.cholesky()?;
    let l = chol.l_dirty();
    let y = l.solve_lower_triangular(&(x - &model.mean)).ok_or(Error::SingularMatrix)?;
    let log_det: f64 = (0..model.dim()).map(|i| l[(i, i)].ln()).sum();
    let q = model.dim() as f64;
    Ok((-0.5 * y.norm_squared() - log_det - 0.5 * q * (2.0 * std::f64::consts::PI).ln()).exp())
}

/// Prepared CDF evaluator for repeated evaluation under one model.
#[derive(Debug, Clone)]
pub struct MvnCdf {
    mean: DVector<f64>,
    sd: DVector<f64>,
    corr: DMatrix<f64>,
    diagonal: bool,
    acc: CdfAccuracy,
}

impl MvnCdf {
    pub fn new(model: &MvnModel, acc: CdfAccuracy) -> Result<Self> {
        acc.validate()?;
        let q = model.dim();
        if q > MAX_DIM {
            return Err(Error::DimensionTooLarge { q, max: MAX_DIM });
        }
        model.cholesky()?;
        let corr = model.correlation();
        let diagonal = (0..q).all(|i| (0..q).all(|j| i == j || corr[(i, j)] == 0.0));
        Ok(Self { mean: model.mean.clone(), sd: model.std_devs(), corr, diagonal, acc })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.corr
    }

    /// Upper limits mapped into the standardized domain.
    fn standardized(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(i, v)| (v - self.mean[i]) / self.sd[i]).collect()
    }

    pub fn cdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return invalid(format!("point has {} coordinates, model has {}", x.len(), self.dim()));
        }
        if x.iter().any(|v| v.is_nan()) {
            return invalid("NaN coordinate");
        }
        self.standard_cdf(&self.standardized(x))
    }

    /// CDF of the standardized (correlation) model at `z`.
    pub fn standard_cdf(&self, z: &[f64]) -> Result<f64> {
        let c = &self.corr;
        Ok(match z.len() {
            _ if self.diagonal => z.iter().map(|&v| norm_cdf(v)).product(),
            1 => norm_cdf(z[0]),
            2 => bvn::bvn_cdf(z[0], z[1], c[(0, 1)]),
            3 => tvn::tvn_cdf([z[0], z[1], z[2]], [c[(0, 1)], c[(0, 2)], c[(1, 2)]], self.acc.quad_tol()),
            _ => {
                // coordinates beyond the numerical support drop out of the integral
                if z.iter().any(|&v| v <= -40.0) {
                    return Ok(0.0);
                }
                let keep: Vec<usize> = (0..z.len()).filter(|&i| z[i] < 40.0).collect();
                if keep.len() < z.len() {
                    let sub = DMatrix::from_fn(keep.len(), keep.len(), |i, j| c[(keep[i], keep[j])]);
                    let zs: Vec<f64> = keep.iter().map(|&i| z[i]).collect();
                    if keep.is_empty() {
                        return Ok(1.0);
                    }
                    let inner = Self {
                        mean: DVector::zeros(keep.len()),
                        sd: DVector::from_element(keep.len(), 1.0),
                        diagonal: false,
                        corr: sub,
                        acc: self.acc,
                    };
                    return inner.standard_cdf(&zs);
                }
                qmc::qmc_cdf(c, z, self.acc.abs_tol, self.acc.max_evals, self.acc.rng_seed)?.0
            }
        })
    }
}

/// P(X <= x) componentwise for X ~ model.
pub fn mvn_cdf(x: &DVector<f64>, model: &MvnModel, acc: &CdfAccuracy) -> Result<f64> {
    MvnCdf::new(model, *acc)?.cdf(x.as_slice())
}

//! The three bootstrap procedures: uncertainty on the joint probability of
//! concurrent univariate quantiles, confidence sets for quantile contours
//! and surfaces, and confidence intervals for critical points.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{
    bootstrap_replicates, cell_interval, interval, jackknife, BootstrapConfig, CiMethod, PercentileRequest,
};
use crate::error::{invalid, Error, Result};
use crate::mesh::{extract_quantile, line_coordinates, upsample_grid, CdfGrid, GridSpec, LineEvaluator, QuantileSet};
use crate::mvn::{regularized_model, CdfAccuracy, CorrelationMatrix, MvnCdf};
use crate::quantile::{bonferroni_bounds, equicoordinate_with, joint_quantile_probability};
use crate::stats::{sample_cov, sample_mean, standardize, DataMatrix, StandardizedData};

/// Refinement applied to percentile grids when interpolation is requested.
pub const UPSAMPLE_FACTOR: usize = 2;

fn check_sample(data: &DataMatrix) -> Result<()> {
    let min = data.q() + 2;
    if data.n() < min {
        return Err(Error::InsufficientSamples { got: data.n(), min });
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return invalid(format!("tau must lie in (0, 1), got {tau}"));
    }
    Ok(())
}

fn correlation_of(d: &DataMatrix) -> Result<CorrelationMatrix> {
    CorrelationMatrix::from_cov_regularized(&sample_cov(d)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTauInterval {
    pub gammas: Vec<f64>,
    pub tau_values: Vec<f64>,
    pub b: usize,
    pub tau_individual: f64,
    /// joint probability under the sample correlation
    pub estimate: f64,
    pub ci_method: CiMethod,
    pub fallback: bool,
    #[serde(skip)]
    pub replicates: Vec<f64>,
}

/// Bootstrap distribution of F(Phi^-1(tau_i) 1; 0, C*) over resampled
/// correlation matrices.
pub fn algorithm1_joint_tau_uq(
    data: &DataMatrix,
    tau_individual: f64,
    request: &PercentileRequest,
    config: &BootstrapConfig,
    acc: &CdfAccuracy,
) -> Result<JointTauInterval> {
    check_sample(data)?;
    check_tau(tau_individual)?;
    let bounds = bonferroni_bounds(tau_individual, data.q())?;
    let z = standardize(data)?;
    let stat = |d: &DataMatrix| -> Result<f64> {
        let p = joint_quantile_probability(tau_individual, &correlation_of(d)?, acc)?;
        // quadrature noise must not push a value outside the Bonferroni sandwich
        Ok(p.clamp(bounds.lower, bounds.upper))
    };
    let replicates = bootstrap_replicates(&z.values, config, stat)?;
    let estimate = stat(&z.values)?;
    let jack = match config.ci_method {
        CiMethod::Bca => Some(jackknife(&z.values, stat)?),
        _ => None,
    };
    let ci = interval(config.ci_method, &replicates, estimate, jack.as_deref(), request)?;
    Ok(JointTauInterval {
        gammas: request.gammas().to_vec(),
        tau_values: ci.values,
        b: config.b,
        tau_individual,
        estimate,
        ci_method: config.ci_method,
        fallback: ci.fallback,
        replicates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointCi {
    pub tau: f64,
    pub gammas: Vec<f64>,
    /// one point per requested level, original domain
    pub points: Vec<Vec<f64>>,
    pub b: usize,
    /// critical point of the fitted model
    pub estimate: Vec<f64>,
    pub ci_method: CiMethod,
    pub fallback: bool,
}

/// v*(tau, C*) sd* + mean* of one standardized sample.
fn critical_point_stat(d: &DataMatrix, tau: f64, acc: &CdfAccuracy) -> Result<Vec<f64>> {
    let cov = sample_cov(d)?;
    let mean = sample_mean(d);
    let corr = correlation_of(d)?;
    let v = if d.q() == 1 {
        crate::mvn::normal_quantile(tau)?
    } else {
        equicoordinate_with(&MvnCdf::new(&corr.model()?, *acc)?, tau)?
    };
    Ok((0..d.q()).map(|i| v * cov[(i, i)].sqrt() + mean[i]).collect())
}

/// Per-coordinate bootstrap interval of the critical point, with each
/// replicate mapped through its own mean and standard deviations.
pub fn algorithm3_critical_point_ci(
    data: &DataMatrix,
    tau: f64,
    request: &PercentileRequest,
    config: &BootstrapConfig,
    acc: &CdfAccuracy,
) -> Result<CriticalPointCi> {
    check_sample(data)?;
    check_tau(tau)?;
    let z = standardize(data)?;
    let stat = |d: &DataMatrix| critical_point_stat(d, tau, acc);
    let replicates = bootstrap_replicates(&z.values, config, stat)?;
    let estimate = stat(&z.values)?;
    let jack = match config.ci_method {
        CiMethod::Bca => Some(jackknife(&z.values, stat)?),
        _ => None,
    };
    let q = data.q();
    let g = request.gammas().len();
    let mut standardized = vec![vec![0.0; q]; g];
    let mut fallback = false;
    for c in 0..q {
        let reps: Vec<f64> = replicates.iter().map(|r| r[c]).collect();
        let jc: Option<Vec<f64>> = jack.as_ref().map(|j| j.iter().map(|r| r[c]).collect());
        let ci = interval(config.ci_method, &reps, estimate[c], jc.as_deref(), request)?;
        fallback |= ci.fallback;
        for (k, v) in ci.values.into_iter().enumerate() {
            standardized[k][c] = v;
        }
    }
    let to_original = |p: &[f64]| -> Vec<f64> { (0..q).map(|c| p[c] * z.scaling[c] + z.centering[c]).collect() };
    Ok(CriticalPointCi {
        tau,
        gammas: request.gammas().to_vec(),
        points: standardized.iter().map(|p| to_original(p)).collect(),
        b: config.b,
        estimate: to_original(&estimate),
        ci_method: config.ci_method,
        fallback,
    })
}

/// Percentile CDF grids in the standardized domain, one per requested
/// level, together with the standardization of the input sample.
///
/// The grid for level gamma holds the per-cell (1 - gamma) bound of the
/// bootstrap CDF values, so its tau contour bounds the quantile from the
/// outside with confidence gamma; higher gamma gives a set further out.
#[derive(Debug, Clone)]
pub struct CiGrids {
    pub gammas: Vec<f64>,
    pub grids: Vec<CdfGrid>,
    pub centering: Vec<f64>,
    pub scaling: Vec<f64>,
    /// cells where a bias correction was undefined and percentiles were used
    pub fallback_cells: usize,
}

/// Per-cell bootstrap bounds of the CDF over the grid. Replicate models
/// are kept rather than replicate grids; the grid is processed one line
/// at a time so memory stays proportional to b times the line length.
pub fn quantile_ci_grids(
    data: &DataMatrix,
    request: &PercentileRequest,
    config: &BootstrapConfig,
    spec: &GridSpec,
    acc: &CdfAccuracy,
) -> Result<CiGrids> {
    check_sample(data)?;
    spec.validate()?;
    if data.q() != spec.q {
        return invalid(format!("data has q = {}, grid has q = {}", data.q(), spec.q));
    }
    let z: StandardizedData = standardize(data)?;
    let model_of = |d: &DataMatrix| -> Result<LineEvaluator> {
        let m = regularized_model(sample_mean(d), &sample_cov(d)?)?;
        LineEvaluator::new(&m, acc)
    };
    let replicates = bootstrap_replicates(&z.values, config, model_of)?;
    let base = model_of(&z.values)?;
    let jack = match config.ci_method {
        CiMethod::Bca => jackknife(&z.values, model_of)?,
        _ => Vec::new(),
    };
    let levels: Vec<f64> = request.gammas().iter().map(|g| 1.0 - g).collect();
    let axes = spec.axes();
    let lines = line_coordinates(&axes);
    let m0 = axes[0].len();
    let b = replicates.len();
    let g = levels.len();

    let per_line: Vec<(Vec<f64>, usize)> = lines
        .par_iter()
        .map(|rest| {
            let mut buf = vec![0.0; b * m0];
            for (r, eval) in replicates.iter().enumerate() {
                eval.line(&axes[0], rest, &mut buf[r * m0..(r + 1) * m0]);
            }
            let mut theta = vec![0.0; m0];
            base.line(&axes[0], rest, &mut theta);
            let mut jbuf = vec![0.0; jack.len() * m0];
            for (r, eval) in jack.iter().enumerate() {
                eval.line(&axes[0], rest, &mut jbuf[r * m0..(r + 1) * m0]);
            }
            let mut out = vec![0.0; m0 * g];
            let mut cell = vec![0.0; b];
            let mut jcell = vec![0.0; jack.len()];
            let mut fallbacks = 0;
            for i in 0..m0 {
                for r in 0..b {
                    cell[r] = buf[r * m0 + i];
                }
                for r in 0..jack.len() {
                    jcell[r] = jbuf[r * m0 + i];
                }
                let slot = &mut out[i * g..(i + 1) * g];
                if cell_interval(config.ci_method, &mut cell, theta[i], &jcell, &levels, slot) {
                    fallbacks += 1;
                }
                slot.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            }
            (out, fallbacks)
        })
        .collect();

    let cells = m0 * lines.len();
    let mut values = vec![vec![0.0; cells]; g];
    let mut fallback_cells = 0;
    for (l, (out, fb)) in per_line.iter().enumerate() {
        fallback_cells += fb;
        for i in 0..m0 {
            for k in 0..g {
                values[k][l * m0 + i] = out[i * g + k];
            }
        }
    }
    let grids = values.into_iter().map(|v| CdfGrid::from_values(axes.clone(), v)).collect::<Result<Vec<_>>>()?;
    Ok(CiGrids {
        gammas: request.gammas().to_vec(),
        grids,
        centering: z.centering.iter().copied().collect(),
        scaling: z.scaling.iter().copied().collect(),
        fallback_cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSet {
    pub gamma: f64,
    /// vertices in the data domain
    pub set: QuantileSet,
    pub standardized: QuantileSet,
    #[serde(skip)]
    pub grid: Option<CdfGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCiResult {
    pub tau: f64,
    pub gamma_sets: Vec<GammaSet>,
    pub config: BootstrapConfig,
    pub grid: GridSpec,
    pub interpolate: bool,
    pub centering: Vec<f64>,
    pub scaling: Vec<f64>,
    pub fallback_cells: usize,
}

impl QuantileCiResult {
    pub fn set_for(&self, gamma: f64) -> Option<&GammaSet> {
        self.gamma_sets.iter().find(|s| (s.gamma - gamma).abs() < 1e-12)
    }
}

/// Confidence sets for the tau quantile contour (q = 2) or surface (q = 3).
pub fn algorithm2_quantile_ci(
    data: &DataMatrix,
    tau: f64,
    request: &PercentileRequest,
    config: &BootstrapConfig,
    spec: &GridSpec,
    interpolate: bool,
    acc: &CdfAccuracy,
) -> Result<QuantileCiResult> {
    check_tau(tau)?;
    let ci = quantile_ci_grids(data, request, config, spec, acc)?;
    let mut gamma_sets = Vec::with_capacity(ci.grids.len());
    for (gamma, grid) in ci.gammas.iter().zip(ci.grids) {
        let grid = if interpolate { upsample_grid(&grid, UPSAMPLE_FACTOR)? } else { grid };
        let standardized = extract_quantile(&grid, tau)?;
        let set = standardized.to_original(&ci.centering, &ci.scaling)?;
        gamma_sets.push(GammaSet { gamma: *gamma, set, standardized, grid: Some(grid) });
    }
    Ok(QuantileCiResult {
        tau,
        gamma_sets,
        config: *config,
        grid: *spec,
        interpolate,
        centering: ci.centering,
        scaling: ci.scaling,
        fallback_cells: ci.fallback_cells,
    })
}

/// Maps standardized points to the data domain.
pub fn to_original_points(points: &DMatrix<f64>, centering: &[f64], scaling: &[f64]) -> Result<DMatrix<f64>> {
    crate::stats::destandardize(points, &DVector::from_column_slice(centering), &DVector::from_column_slice(scaling))
}

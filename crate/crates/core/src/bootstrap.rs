//! Bootstrap resampling and interval construction: percentile,
//! bias-corrected and BCa intervals for scalars and per cell of CDF grids.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::CdfGrid;
use crate::mvn::{norm_cdf, norm_ppf, MvnSampler};
use crate::numeric::{quantile_sorted, sort_floats};
use crate::rng::{derived_rng, Rng};
use crate::stats::{cov_to_corr, sample_cov, DataMatrix, MvnModel};

/// Smallest replicate count accepted for interval estimation.
pub const MIN_REPLICATES: usize = 100;

/// Resampling attempts before a singular resample is reported.
pub const MAX_RESAMPLE_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ResampleStyle {
    /// draws from MVN(0, R) with R the sample correlation
    Parametric,
    /// rows drawn with replacement
    #[default]
    Nonparametric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    #[default]
    Percentile,
    Bc,
    Bca,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub b: usize,
    pub style: ResampleStyle,
    pub ci_method: CiMethod,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { b: 1000, style: ResampleStyle::Nonparametric, ci_method: CiMethod::Percentile, seed: 0 }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b < MIN_REPLICATES {
            return invalid(format!("b must be at least {MIN_REPLICATES}, got {}", self.b));
        }
        Ok(())
    }
}

/// Ordered confidence levels at which bounds are reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileRequest {
    gammas: Vec<f64>,
}

impl PercentileRequest {
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() {
            return invalid("at least one confidence level is required");
        }
        if gammas.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
            return invalid("confidence levels must lie in (0, 1)");
        }
        if gammas.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("confidence levels must be strictly increasing");
        }
        Ok(Self { gammas })
    }

    /// Lower and upper bounds of a two-sided interval at `confidence`.
    pub fn two_sided(confidence: f64) -> Result<Self> {
        let a = (1.0 - confidence) / 2.0;
        Self::new(vec![a, 1.0 - a])
    }

    pub fn one_sided(gamma: f64) -> Result<Self> {
        Self::new(vec![gamma])
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }
}

/// One bootstrap sample of the rows of `data` (or a parametric draw).
/// Samples with a singular covariance are redrawn.
pub fn resample(data: &DataMatrix, style: ResampleStyle, rng: &mut Rng) -> Result<DataMatrix> {
    let n = data.n();
    if n < 2 {
        return Err(Error::InsufficientSamples { got: n, min: 2 });
    }
    let sampler = match style {
        ResampleStyle::Parametric => {
            let corr = cov_to_corr(&sample_cov(data)?);
            Some(MvnSampler::new(&MvnModel::new_psd(nalgebra::DVector::zeros(data.q()), corr)?))
        }
        ResampleStyle::Nonparametric => None,
    };
    let rank = correlation_rank(data).unwrap_or(0);
    for _ in 0..MAX_RESAMPLE_ATTEMPTS {
        let draw = match &sampler {
            Some(s) => s.draw_matrix(n, rng),
            None => {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                data.select_rows(&idx)
            }
        };
        if correlation_rank(&draw).is_some_and(|r| r >= rank) {
            return Ok(draw);
        }
    }
    Err(Error::DegenerateResample { attempts: MAX_RESAMPLE_ATTEMPTS })
}

/// Numerical rank of the sample correlation, or `None` when a column has
/// no spread. A resample is accepted when it keeps the rank of the data it
/// was drawn from, so exactly colinear inputs remain usable.
fn correlation_rank(data: &DataMatrix) -> Option<usize> {
    let cov = sample_cov(data).ok()?;
    let scale = (0..cov.nrows()).map(|i| cov[(i, i)]).fold(0.0, f64::max);
    if !(scale > 0.0) || (0..cov.nrows()).any(|i| cov[(i, i)] <= 1e-14 * scale) {
        return None;
    }
    let corr: DMatrix<f64> = cov_to_corr(&cov);
    let eig = SymmetricEigen::new(corr);
    Some(eig.eigenvalues.iter().filter(|&&v| v > 1e-10).count())
}

/// Evaluates `stat` on `config.b` resamples. Replicate `i` uses its own
/// seeded stream, so results do not depend on the thread count.
pub fn bootstrap_replicates<T, F>(data: &DataMatrix, config: &BootstrapConfig, stat: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&DataMatrix) -> Result<T> + Sync,
{
    config.validate()?;
    (0..config.b)
        .into_par_iter()
        .map(|i| {
            let mut rng = derived_rng(config.seed, i as u64);
            let d = resample(data, config.style, &mut rng)?;
            stat(&d)
        })
        .collect()
}

/// Leave-one-out values of `stat`.
pub fn jackknife<T, F>(data: &DataMatrix, stat: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&DataMatrix) -> Result<T> + Sync,
{
    if data.n() < 3 {
        return Err(Error::InsufficientSamples { got: data.n(), min: 3 });
    }
    (0..data.n()).into_par_iter().map(|i| stat(&data.without_row(i))).collect()
}

fn check_replicates(replicates: &[f64]) -> Result<()> {
    if replicates.len() < MIN_REPLICATES {
        return invalid(format!("need at least {MIN_REPLICATES} replicates, got {}", replicates.len()));
    }
    if replicates.iter().any(|v| !v.is_finite()) {
        return invalid("replicates must be finite");
    }
    Ok(())
}

/// Order-statistic quantiles of the replicates at each requested level.
pub fn percentile_ci(replicates: &[f64], request: &PercentileRequest) -> Result<Vec<f64>> {
    check_replicates(replicates)?;
    let mut sorted = replicates.to_vec();
    sort_floats(&mut sorted);
    Ok(request.gammas.iter().map(|&g| quantile_sorted(&sorted, g)).collect())
}

/// Bounds together with the levels actually used after bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub values: Vec<f64>,
    pub levels: Vec<f64>,
    pub z0: f64,
    pub acceleration: f64,
    /// set when the correction was undefined and percentile levels were used
    pub fallback: bool,
}

/// Jackknife acceleration constant.
pub fn acceleration(jackknife: &[f64]) -> f64 {
    let m = jackknife.len() as f64;
    let mean = jackknife.iter().sum::<f64>() / m;
    let (mut s2, mut s3) = (0.0, 0.0);
    for v in jackknife {
        let d = mean - v;
        s2 += d * d;
        s3 += d * d * d;
    }
    if s2 > 0.0 {
        s3 / (6.0 * s2.powf(1.5))
    } else {
        0.0
    }
}

/// Adjusted levels Phi(z0 + (z0 + z_g) / (1 - a (z0 + z_g))), or `None`
/// when the correction is undefined.
fn adjusted_levels(sorted: &[f64], theta_hat: f64, accel: f64, gammas: &[f64]) -> (f64, Option<Vec<f64>>) {
    let below = sorted.partition_point(|&v| v < theta_hat);
    let frac = below as f64 / sorted.len() as f64;
    let z0 = norm_ppf(frac);
    if !z0.is_finite() || sorted[0] == sorted[sorted.len() - 1] {
        return (z0, None);
    }
    let mut levels = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let zg = z0 + norm_ppf(g);
        let denom = 1.0 - accel * zg;
        if !(denom > 0.0) {
            return (z0, None);
        }
        levels.push(norm_cdf(z0 + zg / denom));
    }
    (z0, Some(levels))
}

fn corrected(sorted: &[f64], theta_hat: f64, accel: f64, gammas: &[f64]) -> IntervalResult {
    let (z0, levels) = adjusted_levels(sorted, theta_hat, accel, gammas);
    let (levels, fallback) = match levels {
        Some(l) => (l, false),
        None => (gammas.to_vec(), true),
    };
    IntervalResult {
        values: levels.iter().map(|&p| quantile_sorted(sorted, p)).collect(),
        levels,
        z0,
        acceleration: accel,
        fallback,
    }
}

/// Bias-corrected percentile interval (BCa with zero acceleration).
pub fn bias_corrected_ci(replicates: &[f64], theta_hat: f64, request: &PercentileRequest) -> Result<IntervalResult> {
    check_replicates(replicates)?;
    let mut sorted = replicates.to_vec();
    sort_floats(&mut sorted);
    Ok(corrected(&sorted, theta_hat, 0.0, &request.gammas))
}

/// Bias-corrected and accelerated interval.
pub fn bca_ci(
    replicates: &[f64],
    theta_hat: f64,
    jackknife: &[f64],
    request: &PercentileRequest,
) -> Result<IntervalResult> {
    check_replicates(replicates)?;
    if jackknife.len() < 2 {
        return invalid("BCa needs at least two jackknife values");
    }
    let mut sorted = replicates.to_vec();
    sort_floats(&mut sorted);
    Ok(corrected(&sorted, theta_hat, acceleration(jackknife), &request.gammas))
}

/// Dispatches on `method`; `jackknife` is required for BCa.
pub fn interval(
    method: CiMethod,
    replicates: &[f64],
    theta_hat: f64,
    jackknife: Option<&[f64]>,
    request: &PercentileRequest,
) -> Result<IntervalResult> {
    match method {
        CiMethod::Percentile => {
            let values = percentile_ci(replicates, request)?;
            Ok(IntervalResult { values, levels: request.gammas.clone(), z0: 0.0, acceleration: 0.0, fallback: false })
        }
        CiMethod::Bc => bias_corrected_ci(replicates, theta_hat, request),
        CiMethod::Bca => match jackknife {
            Some(j) => bca_ci(replicates, theta_hat, j, request),
            None => invalid("BCa intervals need jackknife values"),
        },
    }
}

/// Per-cell interval used by grid computations. `values` is reordered.
/// Returns the number of levels that fell back to percentile.
pub(crate) fn cell_interval(
    method: CiMethod,
    values: &mut [f64],
    theta_hat: f64,
    jackknife: &[f64],
    gammas: &[f64],
    out: &mut [f64],
) -> bool {
    sort_floats(values);
    let levels = match method {
        CiMethod::Percentile => None,
        CiMethod::Bc => adjusted_levels(values, theta_hat, 0.0, gammas).1,
        CiMethod::Bca => adjusted_levels(values, theta_hat, acceleration(jackknife), gammas).1,
    };
    let fallback = method != CiMethod::Percentile && levels.is_none();
    let levels = levels.unwrap_or_else(|| gammas.to_vec());
    for (o, p) in out.iter_mut().zip(levels) {
        *o = quantile_sorted(values, p);
    }
    fallback
}

/// Per-cell percentiles across a stack of replicate grids, one output grid
/// per requested level, clamped to [0, 1].
pub fn tensor_percentile(stack: &[CdfGrid], request: &PercentileRequest) -> Result<Vec<CdfGrid>> {
    if stack.len() < MIN_REPLICATES {
        return invalid(format!("need at least {MIN_REPLICATES} grids, got {}", stack.len()));
    }
    let first = &stack[0];
    if stack.iter().any(|g| g.axes() != first.axes()) {
        return invalid("all grids in the stack must share axes");
    }
    let cells = first.len();
    let g = request.gammas.len();
    let mut out = vec![0.0; cells * g];
    out.par_chunks_mut(g).enumerate().for_each(|(c, slot)| {
        let mut vals: Vec<f64> = stack.iter().map(|grid| grid.values()[c]).collect();
        sort_floats(&mut vals);
        for (o, &p) in slot.iter_mut().zip(&request.gammas) {
            *o = quantile_sorted(&vals, p).clamp(0.0, 1.0);
        }
    });
    (0..g)
        .map(|k| {
            let values = (0..cells).map(|c| out[c * g + k]).collect();
            let mut grid = CdfGrid::from_values(first.axes().to_vec(), values)?;
            grid.upsample = first.upsample;
            Ok(grid)
        })
        .collect()
}

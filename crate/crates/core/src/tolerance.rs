//! Tolerance baselines: exact one-sided normal tolerance factors from the
//! noncentral t distribution, Bonferroni simultaneous bounds, and elliptical
//! tolerance-region factors for the squared Mahalanobis distance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::mvn::{norm_cdf, norm_pdf, norm_ppf};
use crate::numeric::{integrate, quantile_sorted, solve_increasing, sort_floats};
use crate::rng::derived_rng;
use crate::stats::{sample_mean, sample_std, DataMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    /// population proportion to be covered
    pub beta: f64,
    pub confidence: f64,
    pub n: usize,
}

impl ToleranceSpec {
    pub fn new(beta: f64, confidence: f64, n: usize) -> Result<Self> {
        let s = Self { beta, confidence, n };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) || !(self.confidence > 0.0 && self.confidence < 1.0) {
            return invalid("beta and confidence must lie in (0, 1)");
        }
        if self.n < 2 {
            return invalid(format!("tolerance bounds need n >= 2, got {}", self.n));
        }
        Ok(())
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const LN_SQRT_PI: f64 = 0.572_364_942_924_700_1;

/// Student t CDF with `df` degrees of freedom.
fn t_cdf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let tail = 0.5 * beta_reg(0.5 * df, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Noncentral t CDF P(T <= t) with `df` degrees of freedom and
/// noncentrality `delta` (Lenth's series, with a normal approximation once
/// the Poisson weights underflow).
pub fn noncentral_t_cdf(t: f64, df: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        return t_cdf(t, df);
    }
    if t.is_infinite() {
        return if t < 0.0 { 0.0 } else { 1.0 };
    }
    let (tt, del, negdel) = if t >= 0.0 { (t, delta, false) } else { (-t, -delta, true) };
    if df > 4e5 || del * del > 2.0 * std::f64::consts::LN_2 * 1021.0 {
        let s = 1.0 / (4.0 * df);
        let z = (tt * (1.0 - s) - del) / (1.0 + tt * tt * 2.0 * s).sqrt();
        let p = norm_cdf(z);
        return if negdel { 1.0 - p } else { p };
    }
    let x = tt * tt / (tt * tt + df);
    let mut tnc = 0.0;
    if x > 0.0 {
        let lambda = del * del;
        let mut p = 0.5 * (-0.5 * lambda).exp();
        let mut q = SQRT_2_OVER_PI * p * del;
        let mut s = 0.5 - p;
        if s < 1e-7 {
            s = -0.5 * (-0.5 * lambda).exp_m1();
        }
        let mut a = 0.5;
        let b = 0.5 * df;
        let rxb = (1.0 - x).powf(b);
        let albeta = LN_SQRT_PI + ln_gamma(b) - ln_gamma(0.5 + b);
        let mut xodd = beta_reg(a, b, x);
        let mut godd = 2.0 * rxb * (a * x.ln() - albeta).exp();
        let bx = b * x;
        let mut xeven = if bx < f64::EPSILON { bx } else { 1.0 - rxb };
        let mut geven = bx * rxb;
        tnc = p * xodd + q * xeven;
        for it in 1..=1000 {
            a += 1.0;
            xodd -= godd;
            xeven -= geven;
            godd *= x * (a + b - 1.0) / a;
            geven *= x * (a + b - 0.5) / (a + 0.5);
            p *= lambda / (2 * it) as f64;
            q *= lambda / (2 * it + 1) as f64;
            tnc += p * xodd + q * xeven;
            s -= p;
            if s < -1e-10 || (s <= 0.0 && it > 1) {
                break;
            }
            if (2.0 * s * (xodd - godd)).abs() < 1e-14 {
                break;
            }
        }
    }
    tnc += norm_cdf(-del);
    let tnc = tnc.min(1.0);
    if negdel {
        1.0 - tnc
    } else {
        tnc
    }
}

/// Quantile of the noncentral t distribution.
pub fn noncentral_t_quantile(p: f64, df: f64, delta: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(df > 0.0) {
        return invalid("noncentral t quantile needs 0 < p < 1 and df > 0");
    }
    let spread = (1.0 + delta * delta / (2.0 * df)).sqrt();
    let z = norm_ppf(p);
    let guess = delta + z * spread;
    solve_increasing(|t| noncentral_t_cdf(t, df, delta) - p, guess - 2.0 * spread, guess + 2.0 * spread, 1e-12, 500)
}

/// One-sided normal tolerance factor k with x_bar + k s covering a
/// proportion beta with the given confidence.
pub fn tolerance_factor(spec: &ToleranceSpec) -> Result<f64> {
    spec.validate()?;
    let n = spec.n as f64;
    let delta = n.sqrt() * norm_ppf(spec.beta);
    Ok(noncentral_t_quantile(spec.confidence, n - 1.0, delta)? / n.sqrt())
}

pub fn univariate_upper_tolerance(sample_mean: f64, sample_sd: f64, spec: &ToleranceSpec) -> Result<f64> {
    if !(sample_sd > 0.0) || !sample_sd.is_finite() || !sample_mean.is_finite() {
        return invalid("sample standard deviation must be positive and finite");
    }
    Ok(sample_mean + tolerance_factor(spec)? * sample_sd)
}

/// Per-column upper bounds at Bonferroni-adjusted confidence 1 - alpha / q.
/// `spec.n` is taken from the data.
pub fn simultaneous_upper_tolerance(data: &DataMatrix, spec: &ToleranceSpec) -> Result<Vec<f64>> {
    let q = data.q();
    let adjusted = ToleranceSpec { n: data.n(), confidence: 1.0 - (1.0 - spec.confidence) / q as f64, beta: spec.beta };
    let k = tolerance_factor(&adjusted)?;
    let mean = sample_mean(data);
    let sd = sample_std(data)?;
    Ok((0..q).map(|j| mean[j] + k * sd[j]).collect())
}

/// Inverse CDF of the chi-square distribution.
pub fn chi_square_quantile(prob: f64, dof: usize) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return invalid(format!("probability must lie in (0, 1), got {prob}"));
    }
    if dof == 0 {
        return invalid("chi-square needs at least one degree of freedom");
    }
    let k = dof as f64;
    // solve on whichever tail is smaller for accuracy
    let root = if prob <= 0.5 {
        solve_increasing(|x| chi_square_cdf(x, dof) - prob, 0.0, 2.0 * k, 1e-13, 500)?
    } else {
        solve_increasing(|x| (1.0 - prob) - chi_square_sf(x, dof), 0.0, 2.0 * k, 1e-13, 500)?
    };
    if !root.is_finite() || root > 1e308 {
        return Err(Error::Numerical("chi-square quantile overflow".into()));
    }
    Ok(root)
}

pub fn chi_square_cdf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(0.5 * dof as f64, 0.5 * x)
    }
}

pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(0.5 * dof as f64, 0.5 * x)
    }
}

/// P(sum_i w_i (Y_i - u_i)^2 <= r) for independent standard normal Y,
/// by nested quadrature over the ellipsoid (q <= 2).
fn ellipsoid_coverage(w: &[f64], u: &[f64], r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let p1 = |s: f64| -> f64 {
        let h = (s.max(0.0) / w[0]).sqrt();
        norm_cdf(u[0] + h) - norm_cdf(u[0] - h)
    };
    if w.len() == 1 {
        return p1(r);
    }
    let a = (r / w[1]).sqrt();
    let half_pi = std::f64::consts::FRAC_PI_2;
    integrate(
        |t| {
            let c = t.cos();
            norm_pdf(u[1] + a * t.sin()) * p1(r * c * c) * a * c
        },
        -half_pi,
        half_pi,
        1e-11,
    )
    .clamp(0.0, 1.0)
}

/// Inner coverage threshold for one (mean, covariance) draw.
fn coverage_threshold(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    beta: f64,
    inner: usize,
    rng: &mut crate::rng::Rng,
) -> Result<f64> {
    let q = mean.len();
    let eig = SymmetricEigen::new(cov.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::SingularMatrix);
    }
    let w: Vec<f64> = eig.eigenvalues.iter().map(|l| 1.0 / l).collect();
    let u: Vec<f64> = (eig.eigenvectors.transpose() * mean).iter().copied().collect();
    let scale = eig.eigenvalues.max();
    let start = chi_square_quantile(beta, q)? * scale;
    if q <= 2 {
        return solve_increasing(|r| ellipsoid_coverage(&w, &u, r) - beta, 0.0, 2.0 * start, 1e-10, 500);
    }
    // higher dimensions: the distance distribution is sampled
    let mut d: Vec<f64> = (0..inner)
        .map(|_| {
            (0..q)
                .map(|i| {
                    let y: f64 = StandardNormal.sample(rng);
                    w[i] * (y - u[i]).powi(2)
                })
                .sum()
        })
        .collect();
    sort_floats(&mut d);
    Ok(quantile_sorted(&d, beta))
}

/// Inner samples per outer draw when the coverage is sampled (q >= 3).
pub const INNER_SAMPLES: usize = 10_000;

/// Factor r for which {x : (x - x_bar)' S^-1 (x - x_bar) <= r} covers a
/// proportion beta of the population with the given confidence.
///
/// Each outer draw simulates a standardized mean N(0, I/n) and a Wishart
/// covariance W(I, n - 1)/(n - 1); its coverage threshold is found by
/// root finding on the exact ellipsoid probability (q <= 2) or from inner
/// samples (q >= 3). r is the confidence quantile over outer draws.
pub fn tolerance_region_factor(n: usize, q: usize, beta: f64, confidence: f64, n_mc: usize, seed: u64) -> Result<f64> {
    if q == 0 || n <= q {
        return invalid(format!("tolerance regions need n > q >= 1, got n = {n}, q = {q}"));
    }
    if !(beta > 0.0 && beta < 1.0) || !(confidence > 0.0 && confidence < 1.0) {
        return invalid("beta and confidence must lie in (0, 1)");
    }
    if n_mc == 0 {
        return invalid("n_mc must be positive");
    }
    let nf = n as f64;
    let mut r: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = derived_rng(seed, i as u64);
            let mean = DVector::from_fn(q, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z / nf.sqrt()
            });
            // Bartlett decomposition of W(I, n - 1)
            let mut a = DMatrix::<f64>::zeros(q, q);
            for j in 0..q {
                let dof = (n - 1 - j) as f64;
                let chi = ChiSquared::new(dof).map_err(|e| Error::InvalidInput(e.to_string()))?;
                a[(j, j)] = chi.sample(&mut rng).sqrt();
                for k in 0..j {
                    a[(j, k)] = StandardNormal.sample(&mut rng);
                }
            }
            let cov = &a * a.transpose() / (nf - 1.0);
            coverage_threshold(&mean, &cov, beta, INNER_SAMPLES, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;
    sort_floats(&mut r);
    Ok(quantile_sorted(&r, confidence))
}

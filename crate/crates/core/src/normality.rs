//! Goodness-of-fit diagnostics for squared Mahalanobis distances against a
//! chi-square law: a Monte Carlo QQ envelope, Anderson-Darling and
//! Kolmogorov-Smirnov tests.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mvn::mvn_sample_with;
use crate::numeric::{quantile_sorted, sort_floats};
use crate::rng::derived_rng;
use crate::stats::{mahalanobis_sq_all, DataMatrix, MvnModel};
use crate::tolerance::{chi_square_cdf, chi_square_quantile};

/// One rank of the QQ envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub rank: usize,
    pub lower: f64,
    pub theoretical: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqEnvelope {
    pub n: usize,
    pub q: usize,
    pub confidence: f64,
    pub n_mc: usize,
    pub points: Vec<EnvelopePoint>,
}

impl QqEnvelope {
    /// Whether every sorted value lies inside the band at its rank.
    pub fn contains(&self, values: &[f64]) -> bool {
        if values.len() != self.points.len() {
            return false;
        }
        let mut v = values.to_vec();
        sort_floats(&mut v);
        v.iter().zip(&self.points).all(|(x, p)| *x >= p.lower && *x <= p.upper)
    }
}

/// Monte Carlo envelope for sorted squared Mahalanobis distances of
/// samples of size n from a standard q-variate normal.
pub fn qq_envelope(n: usize, q: usize, confidence: f64, n_mc: usize, seed: u64) -> Result<QqEnvelope> {
    if n <= q + 1 {
        return invalid(format!("envelope needs n > q + 1, got n = {n}, q = {q}"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return invalid("confidence must lie in (0, 1)");
    }
    if n_mc < 2 {
        return invalid("envelope needs at least two trials");
    }
    let model = MvnModel::new(DVector::zeros(q), DMatrix::identity(q, q))?;
    let trials: Vec<Vec<f64>> = (0..n_mc)
        .into_par_iter()
        .map(|t| {
            let mut rng = derived_rng(seed, t as u64);
            let sample: DataMatrix = mvn_sample_with(&model, n, &mut rng)?;
            let mut d = mahalanobis_sq_all(&sample)?;
            sort_floats(&mut d);
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let lo_p = 0.5 * (1.0 - confidence);
    let hi_p = 0.5 * (1.0 + confidence);
    let mut column = vec![0.0; n_mc];
    let mut points = Vec::with_capacity(n);
    for j in 0..n {
        for (c, t) in column.iter_mut().zip(&trials) {
            *c = t[j];
        }
        sort_floats(&mut column);
        points.push(EnvelopePoint {
            rank: j + 1,
            lower: quantile_sorted(&column, lo_p),
            theoretical: chi_square_quantile((j as f64 + 0.5) / n as f64, q)?,
            upper: quantile_sorted(&column, hi_p),
        });
    }
    Ok(QqEnvelope { n, q, confidence, n_mc, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GofKind {
    AndersonDarling,
    KolmogorovSmirnov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofTest {
    pub kind: GofKind,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub dof: usize,
}

pub const MIN_GOF_SAMPLES: usize = 5;

fn sorted_probabilities(d: &[f64], dof: usize) -> Result<Vec<f64>> {
    if d.len() < MIN_GOF_SAMPLES {
        return invalid(format!("goodness-of-fit tests need n >= {MIN_GOF_SAMPLES}, got {}", d.len()));
    }
    if dof == 0 {
        return invalid("chi-square needs at least one degree of freedom");
    }
    if d.iter().any(|x| !x.is_finite()) {
        return invalid("goodness-of-fit input contains non-finite values");
    }
    let mut u: Vec<f64> = d.iter().map(|&x| chi_square_cdf(x, dof)).collect();
    sort_floats(&mut u);
    Ok(u)
}

/// Anderson-Darling test of `d` against a fully specified chi-square law.
pub fn ad_test_chisq(d: &[f64], dof: usize) -> Result<GofTest> {
    let u = sorted_probabilities(d, dof)?;
    let n = u.len();
    let nf = n as f64;
    let tiny = 1e-300;
    let s: f64 = (0..n)
        .map(|i| {
            let lo = u[i].max(tiny).ln();
            let hi = (1.0 - u[n - 1 - i]).max(tiny).ln();
            (2 * i + 1) as f64 * (lo + hi)
        })
        .sum();
    let a2 = -nf - s / nf;
    let cdf = ad_cdf(nf, a2);
    Ok(GofTest { kind: GofKind::AndersonDarling, statistic: a2, p_value: (1.0 - cdf).clamp(0.0, 1.0), n, dof })
}

/// Limiting distribution of the Anderson-Darling statistic (Marsaglia and
/// Marsaglia, 2004).
fn ad_inf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
    } else {
        (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z).exp()).exp()
    }
}

/// Finite-n correction to the limiting law.
fn ad_errfix(n: f64, x: f64) -> f64 {
    if x > 0.8 {
        return (-130.2137 + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * x) * x) * x) * x) * x) / n;
    }
    let c = 0.01265 + 0.1757 / n;
    if x < c {
        let t = x / c;
        let t = t.sqrt() * (1.0 - t) * (49.0 * t - 102.0);
        return t * (0.0037 / (n * n) + 0.00078 / n + 0.00006) / n;
    }
    let t = (x - c) / (0.8 - c);
    let t = -0.00022633 + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * t) * t) * t) * t) * t;
    t * (0.04213 / n + 0.01365 / (n * n))
}

fn ad_cdf(n: f64, z: f64) -> f64 {
    let x = ad_inf(z);
    x + ad_errfix(n, x)
}

/// Kolmogorov-Smirnov test of `d` against a fully specified chi-square law,
/// with the exact finite-sample p-value.
pub fn ks_test_chisq(d: &[f64], dof: usize) -> Result<GofTest> {
    let u = sorted_probabilities(d, dof)?;
    let n = u.len();
    let nf = n as f64;
    let stat = u.iter().enumerate().map(|(i, &v)| ((i + 1) as f64 / nf - v).max(v - i as f64 / nf)).fold(0.0, f64::max);
    Ok(GofTest {
        kind: GofKind::KolmogorovSmirnov,
        statistic: stat,
        p_value: (1.0 - kolmogorov_cdf(n, stat)).clamp(0.0, 1.0),
        n,
        dof,
    })
}

/// P(D_n < d) for the one-sample Kolmogorov statistic (Marsaglia, Tsang and
/// Wang, 2003).
pub fn kolmogorov_cdf(n: usize, d: f64) -> f64 {
    let nf = n as f64;
    if d <= 0.0 {
        return 0.0;
    }
    if d >= 1.0 {
        return 1.0;
    }
    let s = d * d * nf;
    if s > 7.24 || (s > 3.76 && n > 99) {
        return 1.0 - 2.0 * (-(2.000071 + 0.331 / nf.sqrt() + 1.409 / nf) * s).exp();
    }
    let k = (nf * d) as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nf * d;
    let mut hm = DMatrix::<f64>::from_fn(m, m, |i, j| if i + 1 >= j { 1.0 } else { 0.0 });
    for i in 0..m {
        hm[(i, 0)] -= h.powi(i as i32 + 1);
        hm[(m - 1, i)] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[(m - 1, 0)] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..m {
            if i + 1 > j {
                for g in 1..=(i + 1 - j) {
                    hm[(i, j)] /= g as f64;
                }
            }
        }
    }
    let (q, mut e) = matrix_power(&hm, n, k - 1);
    let mut s = q[(k - 1, k - 1)];
    for i in 1..=n {
        s = s * i as f64 / nf;
        if s < 1e-140 {
            s *= 1e140;
            e -= 140;
        }
    }
    (s * 10f64.powi(e)).clamp(0.0, 1.0)
}

/// A^p with a power-of-ten exponent kept separately to avoid overflow.
fn matrix_power(a: &DMatrix<f64>, p: usize, centre: usize) -> (DMatrix<f64>, i32) {
    if p == 1 {
        return (a.clone(), 0);
    }
    let (half, e_half) = matrix_power(a, p / 2, centre);
    let mut v = &half * &half;
    let mut e = 2 * e_half;
    if p % 2 == 1 {
        v = a * v;
    }
    if v[(centre, centre)] > 1e140 {
        v *= 1e-140;
        e += 140;
    }
    (v, e)
}

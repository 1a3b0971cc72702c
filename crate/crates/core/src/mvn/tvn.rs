//! Trivariate normal CDF by reduction to a one-dimensional integral of
//! bivariate probabilities:
//!
//! P(X1<=a1, X2<=a2, X3<=a3) = int_{-inf}^{a_k} phi(t) BVN(c_i(t), c_j(t); r_ij.k) dt
//!
//! where `k` is the conditioning variate and `c_i(t) = (a_i - r_ik t) / sqrt(1 - r_ik^2)`.
//! The integral is evaluated with adaptive Gauss-Kronrod quadrature.

use super::bvn::bvn_cdf;
use super::normal::{norm_cdf, norm_pdf};
use crate::numeric::integrate;

/// Integration floor; the standard normal mass below it is under 1e-19.
pub(crate) const LOWER: f64 = -9.0;

/// Conditional integrand setup for a fixed conditioning variate.
#[derive(Debug, Clone, Copy)]
pub struct Conditioned {
    /// correlations of the two remaining variates with the conditioning one
    r_i: f64,
    r_j: f64,
    s_i: f64,
    s_j: f64,
    /// partial correlation of the remaining pair
    r_ij: f64,
}

impl Conditioned {
    pub fn new(r_ik: f64, r_jk: f64, r_ij: f64) -> Self {
        let s_i = (1.0 - r_ik * r_ik).max(0.0).sqrt();
        let s_j = (1.0 - r_jk * r_jk).max(0.0).sqrt();
        let partial = if s_i > 0.0 && s_j > 0.0 { ((r_ij - r_ik * r_jk) / (s_i * s_j)).clamp(-1.0, 1.0) } else { 0.0 };
        Self { r_i: r_ik, r_j: r_jk, s_i, s_j, r_ij: partial }
    }

    fn limit(a: f64, r: f64, s: f64, t: f64) -> f64 {
        if s > 0.0 {
            (a - r * t) / s
        } else if a - r * t >= 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    }

    /// phi(t) * P(X_i <= a_i, X_j <= a_j | X_k = t)
    #[inline]
    pub fn integrand(&self, t: f64, a_i: f64, a_j: f64) -> f64 {
        let h = Self::limit(a_i, self.r_i, self.s_i, t);
        let k = Self::limit(a_j, self.r_j, self.s_j, t);
        norm_pdf(t) * bvn_cdf(h, k, self.r_ij)
    }

    /// Integral of the conditional integrand over `[lo, hi]`.
    pub fn integrate(&self, lo: f64, hi: f64, a_i: f64, a_j: f64, tol: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        integrate(|t| self.integrand(t, a_i, a_j), lo, hi, tol)
    }
}

/// P(X <= a) for a standard trivariate normal with correlations
/// `r = [r12, r13, r23]`, to absolute accuracy around `tol`.
pub fn tvn_cdf(a: [f64; 3], r: [f64; 3], tol: f64) -> f64 {
    if a.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    if a.iter().any(|&v| v <= -40.0) {
        return 0.0;
    }
    let corr = |i: usize, j: usize| -> f64 {
        match (i.min(j), i.max(j)) {
            (0, 1) => r[0],
            (0, 2) => r[1],
            (1, 2) => r[2],
            _ => 1.0,
        }
    };
    // drop variates whose limit is effectively +inf
    let finite: Vec<usize> = (0..3).filter(|&i| a[i] < 40.0).collect();
    match finite.len() {
        0 => return 1.0,
        1 => return norm_cdf(a[finite[0]]),
        2 => return bvn_cdf(a[finite[0]], a[finite[1]], corr(finite[0], finite[1])),
        _ => {}
    }
    // condition on the variate least correlated with the others
    let k = (0..3)
        .min_by(|&x, &y| {
            let mx = (0..3).filter(|&i| i != x).map(|i| corr(i, x).abs()).fold(0.0, f64::max);
            let my = (0..3).filter(|&i| i != y).map(|i| corr(i, y).abs()).fold(0.0, f64::max);
            mx.total_cmp(&my)
        })
        .unwrap();
    let (i, j) = match k {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let cond = Conditioned::new(corr(i, k), corr(j, k), corr(i, j));
    let hi = a[k].min(-LOWER);
    let mut p = cond.integrate(LOWER, hi, a[i], a[j], tol);
    if a[k] > -LOWER {
        // remaining mass above the integration ceiling
        p += (norm_cdf(a[k]) - norm_cdf(-LOWER)) * bvn_cdf(a[i], a[j], corr(i, j));
    }
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_factorizes() {
        let a = [0.3, -0.7, 1.9];
        let want: f64 = a.iter().map(|&v| norm_cdf(v)).product();
        assert!((tvn_cdf(a, [0.0; 3], 1e-12) - want).abs() < 1e-11);
    }

    #[test]
    fn equicoordinate_independent_value() {
        let v = 1.281_551_565_544_600_5;
        assert!((tvn_cdf([v; 3], [0.0; 3], 1e-12) - 0.729).abs() < 1e-10);
    }

    #[test]
    fn orthant_probability_closed_form() {
        // P(X<0,Y<0,Z<0) = 1/8 + (asin r12 + asin r13 + asin r23) / (4 pi)
        for r in [[0.5f64, 0.5, 0.5], [0.9, -0.3, 0.1], [-0.4, -0.4, 0.2], [0.95, 0.9, 0.92]] {
            let want = 0.125 + (r[0].asin() + r[1].asin() + r[2].asin()) / (4.0 * std::f64::consts::PI);
            let got = tvn_cdf([0.0; 3], r, 1e-12);
            assert!((got - want).abs() < 1e-9, "{r:?}: {got} vs {want}");
        }
    }

    #[test]
    fn reduces_when_a_limit_is_infinite() {
        let got = tvn_cdf([0.4, 50.0, -0.2], [0.3, 0.6, 0.1], 1e-12);
        assert!((got - bvn_cdf(0.4, -0.2, 0.6)).abs() < 1e-14);
        assert_eq!(tvn_cdf([50.0; 3], [0.3, 0.2, 0.1], 1e-12), 1.0);
        assert_eq!(tvn_cdf([0.0, -41.0, 0.0], [0.3, 0.2, 0.1], 1e-12), 0.0);
    }
}

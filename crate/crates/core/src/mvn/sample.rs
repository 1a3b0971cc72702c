//! Random draws from a multivariate normal and C-vine random correlation
//! matrices.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use super::CorrelationMatrix;
use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;
use crate::stats::{DataMatrix, MvnModel};

/// Which factorization produced the sampling matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorKind {
    Cholesky,
    /// Cholesky after adding this value to the diagonal.
    Jittered(f64),
    /// Symmetric square root with negative eigenvalues clipped to zero.
    Eigen,
}

#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    pub kind: FactorKind,
}

impl MvnSampler {
    pub fn new(model: &MvnModel) -> Self {
        let q = model.dim();
        let cov = &model.cov;
        let (factor, kind) = if let Some(ch) = Cholesky::new(cov.clone()) {
            (ch.l(), FactorKind::Cholesky)
        } else {
            let jitter = 1e-12 * cov.trace() / q as f64;
            let bumped = cov + DMatrix::<f64>::identity(q, q) * jitter;
            match Cholesky::new(bumped).filter(|_| jitter > 0.0) {
                Some(ch) => (ch.l(), FactorKind::Jittered(jitter)),
                None => {
                    let eig = SymmetricEigen::new(cov.clone());
                    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                    (eig.eigenvectors * DMatrix::from_diagonal(&root), FactorKind::Eigen)
                }
            }
        };
        Self { mean: model.mean.clone(), factor, kind }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.mean + &self.factor * z
    }

    pub fn draw_matrix<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DataMatrix {
        let q = self.dim();
        let mut out = DMatrix::zeros(n, q);
        for i in 0..n {
            let x = self.draw(rng);
            out.row_mut(i).copy_from(&x.transpose());
        }
        DataMatrix::new(out).expect("finite draws")
    }
}

/// `n` independent draws from `model`.
pub fn mvn_sample(model: &MvnModel, n: usize, seed: u64) -> Result<DataMatrix> {
    mvn_sample_with(model, n, &mut rng_from_seed(seed))
}

pub fn mvn_sample_with<R: Rng + ?Sized>(model: &MvnModel, n: usize, rng: &mut R) -> Result<DataMatrix> {
    if n == 0 {
        return invalid("sample size must be positive");
    }
    Ok(MvnSampler::new(model).draw_matrix(n, rng))
}

/// Random correlation matrix by the C-vine construction: partial
/// correlations on tree level k (1-based) are drawn from a Beta(b, b) on
/// (-1, 1) with b = c + (q - 1 - k) / 2 and mapped to correlations by the
/// partial-correlation recursion.
pub fn cvine_random_correlation(q: usize, c: f64, seed: u64) -> Result<CorrelationMatrix> {
    cvine_random_correlation_with(q, c, &mut rng_from_seed(seed))
}

pub fn cvine_random_correlation_with<R: Rng + ?Sized>(q: usize, c: f64, rng: &mut R) -> Result<CorrelationMatrix> {
    if q < 2 {
        return invalid(format!("C-vine needs q >= 2, got {q}"));
    }
    if !(c > 0.0) || !c.is_finite() {
        return invalid(format!("C-vine concentration must be positive, got {c}"));
    }
    let mut partial = DMatrix::<f64>::zeros(q, q);
    let mut corr = DMatrix::<f64>::identity(q, q);
    let mut shape = c + (q as f64 - 1.0) / 2.0;
    for k in 0..q - 1 {
        shape -= 0.5;
        let beta = Beta::new(shape, shape).map_err(|e| crate::error::Error::InvalidInput(e.to_string()))?;
        for i in k + 1..q {
            let p: f64 = 2.0 * beta.sample(rng) - 1.0;
            let p = p.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
            partial[(k, i)] = p;
            let mut r = p;
            for l in (0..k).rev() {
                r = r * ((1.0 - partial[(l, i)].powi(2)) * (1.0 - partial[(l, k)].powi(2))).sqrt()
                    + partial[(l, i)] * partial[(l, k)];
            }
            corr[(k, i)] = r;
            corr[(i, k)] = r;
        }
    }
    CorrelationMatrix::new(corr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::cov_to_corr;
    use crate::stats::sample_cov;

    #[test]
    fn zero_covariance_repeats_mean() {
        let m = MvnModel::new_psd(DVector::from_vec(vec![3.0, -1.0]), DMatrix::zeros(2, 2)).unwrap();
        let s = MvnSampler::new(&m);
        assert_eq!(s.kind, FactorKind::Eigen);
        let d = mvn_sample(&m, 5, 1).unwrap();
        for i in 0..5 {
            assert_eq!(d.row(i), m.mean);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let m = MvnModel::standard_bivariate(0.4).unwrap();
        assert_eq!(mvn_sample(&m, 100, 42).unwrap(), mvn_sample(&m, 100, 42).unwrap());
        assert_ne!(mvn_sample(&m, 100, 42).unwrap(), mvn_sample(&m, 100, 43).unwrap());
        assert!(mvn_sample(&m, 0, 1).is_err());
    }

    #[test]
    fn large_sample_correlation() {
        let m = MvnModel::standard_bivariate(0.75).unwrap();
        let d = mvn_sample(&m, 1_000_000, 5).unwrap();
        let r = cov_to_corr(&sample_cov(&d).unwrap())[(0, 1)];
        assert!((r - 0.75).abs() < 0.005, "{r}");
    }

    #[test]
    fn rank_deficient_psd_samples() {
        let cov = DMatrix::from_element(2, 2, 1.0);
        let m = MvnModel::new_psd(DVector::zeros(2), cov).unwrap();
        let d = mvn_sample(&m, 50, 3).unwrap();
        for i in 0..50 {
            let r = d.row(i);
            assert!((r[0] - r[1]).abs() < 1e-5);
        }
    }

    #[test]
    fn cvine_validity_and_errors() {
        for seed in 0..200 {
            let c = cvine_random_correlation(5, 2.0, seed).unwrap();
            let eig = SymmetricEigen::new(c.matrix().clone());
            assert!(eig.eigenvalues.min() > -1e-12);
        }
        assert!(cvine_random_correlation(1, 2.0, 0).is_err());
        assert!(cvine_random_correlation(3, 0.0, 0).is_err());
    }

    #[test]
    fn cvine_large_concentration_near_zero() {
        let mut rng = rng_from_seed(11);
        let mean_abs: f64 = (0..10_000)
            .map(|_| cvine_random_correlation_with(2, 1e6, &mut rng).unwrap().matrix()[(0, 1)].abs())
            .sum::<f64>()
            / 1e4;
        assert!(mean_abs < 0.05, "{mean_abs}");
    }

    #[test]
    fn cvine_offdiagonal_symmetric() {
        let mut rng = rng_from_seed(12);
        let mut sum = 0.0;
        let mut count = 0.0;
        for _ in 0..10_000 {
            let c = cvine_random_correlation_with(3, 2.0, &mut rng).unwrap();
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                sum += c.matrix()[(i, j)];
                count += 1.0;
            }
        }
        assert!((sum / count).abs() < 0.02);
    }
}

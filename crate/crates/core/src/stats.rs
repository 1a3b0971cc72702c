//! Sample statistics, the standardization transform and its inverse,
//! squared Mahalanobis distances, and CSV ingestion of observation matrices.

use std::io::Read;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Upper bound on the number of variates handled anywhere in the crate.
pub const MAX_DIM: usize = 16;

/// `n x q` matrix of observations, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return invalid("data matrix is empty");
        }
        if values.ncols() > MAX_DIM {
            return Err(Error::DimensionTooLarge { q: values.ncols(), max: MAX_DIM });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return invalid(format!("non-finite entry at row {r}, column {c}"));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let q = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != q) {
            return invalid(format!("row {bad} has {} columns, expected {q}", rows[bad].len()));
        }
        Self::new(DMatrix::from_fn(rows.len(), q, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn q(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    /// Rows selected by index, with repetition.
    pub fn select_rows(&self, idx: &[usize]) -> DataMatrix {
        DataMatrix { values: self.values.select_rows(idx) }
    }

    /// Drop row `i` (used for leave-one-out jackknife).
    pub fn without_row(&self, i: usize) -> DataMatrix {
        DataMatrix { values: self.values.clone().remove_row(i) }
    }
}

/// Multivariate normal parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvnModel {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl MvnModel {
    /// Validates symmetry, positive semi-definiteness and a strictly positive
    /// diagonal.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let q = mean.len();
        if q == 0 || cov.nrows() != q || cov.ncols() != q {
            return invalid(format!("mean has length {q} but covariance is {}x{}", cov.nrows(), cov.ncols()));
        }
        if q > MAX_DIM {
            return Err(Error::DimensionTooLarge { q, max: MAX_DIM });
        }
        check_symmetric_psd(&cov)?;
        if let Some(j) = (0..q).find(|&j| cov[(j, j)] <= 0.0) {
            return invalid(format!("covariance diagonal entry {j} is not positive"));
        }
        Ok(Self { mean, cov })
    }

    /// Like [`MvnModel::new`] but allows zero variances; used for sampling
    /// degenerate models.
    pub fn new_psd(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let q = mean.len();
        if q == 0 || cov.nrows() != q || cov.ncols() != q {
            return invalid("mean / covariance dimension mismatch");
        }
        check_symmetric_psd(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn standard(corr: DMatrix<f64>) -> Result<Self> {
        let q = corr.nrows();
        Self::new(DVector::zeros(q), corr)
    }

    /// Bivariate model with unit variances and correlation `rho`.
    pub fn standard_bivariate(rho: f64) -> Result<Self> {
        Self::standard(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std_devs(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), (0..self.dim()).map(|i| self.cov[(i, i)].sqrt()))
    }

    pub fn correlation(&self) -> DMatrix<f64> {
        cov_to_corr(&self.cov)
    }

    pub fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.cov.clone()).ok_or(Error::SingularMatrix)
    }
}

fn check_symmetric_psd(cov: &DMatrix<f64>) -> Result<()> {
    let q = cov.nrows();
    let scale = cov.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..q {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                return invalid(format!("covariance not symmetric at ({i}, {j})"));
            }
        }
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return invalid("covariance has non-finite entries");
    }
    let eig = SymmetricEigen::new(cov.clone());
    let max = eig.eigenvalues.max();
    if eig.eigenvalues.min() < -1e-10 * max.abs().max(f64::MIN_POSITIVE) {
        return invalid("covariance is not positive semi-definite");
    }
    Ok(())
}

/// Converts a covariance matrix to a correlation matrix.
pub fn cov_to_corr(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let q = cov.nrows();
    let sd: Vec<f64> = (0..q).map(|i| cov[(i, i)].sqrt()).collect();
    DMatrix::from_fn(q, q, |i, j| if i == j { 1.0 } else { cov[(i, j)] / (sd[i] * sd[j]) })
}

pub fn sample_mean(data: &DataMatrix) -> DVector<f64> {
    let n = data.n() as f64;
    DVector::from_iterator(data.q(), data.values.column_iter().map(|c| c.sum() / n))
}

/// Unbiased (`n - 1` denominator) sample covariance.
pub fn sample_cov(data: &DataMatrix) -> Result<DMatrix<f64>> {
    let n = data.n();
    if n < 2 {
        return Err(Error::InsufficientSamples { got: n, min: 2 });
    }
    let mean = sample_mean(data);
    let mut centered = data.values.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let mut s = centered.transpose() * &centered / (n as f64 - 1.0);
    // exact symmetry
    for i in 0..s.nrows() {
        for j in 0..i {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

pub fn sample_std(data: &DataMatrix) -> Result<DVector<f64>> {
    let s = sample_cov(data)?;
    Ok(DVector::from_iterator(s.nrows(), (0..s.nrows()).map(|i| s[(i, i)].sqrt())))
}

/// Sample mean and covariance as a validated model.
pub fn fit_mvn(data: &DataMatrix) -> Result<MvnModel> {
    MvnModel::new(sample_mean(data), sample_cov(data)?)
}

/// Data mapped to zero mean and unit sample variance per column.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedData {
    pub values: DataMatrix,
    pub centering: DVector<f64>,
    pub scaling: DVector<f64>,
}

impl StandardizedData {
    /// Maps points from the standardized domain back to the data domain.
    pub fn to_original(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        destandardize(points, &self.centering, &self.scaling)
    }
}

pub fn standardize(data: &DataMatrix) -> Result<StandardizedData> {
    let centering = sample_mean(data);
    let scaling = sample_std(data)?;
    if let Some(column) = scaling.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::DegenerateColumn { column });
    }
    let mut values = data.values.clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        col.apply(|v| *v = (*v - centering[j]) / scaling[j]);
    }
    Ok(StandardizedData { values: DataMatrix { values }, centering, scaling })
}

/// Inverse of [`standardize`]: `x = z * scaling + centering` column-wise.
pub fn destandardize(points: &DMatrix<f64>, centering: &DVector<f64>, scaling: &DVector<f64>) -> Result<DMatrix<f64>> {
    let q = points.ncols();
    if centering.len() != q || scaling.len() != q {
        return invalid(format!(
            "points have {q} columns but centering/scaling have {}/{}",
            centering.len(),
            scaling.len()
        ));
    }
    if scaling.iter().any(|s| !(*s > 0.0)) {
        return invalid("scaling must be strictly positive");
    }
    let mut out = points.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.apply(|v| *v = *v * scaling[j] + centering[j]);
    }
    Ok(out)
}

pub fn mahalanobis_sq(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mean.len() || cov.nrows() != x.len() || cov.ncols() != x.len() {
        return invalid("mahalanobis: dimension mismatch");
    }
    let chol = Cholesky::new(cov.clone()).ok_or(Error::SingularMatrix)?;
    Ok(mahalanobis_with(&chol, x, mean))
}

fn mahalanobis_with(chol: &Cholesky<f64, Dyn>, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
    let diff = x - mean;
    let y = chol.l_dirty().solve_lower_triangular(&diff).expect("cholesky factor has nonzero diagonal");
    y.norm_squared()
}

/// Squared Mahalanobis distance of every row against the sample mean and
/// covariance.
pub fn mahalanobis_sq_all(data: &DataMatrix) -> Result<Vec<f64>> {
    let mean = sample_mean(data);
    let cov = sample_cov(data)?;
    let chol = Cholesky::new(cov).ok_or(Error::SingularMatrix)?;
    Ok((0..data.n()).map(|i| mahalanobis_with(&chol, &data.row(i), &mean)).collect())
}

/// CSV reading options for observation matrices.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// `None` detects a header by checking whether the first line parses as numbers.
    pub has_header: Option<bool>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { delimiter: b',', has_header: None }
    }
}

/// Parsed CSV: the data plus column names when a header was present.
#[derive(Debug, Clone)]
pub struct CsvData {
    pub data: DataMatrix,
    pub header: Option<Vec<String>>,
}

pub fn read_csv_path(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<CsvData> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, opts)
}

pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<CsvData> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header = None;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(idx + 1, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if first.len() != row.len() {
                        return Err(Error::Parse {
                            line,
                            msg: format!("expected {} fields, found {}", first.len(), row.len()),
                        });
                    }
                }
                rows.push(row);
            }
            Err(e) => {
                let header_allowed = rows.is_empty() && header.is_none() && opts.has_header != Some(false);
                if header_allowed {
                    header = Some(rec.iter().map(str::to_string).collect());
                } else {
                    return Err(Error::Parse { line, msg: format!("non-numeric field: {e}") });
                }
            }
        }
        if idx == 0 && opts.has_header == Some(true) && header.is_none() {
            // declared header that happened to parse as numbers
            header = Some(rec.iter().map(str::to_string).collect());
            rows.clear();
        }
    }
    if rows.is_empty() {
        return invalid("CSV contains no data rows");
    }
    Ok(CsvData { data: DataMatrix::from_rows(&rows)?, header })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture_data;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mean_of_constant_and_single_row() {
        let d = DataMatrix::from_rows(&[vec![5.0], vec![5.0], vec![5.0]]).unwrap();
        assert_eq!(sample_mean(&d)[0], 5.0);
        let d = DataMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(sample_mean(&d).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn mean_of_fixture_x_column() {
        // 47.39 / 9
        let m = sample_mean(&fixture_data());
        assert!(close(m[0], 5.2656, 1e-4), "{}", m[0]);
    }

    #[test]
    fn covariance_hand_cases() {
        let d = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(sample_cov(&d).unwrap(), DMatrix::zeros(2, 2));
        let d = DataMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let s = sample_cov(&d).unwrap();
        assert!(s.iter().all(|v| close(*v, 0.5, 1e-15)));
        let one = DataMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(sample_cov(&one), Err(Error::InsufficientSamples { got: 1, min: 2 })));
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(DataMatrix::new(DMatrix::zeros(0, 2)).is_err());
        assert!(DataMatrix::from_rows(&[vec![1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn standardize_degenerate_column_is_named() {
        let d = DataMatrix::from_rows(&[vec![1.0, 3.0], vec![2.0, 3.0], vec![4.0, 3.0]]).unwrap();
        match standardize(&d) {
            Err(Error::DegenerateColumn { column }) => assert_eq!(column, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn standardize_affine_invariance() {
        let d = fixture_data();
        let shifted = DataMatrix::new(d.values().map(|v| 10.0 * v + 7.0)).unwrap();
        let a = standardize(&d).unwrap();
        let b = standardize(&shifted).unwrap();
        assert!((a.values.values() - b.values.values()).amax() < 1e-10);
    }

    #[test]
    fn standardized_fixture_moments() {
        let z = standardize(&fixture_data()).unwrap();
        let m = sample_mean(&z.values);
        let s = sample_cov(&z.values).unwrap();
        for j in 0..3 {
            assert!(m[j].abs() < 1e-10);
            assert!(close(s[(j, j)], 1.0, 1e-8));
        }
    }

    #[test]
    fn destandardize_cases() {
        let mu = DVector::from_vec(vec![1.0, -2.0]);
        let sd = DVector::from_vec(vec![2.0, 3.0]);
        let z = DMatrix::zeros(1, 2);
        assert_eq!(destandardize(&z, &mu, &sd).unwrap().row(0).transpose(), mu);
        let v = DMatrix::from_element(1, 2, 1.5);
        let x = destandardize(&v, &mu, &sd).unwrap();
        assert_eq!(x[(0, 0)], 1.5 * 2.0 + 1.0);
        assert_eq!(x[(0, 1)], 1.5 * 3.0 - 2.0);
        assert!(destandardize(&DMatrix::zeros(1, 3), &mu, &sd).is_err());
    }

    #[test]
    fn mahalanobis_trivial_cases() {
        let m = DVector::from_vec(vec![1.0, 1.0]);
        let i2 = DMatrix::identity(2, 2);
        assert_eq!(mahalanobis_sq(&m, &m, &i2).unwrap(), 0.0);
        let x = DVector::from_vec(vec![4.0, 5.0]);
        assert!(close(mahalanobis_sq(&x, &m, &i2).unwrap(), 25.0, 1e-12));
        let singular = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(mahalanobis_sq(&x, &m, &singular), Err(Error::SingularMatrix)));
    }

    #[test]
    fn fixture_first_row_distance() {
        let d = fixture_data();
        let v = mahalanobis_sq(&d.row(0), &sample_mean(&d), &sample_cov(&d).unwrap()).unwrap();
        assert!(close(v, 4.99, 0.01), "{v}");
    }

    #[test]
    fn two_point_distances_equal() {
        let d = DataMatrix::from_rows(&[vec![0.0], vec![3.0]]).unwrap();
        let v = mahalanobis_sq_all(&d).unwrap();
        assert!(close(v[0], v[1], 1e-14));
    }

    #[test]
    fn model_validation() {
        let mean = DVector::zeros(2);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(MvnModel::new(mean.clone(), asym).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(MvnModel::new(mean.clone(), indefinite).is_err());
        let zero_diag = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(MvnModel::new(mean.clone(), zero_diag.clone()).is_err());
        assert!(MvnModel::new_psd(mean, zero_diag).is_ok());
    }

    #[test]
    fn csv_header_detection_and_errors() {
        let text = "x,y\n1,2\n3,4\n";
        let parsed = read_csv(text.as_bytes(), &CsvOptions::default()).unwrap();
        assert_eq!(parsed.header.unwrap(), vec!["x", "y"]);
        assert_eq!(parsed.data.n(), 2);

        let parsed = read_csv("1;2\n3;4\n".as_bytes(), &CsvOptions { delimiter: b';', has_header: None }).unwrap();
        assert!(parsed.header.is_none());
        assert_eq!(parsed.data.values()[(1, 1)], 4.0);

        match read_csv("x,y\n1,2\n3,oops\n".as_bytes(), &CsvOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match read_csv("1,2\n3\n".as_bytes(), &CsvOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}

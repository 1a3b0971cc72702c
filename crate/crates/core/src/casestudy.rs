//! Multi-axis test specification from per-frequency shock response
//! spectrum samples: normality diagnostics, the upper critical point and
//! per-axis tolerance baselines at every frequency.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::algorithm3_critical_point_ci;
use crate::bootstrap::{BootstrapConfig, CiMethod, PercentileRequest, ResampleStyle};
use crate::error::{invalid, Error, Result};
use crate::fixtures::{fixture_data, FIXTURE_AXES, FIXTURE_FREQUENCY_HZ};
use crate::mvn::CdfAccuracy;
use crate::normality::{ad_test_chisq, ks_test_chisq, qq_envelope};
use crate::rng::derive_seed;
use crate::stats::{mahalanobis_sq_all, read_csv_path, sample_mean, sample_std, CsvOptions, DataMatrix};
use crate::tolerance::{simultaneous_upper_tolerance, univariate_upper_tolerance, ToleranceSpec};

/// Frequency, sample ids in order of appearance, values by (sample, axis).
type FrequencyBlock = (f64, Vec<String>, BTreeMap<(String, String), f64>);

/// Per-frequency observation matrices sharing sample count and axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SrsEnsemble {
    frequencies: Vec<f64>,
    data: Vec<DataMatrix>,
    axes: Vec<String>,
}

impl SrsEnsemble {
    pub fn new(frequencies: Vec<f64>, data: Vec<DataMatrix>, axes: Vec<String>) -> Result<Self> {
        if frequencies.is_empty() || frequencies.len() != data.len() {
            return invalid("need one data matrix per frequency and at least one frequency");
        }
        if frequencies.iter().any(|f| !f.is_finite()) || frequencies.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("frequencies must be finite and strictly increasing");
        }
        let (n, q) = (data[0].n(), data[0].q());
        if data.iter().any(|d| d.n() != n || d.q() != q) {
            return invalid("all frequencies must share the sample count and axes");
        }
        if axes.len() != q {
            return invalid(format!("{} axis labels for {q} axes", axes.len()));
        }
        Ok(Self { frequencies, data, axes })
    }

    /// The embedded nine-shock tri-axial sample at 200.24 Hz.
    pub fn fixture() -> Self {
        Self {
            frequencies: vec![FIXTURE_FREQUENCY_HZ],
            data: vec![fixture_data()],
            axes: FIXTURE_AXES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn data(&self) -> &[DataMatrix] {
        &self.data
    }

    pub fn axes(&self) -> &[String] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Reads long-format CSV with columns frequency, sample_id, axis, value.
    /// Axes and samples keep their order of first appearance.
    pub fn from_long_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Record {
            frequency: f64,
            sample_id: String,
            axis: String,
            value: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut axes: Vec<String> = Vec::new();
        // keyed by the bit pattern of the frequency, ordered numerically below
        let mut by_freq: BTreeMap<u64, FrequencyBlock> = BTreeMap::new();
        for (i, rec) in rdr.deserialize::<Record>().enumerate() {
            let rec = rec.map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })?;
            if !rec.value.is_finite() || !rec.frequency.is_finite() {
                return Err(Error::Parse { line: i + 2, msg: "non-finite value".into() });
            }
            if !axes.contains(&rec.axis) {
                axes.push(rec.axis.clone());
            }
            let entry =
                by_freq.entry(rec.frequency.to_bits()).or_insert_with(|| (rec.frequency, Vec::new(), BTreeMap::new()));
            if !entry.1.contains(&rec.sample_id) {
                entry.1.push(rec.sample_id.clone());
            }
            if entry.2.insert((rec.sample_id.clone(), rec.axis.clone()), rec.value).is_some() {
                return Err(Error::Parse {
                    line: i + 2,
                    msg: format!("duplicate value for sample '{}' axis '{}'", rec.sample_id, rec.axis),
                });
            }
        }
        let mut groups: Vec<_> = by_freq.into_values().collect();
        groups.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut frequencies = Vec::with_capacity(groups.len());
        let mut data = Vec::with_capacity(groups.len());
        for (f, samples, values) in groups {
            let mut rows = Vec::with_capacity(samples.len());
            for s in &samples {
                let row = axes
                    .iter()
                    .map(|a| {
                        values.get(&(s.clone(), a.clone())).copied().ok_or_else(|| {
                            Error::InvalidInput(format!("frequency {f}: sample '{s}' has no value for axis '{a}'"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(row);
            }
            frequencies.push(f);
            data.push(DataMatrix::from_rows(&rows)?);
        }
        Self::new(frequencies, data, axes)
    }

    /// Reads a directory of per-frequency CSV files. Each file holds one row
    /// per sample and one column per axis; the frequency is the number in
    /// the file stem, as in `200.24.csv` or `srs_200.24Hz.csv`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                let f = frequency_from_stem(stem)
                    .ok_or_else(|| Error::InvalidInput(format!("no frequency in file name '{}'", path.display())))?;
                entries.push((f, path));
            }
        }
        if entries.is_empty() {
            return invalid(format!("no CSV files in {}", dir.display()));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut axes: Option<Vec<String>> = None;
        let mut frequencies = Vec::new();
        let mut data = Vec::new();
        for (f, path) in entries {
            let csv = read_csv_path(&path, &CsvOptions::default())?;
            let labels = csv.header.unwrap_or_else(|| (0..csv.data.q()).map(|j| format!("axis{}", j + 1)).collect());
            match &axes {
                None => axes = Some(labels),
                Some(a) if *a != labels => {
                    return invalid(format!("{} has axes {labels:?}, expected {a:?}", path.display()));
                }
                _ => {}
            }
            frequencies.push(f);
            data.push(csv.data);
        }
        Self::new(frequencies, data, axes.unwrap_or_default())
    }

    /// Writes the ensemble in long format.
    pub fn write_long_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["frequency", "sample_id", "axis", "value"])?;
        for (f, d) in self.frequencies.iter().zip(&self.data) {
            for i in 0..d.n() {
                for (j, a) in self.axes.iter().enumerate() {
                    out.write_record([f.to_string(), (i + 1).to_string(), a.clone(), d.values()[(i, j)].to_string()])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn frequency_from_stem(stem: &str) -> Option<f64> {
    let start = stem.find(|c: char| c.is_ascii_digit())?;
    let tail = &stem[start..];
    let end = tail.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(tail.len());
    tail[..end].trim_end_matches('.').parse().ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseStudyConfig {
    pub tau: f64,
    pub confidence: f64,
    pub bootstrap: BootstrapConfig,
    pub accuracy: CdfAccuracy,
    /// significance level of the normality tests
    pub alpha: f64,
    pub envelope_trials: usize,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        Self {
            tau: 0.9,
            confidence: 0.95,
            bootstrap: BootstrapConfig {
                b: 2000,
                style: ResampleStyle::Nonparametric,
                ci_method: CiMethod::Bca,
                seed: 0,
            },
            accuracy: CdfAccuracy::default(),
            alpha: 0.05,
            envelope_trials: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityFlags {
    pub ad_p: f64,
    pub ks_p: f64,
    pub qq_pass: bool,
    /// all three checks pass at the configured significance
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificationLine {
    pub frequency: f64,
    pub critical_point_ci: Vec<f64>,
    pub univariate_tolerance: Vec<f64>,
    pub bonferroni_tolerance: Vec<f64>,
    pub normality: Option<NormalityFlags>,
    /// set when this frequency could not be processed
    pub error: Option<String>,
}

fn normality_flags(data: &DataMatrix, config: &CaseStudyConfig, seed: u64) -> Result<NormalityFlags> {
    let d = mahalanobis_sq_all(data)?;
    let q = data.q();
    let ad_p = ad_test_chisq(&d, q)?.p_value;
    let ks_p = ks_test_chisq(&d, q)?.p_value;
    let qq_pass = qq_envelope(data.n(), q, config.confidence, config.envelope_trials, seed)?.contains(&d);
    Ok(NormalityFlags { ad_p, ks_p, qq_pass, passed: qq_pass && ad_p >= config.alpha && ks_p >= config.alpha })
}

fn process(data: &DataMatrix, frequency: f64, config: &CaseStudyConfig, seed: u64) -> Result<SpecificationLine> {
    let n = data.n();
    let q = data.q();
    if n <= q {
        return Err(Error::InsufficientSamples { got: n, min: q + 1 });
    }
    let bootstrap = BootstrapConfig { seed, ..config.bootstrap };
    let request = PercentileRequest::one_sided(config.confidence)?;
    let cp = algorithm3_critical_point_ci(data, config.tau, &request, &bootstrap, &config.accuracy)?;
    let spec = ToleranceSpec::new(config.tau, config.confidence, n)?;
    let mean = sample_mean(data);
    let sd = sample_std(data)?;
    let univariate = (0..q).map(|j| univariate_upper_tolerance(mean[j], sd[j], &spec)).collect::<Result<Vec<f64>>>()?;
    let bonferroni = simultaneous_upper_tolerance(data, &spec)?;
    let normality = normality_flags(data, config, derive_seed(seed, 1)).ok();
    Ok(SpecificationLine {
        frequency,
        critical_point_ci: cp.points[0].clone(),
        univariate_tolerance: univariate,
        bonferroni_tolerance: bonferroni,
        normality,
        error: None,
    })
}

/// Processes every frequency. Failures are reported on their own line
/// rather than aborting the run.
pub fn run_case_study(ensemble: &SrsEnsemble, config: &CaseStudyConfig) -> Result<Vec<SpecificationLine>> {
    if !(config.tau > 0.0 && config.tau < 1.0) || !(config.confidence > 0.0 && config.confidence < 1.0) {
        return invalid("tau and confidence must lie in (0, 1)");
    }
    config.bootstrap.validate()?;
    Ok(ensemble
        .frequencies
        .par_iter()
        .zip(&ensemble.data)
        .enumerate()
        .map(|(i, (&f, d))| {
            process(d, f, config, derive_seed(config.bootstrap.seed, i as u64)).unwrap_or_else(|e| SpecificationLine {
                frequency: f,
                critical_point_ci: Vec::new(),
                univariate_tolerance: Vec::new(),
                bonferroni_tolerance: Vec::new(),
                normality: None,
                error: Some(e.to_string()),
            })
        })
        .collect())
}

/// Writes the specification in the three-interval layout: one row per
/// frequency and interval type, one column per axis.
pub fn write_specification_csv<W: Write>(lines: &[SpecificationLine], axes: &[String], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["frequency".to_string(), "interval".to_string()];
    header.extend(axes.iter().cloned());
    out.write_record(&header)?;
    for l in lines.iter().filter(|l| l.error.is_none()) {
        for (name, v) in [
            ("critical_point", &l.critical_point_ci),
            ("univariate_tolerance", &l.univariate_tolerance),
            ("bonferroni_tolerance", &l.bonferroni_tolerance),
        ] {
            let mut rec = vec![l.frequency.to_string(), name.to_string()];
            rec.extend(v.iter().map(|x| format!("{x:.4}")));
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes per-frequency normality diagnostics and errors.
pub fn write_diagnostics_csv<W: Write>(lines: &[SpecificationLine], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["frequency", "ad_p", "ks_p", "qq_pass", "normality_passed", "error"])?;
    for l in lines {
        let (ad, ks, qq, ok) = match l.normality {
            Some(n) => {
                (format!("{:.4}", n.ad_p), format!("{:.4}", n.ks_p), n.qq_pass.to_string(), n.passed.to_string())
            }
            None => Default::default(),
        };
        out.write_record([l.frequency.to_string(), ad, ks, qq, ok, l.error.clone().unwrap_or_default()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_specification() {
        let lines = run_case_study(&SrsEnsemble::fixture(), &CaseStudyConfig::default()).unwrap();
        assert_eq!(lines.len(), 1);
        let l = &lines[0];
        assert!(l.error.is_none());
        for (got, want) in l.critical_point_ci.iter().zip([10.0476, 18.2621, 4.5783]) {
            assert!((got / want - 1.0).abs() < 0.03, "{got} vs {want}");
        }
        for (got, want) in l.univariate_tolerance.iter().zip([9.0081, 15.9969, 4.5694]) {
            assert!((got - want).abs() < 0.01);
        }
        for (got, want) in l.bonferroni_tolerance.iter().zip([9.8128, 17.7368, 4.8529]) {
            assert!((got - want).abs() < 0.01);
        }
        for j in 0..3 {
            assert!(l.critical_point_ci[j] > l.univariate_tolerance[j]);
        }
        let norm = l.normality.unwrap();
        assert!(norm.passed && norm.qq_pass);
    }

    #[test]
    fn output_is_deterministic() {
        let config = CaseStudyConfig {
            bootstrap: BootstrapConfig { b: 200, seed: 9, ..CaseStudyConfig::default().bootstrap },
            envelope_trials: 200,
            ..CaseStudyConfig::default()
        };
        let a = run_case_study(&SrsEnsemble::fixture(), &config).unwrap();
        let b = run_case_study(&SrsEnsemble::fixture(), &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_axis_reduces_to_univariate() {
        let x = DataMatrix::from_rows(&crate::fixtures::FIXTURE_ROWS.iter().map(|r| vec![r[0]]).collect::<Vec<_>>())
            .unwrap();
        let e = SrsEnsemble::new(vec![100.0], vec![x.clone()], vec!["X".into()]).unwrap();
        let l = &run_case_study(&e, &CaseStudyConfig::default()).unwrap()[0];
        assert!(l.error.is_none(), "{:?}", l.error);
        assert_eq!(l.univariate_tolerance, l.bonferroni_tolerance);
        // an upper bound on the 0.9 quantile above the plug-in estimate
        let plug_in = sample_mean(&x)[0] + 1.281_551_565_544_600_5 * sample_std(&x).unwrap()[0];
        assert!(l.critical_point_ci[0] > plug_in);
        assert!((l.critical_point_ci[0] / l.univariate_tolerance[0] - 1.0).abs() < 0.15);
    }

    #[test]
    fn degenerate_frequency_is_reported_per_line() {
        let good = fixture_data();
        let flat = DataMatrix::from_rows(&vec![vec![1.0, 2.0, 3.0]; 9]).unwrap();
        let e = SrsEnsemble::new(
            vec![100.0, 200.0],
            vec![flat, good],
            FIXTURE_AXES.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap();
        let config = CaseStudyConfig {
            bootstrap: BootstrapConfig { b: 200, ..CaseStudyConfig::default().bootstrap },
            envelope_trials: 200,
            ..CaseStudyConfig::default()
        };
        let lines = run_case_study(&e, &config).unwrap();
        assert!(lines[0].error.is_some());
        assert!(lines[1].error.is_none());
        let mut buf = Vec::new();
        write_specification_csv(&lines, e.axes(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("frequency,interval,X,Y,Z\n200,critical_point,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn long_csv_round_trip_and_directory_ingest() {
        let e = SrsEnsemble::fixture();
        let mut buf = Vec::new();
        e.write_long_csv(&mut buf).unwrap();
        assert_eq!(SrsEnsemble::from_long_csv(buf.as_slice()).unwrap(), e);

        let missing = "frequency,sample_id,axis,value\n10,1,X,1.0\n10,1,Y,2.0\n10,2,X,1.5\n";
        assert!(SrsEnsemble::from_long_csv(missing.as_bytes()).is_err());

        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("srs_50Hz.csv"), "X,Y\n1,2\n2,3.5\n3,3\n4,6\n").unwrap();
        std::fs::write(dir.path().join("12.5.csv"), "X,Y\n1,1\n2,2.5\n3,2\n4,5\n").unwrap();
        let d = SrsEnsemble::from_dir(dir.path()).unwrap();
        assert_eq!(d.frequencies(), &[12.5, 50.0]);
        assert_eq!(d.axes(), &["X".to_string(), "Y".to_string()]);
        assert!(SrsEnsemble::new(vec![2.0, 1.0], d.data().to_vec(), d.axes().to_vec()).is_err());
    }
}

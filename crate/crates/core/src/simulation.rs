//! Monte Carlo studies of the three procedures: containment of the true
//! joint probability (Algorithm 1), coverage of the upper quantile
//! confidence set (Algorithm 2) and exceedance of the upper critical point
//! (Algorithm 3).

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{algorithm1_joint_tau_uq, algorithm3_critical_point_ci, quantile_ci_grids};
use crate::bootstrap::{BootstrapConfig, CiMethod, PercentileRequest};
use crate::error::{invalid, Error, Result};
use crate::mesh::{GridLevel, GridSpec};
use crate::mvn::{cvine_random_correlation_with, mvn_cdf, mvn_sample_with, CdfAccuracy, CorrelationMatrix};
use crate::quantile::{coverage_from_samples, coverage_samples, joint_quantile_probability, CdfLevel};
use crate::rng::{derive_seed, derived_rng};
use crate::stats::MvnModel;

pub const MIN_TRIALS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Alg1,
    Alg2,
    Alg3,
}

impl std::str::FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alg1" | "1" => Ok(Study::Alg1),
            "alg2" | "2" => Ok(Study::Alg2),
            "alg3" | "3" => Ok(Study::Alg3),
            _ => Err(Error::InvalidInput(format!("unknown study '{s}', expected alg1, alg2 or alg3"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub study: Study,
    pub q_list: Vec<usize>,
    pub n_list: Vec<usize>,
    /// individual quantile probability for alg1, joint tau otherwise
    pub tau_list: Vec<f64>,
    /// bivariate correlations for alg2
    pub rho_list: Vec<f64>,
    pub mc_trials: usize,
    pub bootstrap: BootstrapConfig,
    pub cvine_c: f64,
    pub seed: u64,
    pub confidence: f64,
    /// standardized grid step for alg2
    pub grid_step: f64,
    /// population sample shared by all alg2 trials of a cell
    pub coverage_samples: usize,
    pub accuracy: CdfAccuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Full,
}

impl StudyConfig {
    pub fn preset(study: Study, preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self::desk(study),
            Preset::Full => Self::full(study),
        }
    }
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self::desk(Study::Alg3)
    }
}

impl StudyConfig {
    /// Reduced scale: 50 trials and 200 resamples per trial.
    pub fn desk(study: Study) -> Self {
        let mut c = Self::full(study);
        c.mc_trials = 50;
        c.bootstrap.b = 200;
        c.grid_step = 0.05;
        c
    }

    /// The parameter grids and trial counts of the full-scale study.
    pub fn full(study: Study) -> Self {
        let (q_list, n_list, tau_list, mc_trials) = match study {
            Study::Alg1 => (vec![2, 3, 4], vec![30, 300, 3000], vec![0.9], 100),
            Study::Alg2 => (vec![2], vec![30, 300], vec![0.7, 0.8, 0.9], 250),
            Study::Alg3 => (vec![2, 3, 4], vec![30, 300], vec![0.7, 0.8, 0.9], 250),
        };
        Self {
            study,
            q_list,
            n_list,
            tau_list,
            rho_list: vec![-0.9, 0.0, 0.9],
            mc_trials,
            bootstrap: BootstrapConfig { b: 1000, ci_method: CiMethod::Bca, ..BootstrapConfig::default() },
            cvine_c: 2.0,
            seed: 0,
            confidence: 0.95,
            grid_step: 0.01,
            coverage_samples: 100_000,
            accuracy: CdfAccuracy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mc_trials < MIN_TRIALS {
            return invalid(format!("mc_trials must be at least {MIN_TRIALS}, got {}", self.mc_trials));
        }
        if self.n_list.is_empty() || self.tau_list.is_empty() {
            return invalid("parameter grids must be nonempty");
        }
        if self.study != Study::Alg2 && self.q_list.is_empty() {
            return invalid("q_list must be nonempty");
        }
        if self.study == Study::Alg2 && self.rho_list.is_empty() {
            return invalid("rho_list must be nonempty");
        }
        if self.tau_list.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return invalid("tau values must lie in (0, 1)");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return invalid("confidence must lie in (0, 1)");
        }
        if self.rho_list.iter().any(|r| !(r.abs() < 1.0)) {
            return invalid("correlations must lie in (-1, 1)");
        }
        self.bootstrap.validate()?;
        self.accuracy.validate()
    }
}

/// One cell of a study table. Columns not used by a study are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub q: usize,
    pub n: usize,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub p: f64,
    pub trials: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub study: Study,
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    pub fn mean_p(&self) -> f64 {
        self.rows.iter().map(|r| r.p).sum::<f64>() / self.rows.len().max(1) as f64
    }

    /// Writes the table with the study's column layout.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        match self.study {
            Study::Alg1 => out.write_record(["q", "n", "p"])?,
            Study::Alg2 => out.write_record(["rho", "tau", "n", "p"])?,
            Study::Alg3 => out.write_record(["q", "n", "tau", "p"])?,
        }
        for r in &self.rows {
            let tau = r.tau.map(|t| t.to_string()).unwrap_or_default();
            let rho = r.rho.map(|t| t.to_string()).unwrap_or_default();
            let p = format!("{:.3}", r.p);
            match self.study {
                Study::Alg1 => out.write_record([r.q.to_string(), r.n.to_string(), p])?,
                Study::Alg2 => out.write_record([rho, tau, r.n.to_string(), p])?,
                Study::Alg3 => out.write_record([r.q.to_string(), r.n.to_string(), tau, p])?,
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub version: String,
    pub config: StudyConfig,
    pub table: StudyTable,
    pub mean_p: f64,
    pub seconds: f64,
}

/// Wilson score interval for a proportion observed over `n` trials.
pub fn wilson_interval(p: f64, n: usize, z: f64) -> (f64, f64) {
    let n = n as f64;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn cell_bootstrap(config: &StudyConfig, seed: u64) -> BootstrapConfig {
    BootstrapConfig { seed, ..config.bootstrap }
}

/// Fraction of trials returning true; trials run in parallel with seeds
/// derived from the cell seed.
fn run_trials<F>(trials: usize, cell_seed: u64, trial: F) -> Result<f64>
where
    F: Fn(u64) -> Result<bool> + Sync,
{
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| trial(derive_seed(cell_seed, t as u64)).map(usize::from))
        .collect::<Result<Vec<usize>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / trials as f64)
}

fn random_model(q: usize, c: f64, mean_range: f64, rng: &mut crate::rng::Rng) -> Result<(CorrelationMatrix, MvnModel)> {
    let corr = cvine_random_correlation_with(q, c, rng)?;
    let mean = DVector::from_fn(q, |_, _| rng.random::<f64>() * mean_range);
    let model = MvnModel::new(mean, corr.matrix().clone())?;
    Ok((corr, model))
}

/// Containment of the true joint probability by the two-sided interval.
pub fn run_study_alg1(config: &StudyConfig) -> Result<StudyTable> {
    config.validate()?;
    let request = PercentileRequest::two_sided(config.confidence)?;
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &q in &config.q_list {
        for &n in &config.n_list {
            for &tau in &config.tau_list {
                let start = Instant::now();
                let cell_seed = derive_seed(config.seed, cell);
                cell += 1;
                let p = run_trials(config.mc_trials, cell_seed, |s| {
                    let mut rng = derived_rng(s, 0);
                    let (corr, model) = random_model(q, config.cvine_c, 100.0, &mut rng)?;
                    let truth = joint_quantile_probability(tau, &corr, &config.accuracy)?;
                    let data = mvn_sample_with(&model, n, &mut rng)?;
                    let ci =
                        algorithm1_joint_tau_uq(&data, tau, &request, &cell_bootstrap(config, s), &config.accuracy)?;
                    Ok(ci.tau_values[0] <= truth && truth <= ci.tau_values[1])
                })?;
                rows.push(StudyRow {
                    q,
                    n,
                    tau: Some(tau),
                    rho: None,
                    p,
                    trials: config.mc_trials,
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(StudyTable { study: Study::Alg1, rows })
}

/// Fraction of trials whose upper confidence set dominates at least the
/// population fraction dominated by the true quantile contour (q = 2).
pub fn run_study_alg2(config: &StudyConfig) -> Result<StudyTable> {
    config.validate()?;
    if config.q_list.iter().any(|&q| q != 2) {
        return invalid("the Algorithm 2 study is bivariate only");
    }
    let request = PercentileRequest::one_sided(config.confidence)?;
    let spec = GridSpec::default_for(2)?.with_step(config.grid_step)?;
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &rho in &config.rho_list {
        let model = CorrelationMatrix::bivariate(rho)?.model()?;
        for &tau in &config.tau_list {
            for &n in &config.n_list {
                let start = Instant::now();
                let cell_seed = derive_seed(config.seed, cell);
                cell += 1;
                let population = coverage_samples(&model, config.coverage_samples, cell_seed)?;
                let truth = coverage_from_samples(&CdfLevel::new(&model, tau, config.accuracy)?, &population)?.beta;
                let p = run_trials(config.mc_trials, cell_seed, |s| {
                    let mut rng = derived_rng(s, 0);
                    let data = mvn_sample_with(&model, n, &mut rng)?;
                    let ci = quantile_ci_grids(&data, &request, &cell_bootstrap(config, s), &spec, &config.accuracy)?;
                    let rule = GridLevel {
                        grid: &ci.grids[0],
                        centering: ci.centering.clone(),
                        scaling: ci.scaling.clone(),
                        tau,
                    };
                    Ok(coverage_from_samples(&rule, &population)?.beta >= truth)
                })?;
                rows.push(StudyRow {
                    q: 2,
                    n,
                    tau: Some(tau),
                    rho: Some(rho),
                    p,
                    trials: config.mc_trials,
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(StudyTable { study: Study::Alg2, rows })
}

/// Fraction of trials where the true CDF at the upper critical point is
/// at least tau.
pub fn run_study_alg3(config: &StudyConfig) -> Result<StudyTable> {
    config.validate()?;
    let request = PercentileRequest::one_sided(config.confidence)?;
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &q in &config.q_list {
        for &n in &config.n_list {
            for &tau in &config.tau_list {
                let start = Instant::now();
                let cell_seed = derive_seed(config.seed, cell);
                cell += 1;
                let p = run_trials(config.mc_trials, cell_seed, |s| {
                    let mut rng = derived_rng(s, 0);
                    let (_, model) = random_model(q, config.cvine_c, 0.0, &mut rng)?;
                    let data = mvn_sample_with(&model, n, &mut rng)?;
                    let ci = algorithm3_critical_point_ci(
                        &data,
                        tau,
                        &request,
                        &cell_bootstrap(config, s),
                        &config.accuracy,
                    )?;
                    let point = DVector::from_column_slice(&ci.points[0]);
                    Ok(mvn_cdf(&point, &model, &config.accuracy)? >= tau)
                })?;
                rows.push(StudyRow {
                    q,
                    n,
                    tau: Some(tau),
                    rho: None,
                    p,
                    trials: config.mc_trials,
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(StudyTable { study: Study::Alg3, rows })
}

pub fn run_study(config: &StudyConfig) -> Result<StudyManifest> {
    let start = Instant::now();
    let table = match config.study {
        Study::Alg1 => run_study_alg1(config)?,
        Study::Alg2 => run_study_alg2(config)?,
        Study::Alg3 => run_study_alg3(config)?,
    };
    Ok(StudyManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        mean_p: table.mean_p(),
        table,
        seconds: start.elapsed().as_secs_f64(),
    })
}

impl StudyManifest {
    /// Writes `study_<name>.csv` and `study_<name>.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let name = serde_json::to_value(self.config.study)?;
        let name = name.as_str().unwrap_or("study");
        self.table.write_csv(std::fs::File::create(dir.join(format!("study_{name}.csv")))?)?;
        serde_json::to_writer_pretty(std::fs::File::create(dir.join(format!("study_{name}.json")))?, self)?;
        Ok(())
    }
}

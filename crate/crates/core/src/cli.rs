//! The `mvq` command line: one subcommand per capability, each writing its
//! results and a `manifest.json` into `--out-dir`.
//!
//! Settings come from flags and from an optional `--config` file (TOML or
//! JSON, either flat or under a `config` key as in an emitted manifest).
//! Flags win on conflict. The manifest echoes the resolved settings,
//! including the seed, so feeding it back through `--config` repeats the
//! run.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algorithms::{algorithm1_joint_tau_uq, algorithm2_quantile_ci, algorithm3_critical_point_ci};
use crate::bootstrap::{BootstrapConfig, CiMethod, PercentileRequest, ResampleStyle};
use crate::casestudy::{run_case_study, write_diagnostics_csv, write_specification_csv, CaseStudyConfig, SrsEnsemble};
use crate::error::{invalid, Error, Result};
use crate::fixtures::{fixture_data, FIXTURE_AXES};
use crate::mesh::GridSpec;
use crate::mvn::CdfAccuracy;
use crate::normality::{ad_test_chisq, ks_test_chisq, qq_envelope};
use crate::quantile::bonferroni_bounds;
use crate::rng::fresh_seed;
use crate::simulation::{run_study, Preset, Study, StudyConfig};
use crate::stats::{mahalanobis_sq_all, read_csv_path, CsvOptions, DataMatrix};
use crate::tolerance::{
    simultaneous_upper_tolerance, tolerance_factor, tolerance_region_factor, univariate_upper_tolerance, ToleranceSpec,
};

#[derive(Debug, Parser)]
#[command(name = "mvq", version, about = "Confidence intervals on multivariate normal quantiles and critical points")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bootstrap interval on the joint probability of concurrent univariate quantiles
    JointTau {
        #[command(flatten)]
        input: InputArgs,
        /// individual quantile probability of every axis
        #[arg(long)]
        tau: Option<f64>,
        /// reported percentile levels (repeatable), default 0.05
        #[arg(long = "gamma")]
        gamma: Vec<f64>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Confidence sets for a quantile contour (q = 2) or surface (q = 3)
    QuantileCi {
        #[command(flatten)]
        input: InputArgs,
        /// joint quantile probability
        #[arg(long)]
        tau: Option<f64>,
        /// confidence levels of the sets (repeatable), default 0.95
        #[arg(long = "gamma")]
        gamma: Vec<f64>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Bootstrap interval on the critical point of a quantile surface
    CriticalPoint {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        tau: Option<f64>,
        /// reported percentile levels (repeatable), default 0.95
        #[arg(long = "gamma")]
        gamma: Vec<f64>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Univariate, simultaneous and elliptical tolerance baselines
    Tolerance {
        #[command(flatten)]
        input: InputArgs,
        /// population proportion to cover, default 0.9
        #[arg(long)]
        beta: Option<f64>,
        /// default 0.95
        #[arg(long)]
        confidence: Option<f64>,
        /// also compute the elliptical tolerance-region factor
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        region: Option<bool>,
        /// outer Monte Carlo draws for the region factor, default 100000
        #[arg(long)]
        n_mc: Option<usize>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Chi-square diagnostics of squared Mahalanobis distances
    Normality {
        #[command(flatten)]
        input: InputArgs,
        /// envelope confidence, default 0.95
        #[arg(long)]
        confidence: Option<f64>,
        /// Monte Carlo trials for the envelope, default 2000
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Monte Carlo studies of the three procedures
    Simulate {
        #[arg(long, value_enum)]
        study: Option<Study>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Monte Carlo trials per cell
        #[arg(long)]
        trials: Option<usize>,
        /// dimensions (comma separated)
        #[arg(long, value_delimiter = ',')]
        q: Vec<usize>,
        /// sample sizes (comma separated)
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        /// quantile probabilities (comma separated)
        #[arg(long, value_delimiter = ',')]
        tau: Vec<f64>,
        /// bivariate correlations for alg2 (comma separated)
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        rho: Vec<f64>,
        #[arg(long)]
        confidence: Option<f64>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Multi-axis specification from per-frequency SRS samples
    Casestudy {
        /// long-format CSV: frequency, sample_id, axis, value
        #[arg(long, conflicts_with = "dir")]
        input: Option<PathBuf>,
        /// directory of per-frequency CSV files
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        confidence: Option<f64>,
        /// Monte Carlo trials for the QQ envelope, default 2000
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        shared: Shared,
    },
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// observation matrix CSV, one row per sample
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// use the embedded nine-shock tri-axial sample
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fixture: Option<bool>,
    /// zero-based columns to keep (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct Shared {
    #[arg(long)]
    pub seed: Option<u64>,
    /// bootstrap resamples
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long, value_enum)]
    pub style: Option<ResampleStyle>,
    #[arg(long, value_enum)]
    pub ci_method: Option<CiMethod>,
    /// standardized grid step
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// refine percentile grids before extraction
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub interpolate: Option<bool>,
    /// absolute tolerance of CDF evaluations
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long, default_value = "mvq-out")]
    pub out_dir: PathBuf,
    /// worker threads, default all cores
    #[arg(long)]
    pub threads: Option<usize>,
    /// TOML or JSON settings file; flags win on conflict
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Every setting a run can take. Unset fields fall back to command
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub style: Option<ResampleStyle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_method: Option<CiMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interpolate: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_mc: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<Study>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
}

macro_rules! overlay {
    ($base:expr, $over:expr; $($f:ident),*) => {
        RunConfig { $($f: $over.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        overlay!(self, over; input, dir, fixture, columns, seed, b, style, ci_method, grid_step, interpolate,
            abs_tol, tau, gamma, confidence, beta, region, n_mc, trials, study, preset, q, n, tau_list, rho)
    }

    /// Reads a TOML or JSON file, taking the `config` entry when present.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let value: serde_json::Value = if is_json {
            serde_json::from_str(&text)?
        } else {
            let t: toml::Value =
                toml::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
            serde_json::to_value(t)?
        };
        let value = match value.get("config") {
            Some(inner) if inner.is_object() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }

    fn accuracy(&self) -> CdfAccuracy {
        let mut acc = CdfAccuracy::default();
        if let Some(t) = self.abs_tol {
            acc.abs_tol = t;
        }
        acc
    }

    fn bootstrap(&self, base: BootstrapConfig) -> BootstrapConfig {
        BootstrapConfig {
            b: self.b.unwrap_or(base.b),
            style: self.style.unwrap_or(base.style),
            ci_method: self.ci_method.unwrap_or(base.ci_method),
            seed: self.seed.unwrap_or(base.seed),
        }
    }

    fn gammas(&self, default: f64) -> Result<PercentileRequest> {
        PercentileRequest::new(self.gamma.clone().unwrap_or_else(|| vec![default]))
    }
}

fn nonempty<T: Clone>(v: &[T]) -> Option<Vec<T>> {
    (!v.is_empty()).then(|| v.to_vec())
}

fn shared_flags(s: &Shared) -> RunConfig {
    RunConfig {
        seed: s.seed,
        b: s.b,
        style: s.style,
        ci_method: s.ci_method,
        grid_step: s.grid_step,
        interpolate: s.interpolate,
        abs_tol: s.abs_tol,
        ..RunConfig::default()
    }
}

fn input_flags(i: &InputArgs) -> RunConfig {
    RunConfig { input: i.input.clone(), fixture: i.fixture, columns: nonempty(&i.columns), ..RunConfig::default() }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::JointTau { .. } => "joint-tau",
            Command::QuantileCi { .. } => "quantile-ci",
            Command::CriticalPoint { .. } => "critical-point",
            Command::Tolerance { .. } => "tolerance",
            Command::Normality { .. } => "normality",
            Command::Simulate { .. } => "simulate",
            Command::Casestudy { .. } => "casestudy",
        }
    }

    fn shared(&self) -> &Shared {
        match self {
            Command::JointTau { shared, .. }
            | Command::QuantileCi { shared, .. }
            | Command::CriticalPoint { shared, .. }
            | Command::Tolerance { shared, .. }
            | Command::Normality { shared, .. }
            | Command::Simulate { shared, .. }
            | Command::Casestudy { shared, .. } => shared,
        }
    }

    /// Settings given on the command line.
    fn flags(&self) -> RunConfig {
        let base = shared_flags(self.shared());
        let own = match self {
            Command::JointTau { input, tau, gamma, .. }
            | Command::QuantileCi { input, tau, gamma, .. }
            | Command::CriticalPoint { input, tau, gamma, .. } => {
                RunConfig { tau: *tau, gamma: nonempty(gamma), ..input_flags(input) }
            }
            Command::Tolerance { input, beta, confidence, region, n_mc, .. } => {
                RunConfig { beta: *beta, confidence: *confidence, region: *region, n_mc: *n_mc, ..input_flags(input) }
            }
            Command::Normality { input, confidence, trials, .. } => {
                RunConfig { confidence: *confidence, trials: *trials, ..input_flags(input) }
            }
            Command::Simulate { study, preset, trials, q, n, tau, rho, confidence, .. } => RunConfig {
                study: *study,
                preset: *preset,
                trials: *trials,
                q: nonempty(q),
                n: nonempty(n),
                tau_list: nonempty(tau),
                rho: nonempty(rho),
                confidence: *confidence,
                ..RunConfig::default()
            },
            Command::Casestudy { input, dir, tau, confidence, trials, .. } => RunConfig {
                input: input.clone(),
                dir: dir.clone(),
                tau: *tau,
                confidence: *confidence,
                trials: *trials,
                ..RunConfig::default()
            },
        };
        base.overlay(own)
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    seed_source: &'a str,
    threads: usize,
    seconds: f64,
    outputs: Vec<String>,
}

/// Collects output files under the output directory.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.written.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let w = self.create(name)?;
        serde_json::to_writer_pretty(w, value)?;
        Ok(())
    }
}

fn select_columns(data: &DataMatrix, columns: &[usize], labels: Vec<String>) -> Result<(DataMatrix, Vec<String>)> {
    if columns.is_empty() {
        return Ok((data.clone(), labels));
    }
    if let Some(&bad) = columns.iter().find(|&&c| c >= data.q()) {
        return invalid(format!("column {bad} out of range for {} columns", data.q()));
    }
    let m = DMatrix::from_fn(data.n(), columns.len(), |i, j| data.values()[(i, columns[j])]);
    let labels = columns.iter().map(|&c| labels[c].clone()).collect();
    Ok((DataMatrix::new(m)?, labels))
}

fn load_data(cfg: &RunConfig) -> Result<(DataMatrix, Vec<String>)> {
    let (data, labels) = match (&cfg.input, cfg.fixture.unwrap_or(false)) {
        (Some(_), true) => return invalid("pass either --input or --fixture, not both"),
        (Some(path), false) => {
            let csv = read_csv_path(path, &CsvOptions::default())?;
            let labels = csv.header.unwrap_or_else(|| (0..csv.data.q()).map(|j| format!("x{}", j + 1)).collect());
            (csv.data, labels)
        }
        (None, true) => (fixture_data(), FIXTURE_AXES.iter().map(|s| s.to_string()).collect()),
        (None, false) => return invalid("no data: pass --input <csv> or --fixture"),
    };
    select_columns(&data, cfg.columns.as_deref().unwrap_or(&[]), labels)
}

fn fmt_level(g: f64) -> String {
    format!("{g}")
}

fn joint_tau(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (data, _) = load_data(cfg)?;
    let tau = cfg.tau.unwrap_or(0.9);
    let request = cfg.gammas(0.05)?;
    let boot = cfg.bootstrap(BootstrapConfig::default());
    let ci = algorithm1_joint_tau_uq(&data, tau, &request, &boot, &cfg.accuracy())?;
    #[derive(Serialize)]
    struct JointTauOutput<'a> {
        #[serde(flatten)]
        interval: &'a crate::algorithms::JointTauInterval,
        bonferroni_lower: f64,
        bonferroni_upper: f64,
    }
    let bounds = bonferroni_bounds(tau, data.q())?;
    out.json(
        "joint_tau.json",
        &JointTauOutput { interval: &ci, bonferroni_lower: bounds.lower, bonferroni_upper: bounds.upper },
    )
}

fn quantile_ci(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (data, _) = load_data(cfg)?;
    let tau = cfg.tau.unwrap_or(0.9);
    let request = cfg.gammas(0.95)?;
    let boot = cfg.bootstrap(BootstrapConfig::default());
    let mut spec = GridSpec::default_for(data.q())?;
    if let Some(step) = cfg.grid_step {
        spec = spec.with_step(step)?;
    }
    let result =
        algorithm2_quantile_ci(&data, tau, &request, &boot, &spec, cfg.interpolate.unwrap_or(false), &cfg.accuracy())?;
    for s in &result.gamma_sets {
        let stem = format!("quantile_g{}", fmt_level(s.gamma));
        s.set.write_vertices_csv(out.create(&format!("{stem}_vertices.csv"))?)?;
        s.set.write_elements_csv(out.create(&format!("{stem}_elements.csv"))?)?;
        if data.q() == 3 {
            s.set.write_stl(out.create(&format!("{stem}.stl"))?, &stem)?;
        }
    }
    out.json("quantile_ci.json", &result)
}

fn critical_point(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (data, labels) = load_data(cfg)?;
    let tau = cfg.tau.unwrap_or(0.9);
    let request = cfg.gammas(0.95)?;
    let boot = cfg.bootstrap(BootstrapConfig::default());
    let ci = algorithm3_critical_point_ci(&data, tau, &request, &boot, &cfg.accuracy())?;
    let mut w = csv::Writer::from_writer(out.create("critical_point.csv")?);
    let mut header = vec!["gamma".to_string()];
    header.extend(labels);
    w.write_record(&header)?;
    for (g, p) in ci.gammas.iter().zip(&ci.points) {
        let mut rec = vec![fmt_level(*g)];
        rec.extend(p.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    out.json("critical_point.json", &ci)
}

fn tolerance(cfg: &RunConfig, out: &mut Outputs, seed: u64) -> Result<()> {
    let (data, labels) = load_data(cfg)?;
    let spec = ToleranceSpec::new(cfg.beta.unwrap_or(0.9), cfg.confidence.unwrap_or(0.95), data.n())?;
    let q = data.q();
    let mean = crate::stats::sample_mean(&data);
    let sd = crate::stats::sample_std(&data)?;
    let univariate = (0..q).map(|j| univariate_upper_tolerance(mean[j], sd[j], &spec)).collect::<Result<Vec<f64>>>()?;
    let simultaneous = simultaneous_upper_tolerance(&data, &spec)?;
    let k_simultaneous =
        tolerance_factor(&ToleranceSpec { confidence: 1.0 - (1.0 - spec.confidence) / q as f64, ..spec })?;
    let region_factor = if cfg.region.unwrap_or(false) {
        Some(tolerance_region_factor(data.n(), q, spec.beta, spec.confidence, cfg.n_mc.unwrap_or(100_000), seed)?)
    } else {
        None
    };
    #[derive(Serialize)]
    struct ToleranceOutput {
        axes: Vec<String>,
        spec: ToleranceSpec,
        k_univariate: f64,
        k_simultaneous: f64,
        univariate: Vec<f64>,
        bonferroni: Vec<f64>,
        region_factor: Option<f64>,
    }
    let mut w = csv::Writer::from_writer(out.create("tolerance.csv")?);
    let mut header = vec!["interval".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (name, v) in [("univariate_tolerance", &univariate), ("bonferroni_tolerance", &simultaneous)] {
        let mut rec = vec![name.to_string()];
        rec.extend(v.iter().map(|x| format!("{x:.4}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    out.json(
        "tolerance.json",
        &ToleranceOutput {
            axes: labels,
            spec,
            k_univariate: tolerance_factor(&spec)?,
            k_simultaneous,
            univariate,
            bonferroni: simultaneous,
            region_factor,
        },
    )
}

fn normality(cfg: &RunConfig, out: &mut Outputs, seed: u64) -> Result<()> {
    let (data, _) = load_data(cfg)?;
    let d = mahalanobis_sq_all(&data)?;
    let ad = ad_test_chisq(&d, data.q())?;
    let ks = ks_test_chisq(&d, data.q())?;
    let envelope = qq_envelope(data.n(), data.q(), cfg.confidence.unwrap_or(0.95), cfg.trials.unwrap_or(2000), seed)?;
    let mut sorted = d.clone();
    crate::numeric::sort_floats(&mut sorted);
    let mut w = csv::Writer::from_writer(out.create("qq_envelope.csv")?);
    w.write_record(["rank", "lower", "theoretical", "upper", "observed"])?;
    for (p, o) in envelope.points.iter().zip(&sorted) {
        w.write_record([
            p.rank.to_string(),
            p.lower.to_string(),
            p.theoretical.to_string(),
            p.upper.to_string(),
            o.to_string(),
        ])?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct NormalityOutput {
        mahalanobis_sq: Vec<f64>,
        anderson_darling: crate::normality::GofTest,
        kolmogorov_smirnov: crate::normality::GofTest,
        inside_envelope: bool,
        envelope: crate::normality::QqEnvelope,
    }
    let inside = envelope.contains(&d);
    out.json(
        "normality.json",
        &NormalityOutput {
            mahalanobis_sq: d,
            anderson_darling: ad,
            kolmogorov_smirnov: ks,
            inside_envelope: inside,
            envelope,
        },
    )
}

fn simulate(cfg: &RunConfig, out: &mut Outputs, seed: u64) -> Result<()> {
    let study = cfg.study.unwrap_or(Study::Alg3);
    let mut c = StudyConfig::preset(study, cfg.preset.unwrap_or(Preset::Desk));
    c.seed = seed;
    c.bootstrap = cfg.bootstrap(c.bootstrap);
    c.accuracy = cfg.accuracy();
    if let Some(t) = cfg.trials {
        c.mc_trials = t;
    }
    if let Some(q) = &cfg.q {
        c.q_list = q.clone();
    }
    if let Some(n) = &cfg.n {
        c.n_list = n.clone();
    }
    if let Some(t) = &cfg.tau_list {
        c.tau_list = t.clone();
    }
    if let Some(r) = &cfg.rho {
        c.rho_list = r.clone();
    }
    if let Some(conf) = cfg.confidence {
        c.confidence = conf;
    }
    if let Some(step) = cfg.grid_step {
        c.grid_step = step;
    }
    let manifest = run_study(&c)?;
    manifest.write_to(&out.dir)?;
    let name = serde_json::to_value(study)?.as_str().unwrap_or("study").to_string();
    out.written.push(format!("study_{name}.csv"));
    out.written.push(format!("study_{name}.json"));
    Ok(())
}

fn casestudy(cfg: &RunConfig, out: &mut Outputs, seed: u64) -> Result<()> {
    let ensemble = match (&cfg.input, &cfg.dir) {
        (Some(path), _) => SrsEnsemble::from_long_csv(File::open(path)?)?,
        (None, Some(dir)) => SrsEnsemble::from_dir(dir)?,
        (None, None) => SrsEnsemble::fixture(),
    };
    let defaults = CaseStudyConfig::default();
    let config = CaseStudyConfig {
        tau: cfg.tau.unwrap_or(defaults.tau),
        confidence: cfg.confidence.unwrap_or(defaults.confidence),
        bootstrap: BootstrapConfig { seed, ..cfg.bootstrap(defaults.bootstrap) },
        accuracy: cfg.accuracy(),
        envelope_trials: cfg.trials.unwrap_or(defaults.envelope_trials),
        ..defaults
    };
    let lines = run_case_study(&ensemble, &config)?;
    for l in lines.iter().filter(|l| l.error.is_some()) {
        eprintln!("warning: {} Hz skipped: {}", l.frequency, l.error.as_deref().unwrap_or_default());
    }
    for l in &lines {
        if let Some(n) = l.normality.filter(|n| !n.passed) {
            eprintln!(
                "warning: {} Hz normality check failed (AD p = {:.4}, KS p = {:.4}, QQ inside = {})",
                l.frequency, n.ad_p, n.ks_p, n.qq_pass
            );
        }
    }
    write_specification_csv(&lines, ensemble.axes(), out.create("specification.csv")?)?;
    write_diagnostics_csv(&lines, out.create("diagnostics.csv")?)?;
    #[derive(Serialize)]
    struct CaseStudyOutput<'a> {
        axes: &'a [String],
        config: &'a CaseStudyConfig,
        lines: &'a [crate::casestudy::SpecificationLine],
    }
    out.json("casestudy.json", &CaseStudyOutput { axes: ensemble.axes(), config: &config, lines: &lines })
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: &Command) -> Result<()> {
    let start = Instant::now();
    let shared = command.shared();
    let file = match &shared.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut cfg = file.overlay(command.flags());
    let seed_source = if cfg.seed.is_some() {
        if shared.seed.is_some() {
            "flag"
        } else {
            "config"
        }
    } else {
        cfg.seed = Some(fresh_seed());
        "system"
    };
    let seed = cfg.seed.unwrap_or_default();
    let threads = shared.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return invalid("--threads must be positive");
    }
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut out = Outputs::new(&shared.out_dir)?;
    pool.install(|| match command {
        Command::JointTau { .. } => joint_tau(&cfg, &mut out),
        Command::QuantileCi { .. } => quantile_ci(&cfg, &mut out),
        Command::CriticalPoint { .. } => critical_point(&cfg, &mut out),
        Command::Tolerance { .. } => tolerance(&cfg, &mut out, seed),
        Command::Normality { .. } => normality(&cfg, &mut out, seed),
        Command::Simulate { .. } => simulate(&cfg, &mut out, seed),
        Command::Casestudy { .. } => casestudy(&cfg, &mut out, seed),
    })?;
    let outputs = std::mem::take(&mut out.written);
    let manifest = Manifest {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        seed_source,
        threads,
        seconds: start.elapsed().as_secs_f64(),
        outputs,
    };
    out.json("manifest.json", &manifest)
}

/// Parses `args` and runs the command. Usage errors exit with 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

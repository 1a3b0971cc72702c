//! Acceptance run: thirteen numbered criteria, one PASS or FAIL line each.
//!
//! Pass criterion numbers after `--` to run a subset, for example
//! `cargo test --test acceptance -- 1 5 6`.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mvq::algorithms::algorithm3_critical_point_ci;
use mvq::bootstrap::{BootstrapConfig, CiMethod, PercentileRequest, ResampleStyle};
use mvq::fixtures::{fixture_data, FIXTURE_MAHALANOBIS};
use mvq::mesh::{
    domain_mass_bound, evaluate_cdf_grid, evaluate_cdf_on_axes, extract_quantile, GridSpec, QuantileSet, Topology,
};
use mvq::mvn::{CdfAccuracy, CorrelationMatrix};
use mvq::quantile::{equicoordinate_quantile, estimate_coverage_beta, joint_quantile_probability, CdfLevel};
use mvq::simulation::{run_study, Study, StudyConfig, StudyTable};
use mvq::stats::{mahalanobis_sq_all, sample_mean, sample_std, MvnModel};
use mvq::tolerance::{
    simultaneous_upper_tolerance, tolerance_region_factor, univariate_upper_tolerance, ToleranceSpec,
};

type Outcome = Result<String, String>;

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

const CRITERIA: [Criterion; 13] = [
    Criterion { id: 1, name: "equicoordinate probabilities", budget: secs(1), run: equicoordinate_probabilities },
    Criterion { id: 2, name: "equicoordinate quantile inversion", budget: secs(1), run: equicoordinate_inversion },
    Criterion { id: 3, name: "domain mass bound", budget: secs(1), run: domain_mass },
    Criterion { id: 4, name: "fixture mahalanobis distances", budget: secs(1), run: mahalanobis_regression },
    Criterion { id: 5, name: "tolerance baselines", budget: secs(1), run: tolerance_baselines },
    Criterion { id: 6, name: "critical point confidence bound", budget: secs(30), run: critical_point_bound },
    Criterion { id: 7, name: "coverage functional", budget: secs(30), run: coverage_functional },
    Criterion { id: 8, name: "tolerance region factor", budget: secs(120), run: region_factor },
    Criterion { id: 9, name: "critical point study", budget: secs(30 * 60), run: critical_point_study },
    Criterion { id: 10, name: "joint probability study", budget: secs(20 * 60), run: joint_probability_study },
    Criterion { id: 11, name: "quantile contour study", budget: secs(4 * 3600), run: contour_study },
    Criterion { id: 12, name: "property suites", budget: secs(3600), run: property_suites },
    Criterion { id: 13, name: "mesh fidelity", budget: secs(10 * 60), run: mesh_fidelity },
];

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn fmt_vec(v: &[f64], digits: usize) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.digits$}")).collect();
    format!("({})", parts.join(", "))
}

fn equicoordinate_probabilities() -> Outcome {
    let acc = CdfAccuracy::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (rho, want) in [(0.0, 0.810), (-0.99, 0.800), (0.99, 0.8901)] {
        let got = joint_quantile_probability(0.90, &CorrelationMatrix::bivariate(rho).map_err(e)?, &acc).map_err(e)?;
        ok &= (got - want).abs() <= 1e-3;
        parts.push(format!("rho {rho}: {got:.4}"));
    }
    check(ok, parts.join(", "))
}

fn equicoordinate_inversion() -> Outcome {
    let v = equicoordinate_quantile(0.81, &CorrelationMatrix::bivariate(0.0).map_err(e)?, &CdfAccuracy::default())
        .map_err(e)?;
    check((v - 1.2816).abs() <= 1e-3, format!("v = {v:.5}"))
}

/// Matches when the printed digits equal the value either truncated or
/// rounded to six decimals.
fn domain_mass() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (q, printed) in [(1, 0.999936), (2, 0.999873), (3, 0.999810)] {
        let got = domain_mass_bound(q);
        let scaled = got * 1e6;
        let hit = [scaled.floor(), scaled.round()].iter().any(|d| (d - printed * 1e6).abs() < 0.5);
        ok &= hit;
        parts.push(format!("q {q}: {got:.8}"));
    }
    check(ok, parts.join(", "))
}

fn mahalanobis_regression() -> Outcome {
    let d = mahalanobis_sq_all(&fixture_data()).map_err(e)?;
    let worst = d.iter().zip(FIXTURE_MAHALANOBIS).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(worst <= 0.01, format!("{} max deviation {worst:.4}", fmt_vec(&d, 3)))
}

fn fixture_tolerances() -> Result<(Vec<f64>, Vec<f64>), String> {
    let data = fixture_data();
    let spec = ToleranceSpec::new(0.9, 0.95, data.n()).map_err(e)?;
    let mean = sample_mean(&data);
    let sd = sample_std(&data).map_err(e)?;
    let uni = (0..data.q())
        .map(|j| univariate_upper_tolerance(mean[j], sd[j], &spec))
        .collect::<Result<Vec<_>, _>>()
        .map_err(e)?;
    let bonf = simultaneous_upper_tolerance(&data, &spec).map_err(e)?;
    Ok((uni, bonf))
}

fn tolerance_baselines() -> Outcome {
    let (uni, bonf) = fixture_tolerances()?;
    let within = |got: &[f64], want: &[f64]| got.iter().zip(want).all(|(a, b)| (a - b).abs() <= 0.01);
    let ok = within(&uni, &[9.0081, 15.9969, 4.5694]) && within(&bonf, &[9.8128, 17.7368, 4.8529]);
    check(ok, format!("univariate {}, bonferroni {}", fmt_vec(&uni, 4), fmt_vec(&bonf, 4)))
}

fn critical_point_bound() -> Outcome {
    let config = BootstrapConfig {
        b: 2000,
        ci_method: CiMethod::Bca,
        style: ResampleStyle::Nonparametric,
        ..Default::default()
    };
    let request = PercentileRequest::one_sided(0.95).map_err(e)?;
    let ci =
        algorithm3_critical_point_ci(&fixture_data(), 0.90, &request, &config, &CdfAccuracy::default()).map_err(e)?;
    let point = &ci.points[0];
    let (uni, _) = fixture_tolerances()?;
    let want = [10.0476, 18.2621, 4.5783];
    let close = point.iter().zip(want).all(|(a, b)| ((a - b) / b).abs() <= 0.03);
    let above = point.iter().zip(&uni).all(|(a, b)| a > b);
    check(close && above, format!("bound {}, univariate {}", fmt_vec(point, 4), fmt_vec(&uni, 4)))
}

fn coverage_functional() -> Outcome {
    let acc = CdfAccuracy::default();
    let model = CorrelationMatrix::bivariate(0.9).map_err(e)?.model().map_err(e)?;
    let rule = CdfLevel::new(&model, 0.7, acc).map_err(e)?;
    let est = estimate_coverage_beta(&rule, &model, 100_000, 0).map_err(e)?;
    check((est.beta - 0.7841).abs() <= 0.010, format!("beta = {:.4} +- {:.4}", est.beta, est.std_error))
}

fn region_factor() -> Outcome {
    let r = tolerance_region_factor(1_000_000, 2, 0.90, 0.95, 100_000, 0).map_err(e)?;
    check((r - 4.61).abs() <= 0.02, format!("r = {r:.4}"))
}

fn table_summary(t: &StudyTable) -> String {
    let cells: Vec<String> = t
        .rows
        .iter()
        .map(|r| {
            let mut s = format!("q{} n{}", r.q, r.n);
            if let Some(rho) = r.rho {
                s.push_str(&format!(" rho{rho}"));
            }
            if let Some(tau) = r.tau {
                s.push_str(&format!(" tau{tau}"));
            }
            format!("{s}: {:.3}", r.p)
        })
        .collect();
    format!("{}; mean {:.3}", cells.join(", "), t.mean_p())
}

fn critical_point_study() -> Outcome {
    let mut c = StudyConfig::desk(Study::Alg3);
    c.mc_trials = 100;
    c.bootstrap.b = 500;
    c.q_list = vec![2, 3];
    c.n_list = vec![30];
    c.tau_list = vec![0.9];
    let t = run_study(&c).map_err(e)?.table;
    let mean = t.mean_p();
    let ok = t.rows.iter().all(|r| r.p >= 0.90) && (0.93..=1.0).contains(&mean);
    check(ok, table_summary(&t))
}

fn joint_probability_study() -> Outcome {
    let mut c = StudyConfig::desk(Study::Alg1);
    c.mc_trials = 100;
    c.q_list = vec![3];
    c.n_list = vec![300];
    let t = run_study(&c).map_err(e)?.table;
    let ok = t.rows.iter().all(|r| (0.90..=1.0).contains(&r.p));
    check(ok, table_summary(&t))
}

fn contour_study() -> Outcome {
    let mut c = StudyConfig::desk(Study::Alg2);
    c.mc_trials = 50;
    c.bootstrap.b = 300;
    c.grid_step = 0.05;
    c.q_list = vec![2];
    let t = run_study(&c).map_err(e)?.table;
    let ok = t.rows.iter().all(|r| {
        let floor = if r.rho.unwrap_or(0.0) < -0.5 { 0.95 } else { 0.85 };
        r.p >= floor
    });
    check(ok, table_summary(&t))
}

type Suite = (&'static str, fn() -> support::Check);

fn property_suites() -> Outcome {
    let suites: [Suite; 5] = [
        ("monotonicity", || support::cdf_monotonicity(200)),
        ("factorization", || support::independence_factorization(200)),
        ("asymptote", || support::contour_asymptote(12)),
        ("sandwich", || support::bonferroni_sandwich(200)),
        ("determinism", support::determinism),
    ];
    let mut failed = Vec::new();
    for (name, run) in &suites {
        if let Err(msg) = run() {
            failed.push(format!("{name}: {}", msg.lines().next().unwrap_or_default()));
        }
    }
    if failed.is_empty() {
        Ok(format!("{} suites green", suites.len()))
    } else {
        Err(failed.join("; "))
    }
}

/// Unit normal at each vertex of a polyline, from the tangent through its
/// neighbours.
fn vertex_normals(set: &QuantileSet) -> Vec<Option<[f64; 2]>> {
    let Topology::Segments(segs) = &set.topology else {
        return vec![None; set.vertices.len()];
    };
    let mut nbrs = vec![Vec::new(); set.vertices.len()];
    for &[a, b] in segs {
        nbrs[a].push(b);
        nbrs[b].push(a);
    }
    nbrs.iter()
        .enumerate()
        .map(|(i, n)| {
            let (p, q) = match n.as_slice() {
                [a, b, ..] => (*a, *b),
                [a] => (i, *a),
                [] => return None,
            };
            let tx = set.vertices[q][0] - set.vertices[p][0];
            let ty = set.vertices[q][1] - set.vertices[p][1];
            let len = tx.hypot(ty);
            (len > 0.0).then(|| [-ty / len, tx / len])
        })
        .collect()
}

/// Smallest |t| with v + t n on a segment of `set`.
fn normal_offset(v: &[f64], n: [f64; 2], set: &QuantileSet) -> Option<f64> {
    let Topology::Segments(segs) = &set.topology else {
        return None;
    };
    let mut best: Option<f64> = None;
    for &[a, b] in segs {
        let (pa, pb) = (&set.vertices[a], &set.vertices[b]);
        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
        let det = n[0] * (-dy) - n[1] * (-dx);
        if det.abs() < 1e-15 {
            continue;
        }
        let (rx, ry) = (pa[0] - v[0], pa[1] - v[1]);
        let t = (rx * (-dy) - ry * (-dx)) / det;
        let s = (n[0] * ry - n[1] * rx) / det;
        if (-1e-9..=1.0 + 1e-9).contains(&s) && best.is_none_or(|b| t.abs() < b) {
            best = Some(t.abs());
        }
    }
    best
}

/// The coarse contour is compared with a contour from a ten times finer
/// grid on a box around the diagonal crossing, measured along the coarse
/// normals at sampled vertices.
fn mesh_fidelity() -> Outcome {
    let acc = CdfAccuracy::default();
    let (rho, tau) = (0.99, 0.90);
    let model = MvnModel::standard_bivariate(rho).map_err(e)?;
    let coarse =
        extract_quantile(&evaluate_cdf_grid(&model, &GridSpec::default_for(2).map_err(e)?, &acc).map_err(e)?, tau)
            .map_err(e)?;

    let (lo, hi, fine_step) = (1.0f64, 3.5f64, 0.001f64);
    let m = ((hi - lo) / fine_step).round() as usize;
    let axis: Vec<f64> = (0..=m).map(|i| lo + i as f64 * fine_step).collect();
    let fine_grid = evaluate_cdf_on_axes(&model, vec![axis.clone(), axis], &acc).map_err(e)?;
    let fine = extract_quantile(&fine_grid, tau).map_err(e)?;

    let margin = 0.05;
    let inside = |v: &[f64]| v.iter().all(|&c| c > lo + margin && c < hi - margin);
    let normals = vertex_normals(&coarse);
    let candidates: Vec<usize> =
        (0..coarse.vertices.len()).filter(|&i| inside(&coarse.vertices[i]) && normals[i].is_some()).collect();
    if candidates.len() < 20 {
        return Err(format!("only {} coarse vertices inside the comparison box", candidates.len()));
    }
    let stride = (candidates.len() / 200).max(1);
    let mut worst: f64 = 0.0;
    let mut sampled = 0;
    for &i in candidates.iter().step_by(stride) {
        let v = &coarse.vertices[i];
        let n = normals[i].expect("filtered above");
        match normal_offset(v, n, &fine) {
            Some(t) => worst = worst.max(t),
            None => return Err(format!("no fine contour crossing along the normal at {v:?}")),
        }
        sampled += 1;
    }
    check(
        worst < 0.005,
        format!("{sampled} sampled normals, max offset {worst:.5} ({} fine vertices)", fine.vertices.len()),
    )
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    let mut ran = 0;
    for c in CRITERIA.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let over = elapsed > c.budget;
        let (status, detail) = match (&outcome, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over the {:?} budget", c.budget)),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failures += 1;
        }
        ran += 1;
        println!("criterion {:>2} {status} {} [{:.2} s]: {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Upper 95% confidence bound on the critical point of the 0.9 quantile
//! surface for the shock sample, next to per-axis tolerance bounds.

use mvq::algorithms::algorithm3_critical_point_ci;
use mvq::bootstrap::{BootstrapConfig, CiMethod, PercentileRequest};
use mvq::fixtures::{fixture_data, FIXTURE_AXES};
use mvq::mvn::CdfAccuracy;
use mvq::stats::{sample_mean, sample_std};
use mvq::tolerance::{simultaneous_upper_tolerance, univariate_upper_tolerance, ToleranceSpec};

fn main() -> anyhow::Result<()> {
    let data = fixture_data();
    let config = BootstrapConfig { b: 2000, ci_method: CiMethod::Bca, ..Default::default() };
    let ci = algorithm3_critical_point_ci(
        &data,
        0.9,
        &PercentileRequest::one_sided(0.95)?,
        &config,
        &CdfAccuracy::default(),
    )?;

    let spec = ToleranceSpec::new(0.9, 0.95, data.n())?;
    let mean = sample_mean(&data);
    let sd = sample_std(&data)?;
    let simultaneous = simultaneous_upper_tolerance(&data, &spec)?;

    println!("{:<4} {:>10} {:>10} {:>10}", "axis", "critical", "univariate", "bonferroni");
    for (j, axis) in FIXTURE_AXES.iter().enumerate() {
        let uni = univariate_upper_tolerance(mean[j], sd[j], &spec)?;
        println!("{axis:<4} {:>10.4} {:>10.4} {:>10.4}", ci.points[0][j], uni, simultaneous[j]);
    }
    Ok(())
}

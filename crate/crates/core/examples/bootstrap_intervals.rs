//! Percentile, bias-corrected and BCa intervals for the correlation of two
//! shock axes.

use mvq::bootstrap::{bootstrap_replicates, interval, jackknife, BootstrapConfig, CiMethod, PercentileRequest};
use mvq::fixtures::fixture_data;
use mvq::stats::{cov_to_corr, sample_cov, DataMatrix};

fn corr_xy(d: &DataMatrix) -> mvq::Result<f64> {
    Ok(cov_to_corr(&sample_cov(d)?)[(0, 1)])
}

fn main() -> anyhow::Result<()> {
    let data = fixture_data();
    let config = BootstrapConfig { b: 2000, seed: 4, ..Default::default() };
    let reps = bootstrap_replicates(&data, &config, corr_xy)?;
    let jack = jackknife(&data, corr_xy)?;
    let theta = corr_xy(&data)?;
    let request = PercentileRequest::two_sided(0.9)?;
    println!("rho_xy = {theta:.4}");
    for method in [CiMethod::Percentile, CiMethod::Bc, CiMethod::Bca] {
        let ci = interval(method, &reps, theta, Some(&jack), &request)?;
        println!("{method:?}: [{:.4}, {:.4}]", ci.values[0], ci.values[1]);
    }
    Ok(())
}

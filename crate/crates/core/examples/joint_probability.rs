//! How optimistic are concurrent per-axis quantiles? Computes the joint
//! probability of three 0.9 quantiles for a few correlation structures,
//! then bootstraps it for the embedded shock sample.

use mvq::algorithms::algorithm1_joint_tau_uq;
use mvq::bootstrap::{BootstrapConfig, CiMethod, PercentileRequest};
use mvq::fixtures::fixture_data;
use mvq::mvn::{CdfAccuracy, CorrelationMatrix};
use mvq::quantile::{adjusted_individual_tau, bonferroni_bounds, joint_quantile_probability, AdjustMode};

fn main() -> anyhow::Result<()> {
    let acc = CdfAccuracy::default();

    for rho in [-0.99, 0.0, 0.5, 0.99] {
        let p = joint_quantile_probability(0.9, &CorrelationMatrix::bivariate(rho)?, &acc)?;
        println!("q = 2, rho = {rho:>5}: F(z_0.9, z_0.9) = {p:.4}");
    }
    let b = bonferroni_bounds(0.9, 3)?;
    println!("q = 3 sandwich: [{:.3}, {:.3}]", b.lower, b.upper);
    println!(
        "per-axis tau for a joint 0.9: independent {:.4}, Bonferroni {:.4}",
        adjusted_individual_tau(0.9, 3, AdjustMode::Independent)?,
        adjusted_individual_tau(0.9, 3, AdjustMode::Bonferroni)?
    );

    // one-sided bounds on the joint probability of the sample's 0.9 quantiles
    let config = BootstrapConfig { b: 2000, ci_method: CiMethod::Bca, seed: 1, ..Default::default() };
    let ci = algorithm1_joint_tau_uq(&fixture_data(), 0.9, &PercentileRequest::new(vec![0.05, 0.95])?, &config, &acc)?;
    println!(
        "fixture: estimate {:.4}, 95% lower bound {:.4}, 95% upper bound {:.4}",
        ci.estimate, ci.tau_values[0], ci.tau_values[1]
    );
    Ok(())
}

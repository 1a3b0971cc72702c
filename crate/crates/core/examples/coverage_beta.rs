//! Population fraction dominated by a quantile contour, by Monte Carlo.

use mvq::mvn::{CdfAccuracy, CorrelationMatrix};
use mvq::quantile::{estimate_coverage_beta, CdfLevel, Orthant};

fn main() -> anyhow::Result<()> {
    let acc = CdfAccuracy::default();
    for rho in [-0.9, 0.0, 0.9] {
        let model = CorrelationMatrix::bivariate(rho)?.model()?;
        let level = estimate_coverage_beta(&CdfLevel::new(&model, 0.7, acc)?, &model, 100_000, 2)?;
        println!("rho = {rho:>4}: beta(0.7) = {:.4} +- {:.4}", level.beta, level.std_error);
    }
    // an orthant is dominated with probability equal to its CDF value
    let model = CorrelationMatrix::identity(2).model()?;
    let o = estimate_coverage_beta(&Orthant(vec![0.0, 0.0]), &model, 100_000, 3)?;
    println!("orthant at the origin: {:.4}", o.beta);
    Ok(())
}

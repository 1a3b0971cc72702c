//! Equicoordinate quantiles and critical points of fitted models.

use mvq::fixtures::fixture_data;
use mvq::mvn::{CdfAccuracy, CorrelationMatrix};
use mvq::quantile::{critical_point, equicoordinate_quantile};
use mvq::stats::fit_mvn;

fn main() -> anyhow::Result<()> {
    let acc = CdfAccuracy::default();

    for (q, rho) in [(2, 0.0), (2, 0.9), (3, 0.5), (5, 0.3)] {
        let corr = CorrelationMatrix::equicorrelated(q, rho)?;
        let v = equicoordinate_quantile(0.81, &corr, &acc)?;
        println!("q = {q}, rho = {rho}: v(0.81) = {v:.4}");
    }

    let model = fit_mvn(&fixture_data())?;
    let cp = critical_point(0.9, &model, &acc)?;
    println!("fixture critical point at tau = 0.9: {:.4?}", cp.point.as_slice());
    println!("standardized value {:.4}", cp.equicoordinate_value);
    Ok(())
}

//! Bivariate quantile contour of a known model and bootstrap confidence
//! contours for two axes of the shock sample, written as CSV.

use std::fs::File;

use mvq::algorithms::algorithm2_quantile_ci;
use mvq::bootstrap::{BootstrapConfig, CiMethod, PercentileRequest};
use mvq::fixtures::fixture_data;
use mvq::mesh::{critical_point_from_set, evaluate_cdf_grid, extract_quantile, GridSpec};
use mvq::mvn::{CdfAccuracy, CorrelationMatrix};
use mvq::stats::DataMatrix;

fn main() -> anyhow::Result<()> {
    let acc = CdfAccuracy::default();
    let out = std::env::temp_dir().join("mvq-contour");
    std::fs::create_dir_all(&out)?;

    let model = CorrelationMatrix::bivariate(0.9)?.model()?;
    let grid = evaluate_cdf_grid(&model, &GridSpec::default_for(2)?.with_step(0.02)?, &acc)?;
    let contour = extract_quantile(&grid, 0.9)?;
    println!(
        "rho = 0.9 contour: {} vertices, critical point {:.4?}",
        contour.vertices.len(),
        critical_point_from_set(&contour)?
    );

    // X and Y columns of the shock sample
    let full = fixture_data();
    let rows: Vec<Vec<f64>> = (0..full.n()).map(|i| vec![full.values()[(i, 0)], full.values()[(i, 1)]]).collect();
    let data = DataMatrix::from_rows(&rows)?;
    let config = BootstrapConfig { b: 500, ci_method: CiMethod::Bca, seed: 3, ..Default::default() };
    let spec = GridSpec::default_for(2)?.with_step(0.05)?;
    let result =
        algorithm2_quantile_ci(&data, 0.9, &PercentileRequest::new(vec![0.5, 0.95])?, &config, &spec, true, &acc)?;
    for s in &result.gamma_sets {
        let path = out.join(format!("contour_{}.csv", s.gamma));
        s.set.write_vertices_csv(File::create(&path)?)?;
        println!("gamma = {}: {} vertices -> {}", s.gamma, s.set.vertices.len(), path.display());
    }
    Ok(())
}

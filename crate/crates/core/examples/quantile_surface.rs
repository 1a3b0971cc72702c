//! Trivariate quantile iso-surface: the upper 95% confidence surface for
//! the shock sample, exported as STL.

use std::fs::File;

use mvq::algorithms::algorithm2_quantile_ci;
use mvq::bootstrap::{BootstrapConfig, PercentileRequest};
use mvq::fixtures::fixture_data;
use mvq::mesh::{critical_point_from_set, GridSpec};
use mvq::mvn::CdfAccuracy;

fn main() -> anyhow::Result<()> {
    let config = BootstrapConfig { b: 200, seed: 11, ..Default::default() };
    // a coarse grid keeps this quick; the default step is 0.1
    let spec = GridSpec::default_for(3)?.with_step(0.2)?;
    let result = algorithm2_quantile_ci(
        &fixture_data(),
        0.9,
        &PercentileRequest::one_sided(0.95)?,
        &config,
        &spec,
        true,
        &CdfAccuracy::default(),
    )?;
    let set = &result.gamma_sets[0];
    println!("{} vertices, {} triangles", set.set.vertices.len(), set.set.topology.len());

    let cp = critical_point_from_set(&set.standardized)?;
    let original: Vec<f64> = cp.iter().enumerate().map(|(d, z)| z * result.scaling[d] + result.centering[d]).collect();
    println!("critical point of the surface: {original:.4?}");

    let path = std::env::temp_dir().join("mvq-surface.stl");
    set.set.write_stl(File::create(&path)?, "upper_95")?;
    println!("wrote {}", path.display());
    Ok(())
}

//! Normal tolerance factors and the elliptical tolerance-region factor.

use mvq::tolerance::{chi_square_quantile, tolerance_factor, tolerance_region_factor, ToleranceSpec};

fn main() -> anyhow::Result<()> {
    println!("{:>6} {:>10} {:>10}", "n", "k(0.95)", "k(0.983)");
    for n in [9, 30, 100, 1000] {
        let k = tolerance_factor(&ToleranceSpec::new(0.9, 0.95, n)?)?;
        let kb = tolerance_factor(&ToleranceSpec::new(0.9, 1.0 - 0.05 / 3.0, n)?)?;
        println!("{n:>6} {k:>10.4} {kb:>10.4}");
    }

    // converges to the chi-square quantile as n grows
    for n in [20, 200, 1_000_000] {
        let r = tolerance_region_factor(n, 2, 0.9, 0.95, 20_000, 5)?;
        println!("region factor n = {n}: {r:.3}");
    }
    println!("chi-square limit: {:.3}", chi_square_quantile(0.9, 2)?);
    Ok(())
}

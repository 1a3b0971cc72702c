//! Chi-square diagnostics of squared Mahalanobis distances for the shock
//! sample: Anderson-Darling, Kolmogorov-Smirnov and a QQ envelope.

use mvq::fixtures::fixture_data;
use mvq::normality::{ad_test_chisq, ks_test_chisq, qq_envelope};
use mvq::numeric::sort_floats;
use mvq::stats::mahalanobis_sq_all;

fn main() -> anyhow::Result<()> {
    let data = fixture_data();
    let d = mahalanobis_sq_all(&data)?;
    let ad = ad_test_chisq(&d, 3)?;
    let ks = ks_test_chisq(&d, 3)?;
    println!("Anderson-Darling A2 = {:.4}, p = {:.4}", ad.statistic, ad.p_value);
    println!("Kolmogorov-Smirnov D = {:.4}, p = {:.4}", ks.statistic, ks.p_value);

    let env = qq_envelope(data.n(), 3, 0.95, 5000, 1)?;
    let mut sorted = d.clone();
    sort_floats(&mut sorted);
    println!("{:>4} {:>8} {:>8} {:>8} {:>8}", "rank", "lower", "chi2", "upper", "d");
    for (p, v) in env.points.iter().zip(&sorted) {
        println!("{:>4} {:>8.3} {:>8.3} {:>8.3} {:>8.3}", p.rank, p.lower, p.theoretical, p.upper, v);
    }
    println!("all inside the envelope: {}", env.contains(&d));
    Ok(())
}

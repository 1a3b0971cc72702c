//! Multi-axis shock specification over several frequencies. The embedded
//! 200.24 Hz sample is scaled to mimic neighbouring frequency lines.

use mvq::bootstrap::BootstrapConfig;
use mvq::casestudy::{run_case_study, write_diagnostics_csv, write_specification_csv, CaseStudyConfig, SrsEnsemble};
use mvq::fixtures::{fixture_data, FIXTURE_AXES};
use mvq::stats::DataMatrix;

fn main() -> anyhow::Result<()> {
    let base = fixture_data();
    let freqs = vec![100.0, 200.24, 400.0];
    let data = freqs
        .iter()
        .map(|f| DataMatrix::new(base.values() * (f / 200.24_f64).sqrt()))
        .collect::<mvq::Result<Vec<_>>>()?;
    let ensemble = SrsEnsemble::new(freqs, data, FIXTURE_AXES.iter().map(|s| s.to_string()).collect())?;

    let config = CaseStudyConfig {
        bootstrap: BootstrapConfig { b: 1000, seed: 9, ..CaseStudyConfig::default().bootstrap },
        ..CaseStudyConfig::default()
    };
    let lines = run_case_study(&ensemble, &config)?;
    write_specification_csv(&lines, ensemble.axes(), std::io::stdout())?;
    println!();
    write_diagnostics_csv(&lines, std::io::stdout())?;
    Ok(())
}

//! Embedded tri-axial shock response spectrum values (G) at 200.24 Hz: nine
//! repeated shocks, columns X, Y, Z.

use crate::stats::DataMatrix;

pub const FIXTURE_FREQUENCY_HZ: f64 = 200.24;

pub const FIXTURE_AXES: [&str; 3] = ["X", "Y", "Z"];

pub const FIXTURE_ROWS: [[f64; 3]; 9] = [
    [8.49, 5.76, 2.75],
    [6.44, 7.81, 3.80],
    [5.26, 5.65, 2.67],
    [3.27, 4.27, 3.27],
    [4.81, 5.65, 2.47],
    [3.66, 10.64, 3.24],
    [4.96, 6.63, 3.62],
    [5.23, 14.61, 3.39],
    [5.27, 10.14, 4.06],
];

/// Reference squared Mahalanobis distances for the rows above, computed
/// from the unrounded measurements and given to two decimals.
pub const FIXTURE_MAHALANOBIS: [f64; 9] = [4.99, 2.12, 1.25, 3.36, 2.33, 1.95, 1.07, 4.64, 2.28];

pub fn fixture_data() -> DataMatrix {
    let rows: Vec<Vec<f64>> = FIXTURE_ROWS.iter().map(|r| r.to_vec()).collect();
    DataMatrix::from_rows(&rows).expect("fixture is well formed")
}

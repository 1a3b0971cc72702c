//! Quantile surfaces on grids: CDF tensors, upsampling, level-set
//! extraction, critical points of extracted sets and mesh export.

mod contour;
mod export;
mod grid;

pub use contour::{critical_point_from_set, extract_quantile, Domain, GridMeta, QuantileSet, Topology};
pub use grid::{
    domain_mass_bound, evaluate_cdf_grid, evaluate_cdf_on_axes, upsample_grid, CdfGrid, GridSpec, MAX_GRID_CELLS,
    MIN_DOMAIN_HALF_WIDTH,
};
pub(crate) use grid::{line_coordinates, LineEvaluator};

use crate::error::Result;
use crate::quantile::DominanceRule;

/// Dominance under an estimated CDF grid: a point is dominated when the
/// interpolated grid value at its standardized coordinates is at most tau.
pub struct GridLevel<'a> {
    pub grid: &'a CdfGrid,
    pub centering: Vec<f64>,
    pub scaling: Vec<f64>,
    pub tau: f64,
}

impl DominanceRule for GridLevel<'_> {
    fn dominated(&self, x: &[f64]) -> Result<bool> {
        let z: Vec<f64> = x.iter().enumerate().map(|(d, v)| (v - self.centering[d]) / self.scaling[d]).collect();
        Ok(self.grid.interpolate(&z) <= self.tau)
    }
}

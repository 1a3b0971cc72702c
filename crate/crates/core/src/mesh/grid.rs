//! Regular grids over the standardized domain, CDF tensors evaluated on
//! them, and cubic-convolution upsampling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mvn::bvn::bvn_cdf;
use crate::mvn::tvn::{Conditioned, LOWER};
use crate::mvn::{norm_cdf, CdfAccuracy};
use crate::stats::MvnModel;

/// Largest number of grid nodes any tensor may hold.
pub const MAX_GRID_CELLS: u128 = 1 << 31;

/// Minimum half-width of the evaluation domain in standard deviations.
pub const MIN_DOMAIN_HALF_WIDTH: f64 = 4.0;

/// Axis-aligned cube `[lo, hi]^q` sampled with a uniform step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q: usize,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(q: usize, lo: f64, hi: f64, step: f64) -> Result<Self> {
        let spec = Self { q, lo, hi, step };
        spec.validate()?;
        Ok(spec)
    }

    /// Step 0.01 in two dimensions, 0.1 in three, over [-4, 4].
    pub fn default_for(q: usize) -> Result<Self> {
        let step = match q {
            2 => 0.01,
            3 => 0.1,
            _ => return invalid(format!("grids support q = 2 or 3, got {q}")),
        };
        Self::new(q, -MIN_DOMAIN_HALF_WIDTH, MIN_DOMAIN_HALF_WIDTH, step)
    }

    pub fn with_step(mut self, step: f64) -> Result<Self> {
        self.step = step;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q != 2 && self.q != 3 {
            return invalid(format!("grids support q = 2 or 3, got {}", self.q));
        }
        if !(self.step > 0.0) || !self.lo.is_finite() || !self.hi.is_finite() || self.lo >= self.hi {
            return invalid("grid requires lo < hi and a positive step");
        }
        if self.lo > -MIN_DOMAIN_HALF_WIDTH || self.hi < MIN_DOMAIN_HALF_WIDTH {
            return invalid(format!(
                "grid domain [{}, {}] must cover [-{MIN_DOMAIN_HALF_WIDTH}, {MIN_DOMAIN_HALF_WIDTH}]",
                self.lo, self.hi
            ));
        }
        let intervals = (self.hi - self.lo) / self.step;
        if (intervals - intervals.round()).abs() > 1e-6 * intervals.max(1.0) {
            return invalid(format!("step {} does not divide [{}, {}]", self.step, self.lo, self.hi));
        }
        let cells = self.cell_count();
        if cells > MAX_GRID_CELLS {
            return Err(Error::Resource { cells, cap: MAX_GRID_CELLS });
        }
        Ok(())
    }

    pub fn nodes_per_axis(&self) -> usize {
        ((self.hi - self.lo) / self.step).round() as usize + 1
    }

    pub fn cell_count(&self) -> u128 {
        (self.nodes_per_axis() as u128).pow(self.q as u32)
    }

    pub fn axis(&self) -> Vec<f64> {
        let m = self.nodes_per_axis();
        (0..m).map(|i| if i + 1 == m { self.hi } else { self.lo + i as f64 * self.step }).collect()
    }

    pub fn axes(&self) -> Vec<Vec<f64>> {
        vec![self.axis(); self.q]
    }
}

/// CDF values on a rectilinear grid. Values are stored with axis 0 varying
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfGrid {
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
    /// refinement factor applied after evaluation
    pub upsample: usize,
}

impl CdfGrid {
    pub fn from_values(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return invalid("grids have one to three axes");
        }
        for a in &axes {
            if a.len() < 2 || a.windows(2).any(|w| !(w[1] > w[0])) {
                return invalid("grid axes need at least two strictly increasing nodes");
            }
        }
        let count: usize = axes.iter().map(Vec::len).product();
        if values.len() != count {
            return invalid(format!("expected {count} grid values, got {}", values.len()));
        }
        Ok(Self { axes, values, upsample: 1 })
    }

    pub fn q(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        let mut stride = 1;
        for (d, &i) in idx.iter().enumerate() {
            flat += i * stride;
            stride *= self.axes[d].len();
        }
        flat
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.index(idx)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Multilinear interpolation; points outside the grid are clamped onto it.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let q = self.q();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..q {
            let axis = &self.axes[d];
            let m = axis.len();
            let v = x[d].clamp(axis[0], axis[m - 1]);
            // uniform axes locate the cell directly; others fall back to search
            let guess = ((v - axis[0]) / (axis[1] - axis[0])) as usize;
            let mut i = guess.min(m - 2);
            if !(axis[i] <= v && v <= axis[i + 1]) {
                i = axis.partition_point(|&a| a <= v).saturating_sub(1).min(m - 2);
            }
            base[d] = i;
            frac[d] = ((v - axis[i]) / (axis[i + 1] - axis[i])).clamp(0.0, 1.0);
        }
        let mut total = 0.0;
        let mut idx = [0usize; 3];
        for corner in 0..(1usize << q) {
            let mut w = 1.0;
            for d in 0..q {
                let bit = (corner >> d) & 1;
                idx[d] = base[d] + bit;
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            if w != 0.0 {
                total += w * self.get(&idx[..q]);
            }
        }
        total
    }

    /// Largest decrease between neighbouring nodes along any axis.
    pub fn max_monotonicity_violation(&self) -> f64 {
        let shape = self.shape();
        let mut worst: f64 = 0.0;
        let mut stride = 1;
        for &len in &shape {
            for flat in 0..self.values.len() {
                let coord = (flat / stride) % len;
                if coord + 1 < len {
                    worst = worst.max(self.values[flat] - self.values[flat + stride]);
                }
            }
            stride *= len;
        }
        worst
    }
}

/// A model prepared for evaluating its CDF along grid lines parallel to
/// axis 0.
#[derive(Debug, Clone)]
pub(crate) struct LineEvaluator {
    mean: Vec<f64>,
    sd: Vec<f64>,
    r01: f64,
    cond: Option<Conditioned>,
    r12: f64,
    tol: f64,
}

impl LineEvaluator {
    pub fn new(model: &MvnModel, acc: &CdfAccuracy) -> Result<Self> {
        acc.validate()?;
        let q = model.dim();
        if q != 2 && q != 3 {
            return invalid(format!("grid evaluation supports q = 2 or 3, got {q}"));
        }
        model.cholesky()?;
        let c = model.correlation();
        let sd = model.std_devs();
        Ok(Self {
            mean: model.mean.iter().copied().collect(),
            sd: sd.iter().copied().collect(),
            r01: c[(0, 1)],
            cond: (q == 3).then(|| Conditioned::new(c[(0, 1)], c[(0, 2)], c[(1, 2)])),
            r12: if q == 3 { c[(1, 2)] } else { 0.0 },
            // per-increment tolerance; errors accumulate along a line
            tol: (acc.abs_tol * 1e-4).max(1e-13),
        })
    }

    /// Fills `out` with the CDF along the line whose axis-1.. node
    /// coordinates are `rest`, at the axis-0 positions `xs`.
    pub fn line(&self, xs: &[f64], rest: &[f64], out: &mut [f64]) {
        let z = |d: usize, v: f64| (v - self.mean[d]) / self.sd[d];
        match &self.cond {
            None => {
                let k = z(1, rest[0]);
                for (o, &x) in out.iter_mut().zip(xs) {
                    *o = bvn_cdf(z(0, x), k, self.r01);
                }
            }
            Some(cond) => {
                let a1 = z(1, rest[0]);
                let a2 = z(2, rest[1]);
                if a1 <= -40.0 || a2 <= -40.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return;
                }
                let ceiling = -LOWER;
                let joint_rest = bvn_cdf(a1, a2, self.r12);
                let mut acc = 0.0;
                let mut prev = LOWER;
                for (o, &x) in out.iter_mut().zip(xs) {
                    let t = z(0, x);
                    let upto = t.clamp(LOWER, ceiling);
                    if upto > prev {
                        acc += cond.integrate(prev, upto, a1, a2, self.tol);
                        prev = upto;
                    }
                    let tail = if t > ceiling { (norm_cdf(t) - norm_cdf(ceiling)) * joint_rest } else { 0.0 };
                    *o = (acc + tail).clamp(0.0, 1.0);
                }
            }
        }
    }
}

/// Evaluates the model CDF at every node of the given rectilinear axes.
pub fn evaluate_cdf_on_axes(model: &MvnModel, axes: Vec<Vec<f64>>, acc: &CdfAccuracy) -> Result<CdfGrid> {
    if axes.len() != model.dim() {
        return invalid("axis count must equal the model dimension");
    }
    let cells: u128 = axes.iter().map(|a| a.len() as u128).product();
    if cells > MAX_GRID_CELLS {
        return Err(Error::Resource { cells, cap: MAX_GRID_CELLS });
    }
    let eval = LineEvaluator::new(model, acc)?;
    let m0 = axes[0].len();
    let lines = line_coordinates(&axes);
    let mut values = vec![0.0; cells as usize];
    values.par_chunks_mut(m0).zip(lines.par_iter()).for_each(|(chunk, rest)| eval.line(&axes[0], rest, chunk));
    CdfGrid::from_values(axes, values)
}

/// Evaluates the CDF of `model` on the grid described by `spec`.
pub fn evaluate_cdf_grid(model: &MvnModel, spec: &GridSpec, acc: &CdfAccuracy) -> Result<CdfGrid> {
    spec.validate()?;
    if spec.q != model.dim() {
        return invalid(format!("grid has q = {}, model has q = {}", spec.q, model.dim()));
    }
    evaluate_cdf_on_axes(model, spec.axes(), acc)
}

/// Coordinates on axes 1.. for every line parallel to axis 0, in storage order.
pub(crate) fn line_coordinates(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match axes.len() {
        2 => axes[1].iter().map(|&y| vec![y]).collect(),
        3 => {
            let mut out = Vec::with_capacity(axes[1].len() * axes[2].len());
            for &zv in &axes[2] {
                for &y in &axes[1] {
                    out.push(vec![y, zv]);
                }
            }
            out
        }
        _ => vec![vec![]],
    }
}

/// Lower bound on the probability mass inside [-4, 4]^q obtained from the
/// 2q univariate tails outside the cube.
pub fn domain_mass_bound(q: usize) -> f64 {
    1.0 - 2.0 * q as f64 * norm_cdf(-MIN_DOMAIN_HALF_WIDTH)
}

fn keys(s: f64) -> [f64; 4] {
    // cubic convolution weights for offsets -1, 0, 1, 2 with a = -0.5
    const A: f64 = -0.5;
    let w = |x: f64| {
        let x = x.abs();
        if x <= 1.0 {
            (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
        } else if x < 2.0 {
            A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
        } else {
            0.0
        }
    };
    [w(s + 1.0), w(s), w(1.0 - s), w(2.0 - s)]
}

/// Refines every axis by an integer factor with separable cubic
/// convolution. Original nodes are preserved; ghost nodes beyond the edges
/// are extrapolated linearly, and results are clamped to [0, 1].
pub fn upsample_grid(grid: &CdfGrid, factor: usize) -> Result<CdfGrid> {
    if factor == 0 {
        return invalid("upsampling factor must be at least 1");
    }
    if factor == 1 {
        return Ok(grid.clone());
    }
    let cells: u128 = grid.shape().iter().map(|&m| ((m - 1) * factor + 1) as u128).product();
    if cells > MAX_GRID_CELLS {
        return Err(Error::Resource { cells, cap: MAX_GRID_CELLS });
    }
    let weights: Vec<[f64; 4]> = (0..factor).map(|k| keys(k as f64 / factor as f64)).collect();
    let mut axes = grid.axes.clone();
    let mut values = grid.values.clone();
    for d in 0..grid.q() {
        let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
        let m = shape[d];
        let m_new = (m - 1) * factor + 1;
        let inner: usize = shape[..d].iter().product();
        let outer: usize = shape[d + 1..].iter().product();
        let mut out = vec![0.0; inner * m_new * outer];
        let mut line = vec![0.0; m];
        for o in 0..outer {
            for i in 0..inner {
                for (k, l) in line.iter_mut().enumerate() {
                    *l = values[i + inner * (k + m * o)];
                }
                let at = |k: isize| -> f64 {
                    if k < 0 {
                        2.0 * line[0] - line[1]
                    } else if k as usize >= m {
                        2.0 * line[m - 1] - line[m - 2]
                    } else {
                        line[k as usize]
                    }
                };
                for j in 0..m_new {
                    let p = (j / factor) as isize;
                    let r = j % factor;
                    let v = if r == 0 {
                        line[p as usize]
                    } else {
                        let w = &weights[r];
                        w[0] * at(p - 1) + w[1] * at(p) + w[2] * at(p + 1) + w[3] * at(p + 2)
                    };
                    out[i + inner * (j + m_new * o)] = v;
                }
            }
        }
        let a = &axes[d];
        let mut refined = Vec::with_capacity(m_new);
        for k in 0..m - 1 {
            for r in 0..factor {
                refined.push(a[k] + (a[k + 1] - a[k]) * r as f64 / factor as f64);
            }
        }
        refined.push(a[m - 1]);
        axes[d] = refined;
        values = out;
    }
    values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let mut g = CdfGrid::from_values(axes, values)?;
    g.upsample = grid.upsample * factor;
    Ok(g)
}

//! Level-set extraction from CDF grids: marching squares for polylines in
//! two dimensions and marching tetrahedra (six tetrahedra per cube) for
//! triangle meshes in three.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::grid::CdfGrid;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Standardized,
    Original,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Segments(Vec<[usize; 2]>),
    Triangles(Vec<[usize; 3]>),
}

impl Topology {
    pub fn len(&self) -> usize {
        match self {
            Topology::Segments(s) => s.len(),
            Topology::Triangles(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Summary of the grid a set was extracted from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub shape: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub upsample: usize,
}

impl GridMeta {
    pub fn of(grid: &CdfGrid) -> Self {
        Self {
            shape: grid.shape(),
            lo: grid.axes().iter().map(|a| a[0]).collect(),
            hi: grid.axes().iter().map(|a| a[a.len() - 1]).collect(),
            upsample: grid.upsample,
        }
    }
}

/// Polyline or triangulated surface approximating {x : F(x) = tau}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSet {
    pub tau: f64,
    pub domain: Domain,
    pub vertices: Vec<Vec<f64>>,
    pub topology: Topology,
    pub grid: GridMeta,
}

impl QuantileSet {
    pub fn q(&self) -> usize {
        self.grid.shape.len()
    }

    /// Maps the vertices back to the original domain by x * scaling + centering.
    pub fn to_original(&self, centering: &[f64], scaling: &[f64]) -> Result<QuantileSet> {
        if self.domain != Domain::Standardized {
            return Err(Error::Geometry("set is already in the original domain".into()));
        }
        if centering.len() != self.q() || scaling.len() != self.q() {
            return invalid("centering/scaling length must equal q");
        }
        let mut out = self.clone();
        for v in &mut out.vertices {
            for (d, x) in v.iter_mut().enumerate() {
                *x = *x * scaling[d] + centering[d];
            }
        }
        out.domain = Domain::Original;
        Ok(out)
    }

    /// |F(v) - tau| for every vertex under a reference CDF.
    pub fn vertex_residuals<F: FnMut(&[f64]) -> Result<f64>>(&self, mut cdf: F) -> Result<Vec<f64>> {
        self.vertices.iter().map(|v| cdf(v).map(|p| (p - self.tau).abs())).collect()
    }
}

/// Vertex pool keyed by the grid edge each vertex lies on.
struct Pool<'a> {
    grid: &'a CdfGrid,
    tau: f64,
    map: HashMap<(usize, usize), usize>,
    vertices: Vec<Vec<f64>>,
}

impl<'a> Pool<'a> {
    fn new(grid: &'a CdfGrid, tau: f64) -> Self {
        Self { grid, tau, map: HashMap::new(), vertices: Vec::new() }
    }

    fn coords(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().enumerate().map(|(d, &i)| self.grid.axes()[d][i]).collect()
    }

    /// Vertex on the edge between two nodes whose values straddle tau.
    fn vertex(&mut self, a: &[usize], b: &[usize]) -> usize {
        let fa = self.grid.index(a);
        let fb = self.grid.index(b);
        let key = (fa.min(fb), fa.max(fb));
        if let Some(&v) = self.map.get(&key) {
            return v;
        }
        let va = self.grid.values()[fa];
        let vb = self.grid.values()[fb];
        let t = if vb != va { ((self.tau - va) / (vb - va)).clamp(0.0, 1.0) } else { 0.5 };
        let pa = self.coords(a);
        let pb = self.coords(b);
        let p = pa.iter().zip(&pb).map(|(x, y)| x + t * (y - x)).collect();
        self.vertices.push(p);
        let id = self.vertices.len() - 1;
        self.map.insert(key, id);
        id
    }
}

/// Extracts the tau level set of a 2-D or 3-D CDF grid.
pub fn extract_quantile(grid: &CdfGrid, tau: f64) -> Result<QuantileSet> {
    if !(tau > 0.0 && tau < 1.0) {
        return invalid(format!("tau must lie in (0, 1), got {tau}"));
    }
    let (min, max) = grid.min_max();
    if !(tau > min && tau < max) {
        return Err(Error::EmptyQuantileSet { tau, min, max });
    }
    let mut pool = Pool::new(grid, tau);
    let topology = match grid.q() {
        2 => Topology::Segments(marching_squares(grid, tau, &mut pool)),
        3 => Topology::Triangles(marching_tetrahedra(grid, tau, &mut pool)),
        q => return invalid(format!("level sets need q = 2 or 3, got {q}")),
    };
    Ok(QuantileSet { tau, domain: Domain::Standardized, vertices: pool.vertices, topology, grid: GridMeta::of(grid) })
}

fn marching_squares(grid: &CdfGrid, tau: f64, pool: &mut Pool) -> Vec<[usize; 2]> {
    let shape = grid.shape();
    let mut segments = Vec::new();
    for j in 0..shape[1] - 1 {
        for i in 0..shape[0] - 1 {
            // corners in ring order; edge k joins corner k and corner k + 1
            let corners = [[i, j], [i + 1, j], [i + 1, j + 1], [i, j + 1]];
            let vals = corners.map(|c| grid.get(&c));
            let above = vals.map(|v| v > tau);
            let crossing: Vec<usize> = (0..4).filter(|&k| above[k] != above[(k + 1) % 4]).collect();
            let mut vertex = |k: usize| pool.vertex(&corners[k], &corners[(k + 1) % 4]);
            match crossing.len() {
                2 => segments.push([vertex(crossing[0]), vertex(crossing[1])]),
                4 => {
                    // saddle: the centre value decides which diagonal is connected
                    let centre_above = vals.iter().sum::<f64>() / 4.0 > tau;
                    for (k, &a) in above.iter().enumerate() {
                        if a != centre_above {
                            // isolate corner k by joining its two incident edges
                            segments.push([vertex((k + 3) % 4), vertex(k)]);
                        }
                    }
                }
                _ => {}
            }
        }
    }
    segments
}

const KUHN: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn marching_tetrahedra(grid: &CdfGrid, tau: f64, pool: &mut Pool) -> Vec<[usize; 3]> {
    let shape = grid.shape();
    let mut triangles = Vec::new();
    for k in 0..shape[2] - 1 {
        for j in 0..shape[1] - 1 {
            for i in 0..shape[0] - 1 {
                let base = [i, j, k];
                for perm in KUHN {
                    let mut tet = [base; 4];
                    for s in 1..4 {
                        tet[s] = tet[s - 1];
                        tet[s][perm[s - 1]] += 1;
                    }
                    polygonize(grid, tau, &tet, pool, &mut triangles);
                }
            }
        }
    }
    triangles
}

fn polygonize(grid: &CdfGrid, tau: f64, tet: &[[usize; 3]; 4], pool: &mut Pool, out: &mut Vec<[usize; 3]>) {
    let above: Vec<bool> = tet.iter().map(|n| grid.get(n) > tau).collect();
    let up: Vec<usize> = (0..4).filter(|&s| above[s]).collect();
    let down: Vec<usize> = (0..4).filter(|&s| !above[s]).collect();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    match (down.len(), up.len()) {
        (1, 3) | (3, 1) => {
            let (lone, rest) = if up.len() == 1 { (up[0], &down) } else { (down[0], &up) };
            let v: Vec<usize> = rest.iter().map(|&r| pool.vertex(&tet[lone], &tet[r])).collect();
            tris.push([v[0], v[1], v[2]]);
        }
        (2, 2) => {
            let (p, q) = (down[0], down[1]);
            let (r, s) = (up[0], up[1]);
            let pr = pool.vertex(&tet[p], &tet[r]);
            let ps = pool.vertex(&tet[p], &tet[s]);
            let qs = pool.vertex(&tet[q], &tet[s]);
            let qr = pool.vertex(&tet[q], &tet[r]);
            tris.push([pr, ps, qs]);
            tris.push([pr, qs, qr]);
        }
        _ => return,
    }
    // orient normals towards increasing CDF
    let centroid = |idx: &[usize]| -> [f64; 3] {
        let mut c = [0.0; 3];
        for &s in idx {
            for d in 0..3 {
                c[d] += tet[s][d] as f64 / idx.len() as f64;
            }
        }
        c
    };
    let hi = centroid(&up);
    let lo = centroid(&down);
    let dir = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    for mut t in tris {
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            continue;
        }
        let n = normal(&pool.vertices[t[0]], &pool.vertices[t[1]], &pool.vertices[t[2]]);
        if n.iter().all(|c| c.abs() < 1e-300) {
            continue;
        }
        if n[0] * dir[0] + n[1] * dir[1] + n[2] * dir[2] < 0.0 {
            t.swap(1, 2);
        }
        out.push(t);
    }
}

pub(crate) fn normal(a: &[f64], b: &[f64], c: &[f64]) -> [f64; 3] {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
}

/// Intersection of a standardized quantile set with the main diagonal.
pub fn critical_point_from_set(set: &QuantileSet) -> Result<Vec<f64>> {
    if set.domain != Domain::Standardized {
        return Err(Error::Geometry("critical points are located in the standardized domain".into()));
    }
    let mut best: Option<f64> = None;
    let mut consider = |s: f64| best = Some(best.map_or(s, |b: f64| b.max(s)));
    match &set.topology {
        Topology::Segments(segs) => {
            for &[a, b] in segs {
                let (pa, pb) = (&set.vertices[a], &set.vertices[b]);
                let fa = pa[0] - pa[1];
                let fb = pb[0] - pb[1];
                if fa == 0.0 && fb == 0.0 {
                    continue;
                }
                if fa * fb <= 0.0 {
                    let t = fa / (fa - fb);
                    let x = pa[0] + t * (pb[0] - pa[0]);
                    let y = pa[1] + t * (pb[1] - pa[1]);
                    consider(0.5 * (x + y));
                }
            }
        }
        Topology::Triangles(tris) => {
            for t in tris {
                if let Some(s) = diagonal_hit(&set.vertices[t[0]], &set.vertices[t[1]], &set.vertices[t[2]]) {
                    consider(s);
                }
            }
        }
    }
    match best {
        Some(s) => Ok(vec![s; set.q()]),
        None => Err(Error::Geometry("quantile set does not meet the diagonal".into())),
    }
}

/// Parameter s where the line s (1, 1, 1) crosses triangle abc.
fn diagonal_hit(a: &[f64], b: &[f64], c: &[f64]) -> Option<f64> {
    let d = [1.0, 1.0, 1.0];
    let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let p = [d[1] * e2[2] - d[2] * e2[1], d[2] * e2[0] - d[0] * e2[2], d[0] * e2[1] - d[1] * e2[0]];
    let det = e1[0] * p[0] + e1[1] * p[1] + e1[2] * p[2];
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let t = [-a[0], -a[1], -a[2]];
    let u = (t[0] * p[0] + t[1] * p[1] + t[2] * p[2]) * inv;
    let eps = 1e-12;
    if !(-eps..=1.0 + eps).contains(&u) {
        return None;
    }
    let qv = [t[1] * e1[2] - t[2] * e1[1], t[2] * e1[0] - t[0] * e1[2], t[0] * e1[1] - t[1] * e1[0]];
    let v = (d[0] * qv[0] + d[1] * qv[1] + d[2] * qv[2]) * inv;
    if v < -eps || u + v > 1.0 + eps {
        return None;
    }
    // a + u e1 + v e2 = s d; recover s from the mean coordinate
    Some((0..3).map(|k| a[k] + u * e1[k] + v * e2[k]).sum::<f64>() / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planar_2d(f: impl Fn(f64, f64) -> f64, lo: f64, hi: f64, m: usize) -> CdfGrid {
        let axis: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
        let mut values = Vec::new();
        for &y in &axis {
            for &x in &axis {
                values.push(f(x, y));
            }
        }
        CdfGrid::from_values(vec![axis.clone(), axis], values).unwrap()
    }

    #[test]
    fn planar_field_gives_straight_line() {
        // 0.25 (x + y) hits 0.5 on x + y = 2
        let g = planar_2d(|x, y| 0.25 * (x + y), 0.0, 2.0, 21);
        let set = extract_quantile(&g, 0.5).unwrap();
        assert!(!set.topology.is_empty());
        for v in &set.vertices {
            assert!((v[0] + v[1] - 2.0).abs() < 1e-12);
        }
        let cp = critical_point_from_set(&set).unwrap();
        assert!((cp[0] - 1.0).abs() < 1e-12 && (cp[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vertices_are_shared() {
        let g = planar_2d(|x, y| 0.1 * x * x + 0.05 * y, 0.0, 3.0, 31);
        let set = extract_quantile(&g, 0.3).unwrap();
        if let Topology::Segments(s) = &set.topology {
            // an open polyline has two more endpoints than interior joints
            let mut degree = vec![0; set.vertices.len()];
            for seg in s {
                degree[seg[0]] += 1;
                degree[seg[1]] += 1;
            }
            assert_eq!(degree.iter().filter(|&&d| d == 1).count(), 2);
            assert!(degree.iter().all(|&d| d == 1 || d == 2));
        }
    }

    #[test]
    fn empty_level_errors() {
        let g = planar_2d(|x, y| 0.1 * (x + y), 0.0, 1.0, 5);
        assert!(matches!(extract_quantile(&g, 0.9), Err(Error::EmptyQuantileSet { .. })));
    }

    #[test]
    fn saddle_cell_yields_two_segments() {
        let g = CdfGrid::from_values(vec![vec![0.0, 1.0], vec![0.0, 1.0]], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let set = extract_quantile(&g, 0.4).unwrap();
        assert_eq!(set.topology.len(), 2);
    }

    #[test]
    fn planar_3d_field_gives_plane() {
        let m = 9;
        let axis: Vec<f64> = (0..m).map(|i| i as f64 * 0.25).collect();
        let mut values = Vec::new();
        for &z in &axis {
            for &y in &axis {
                for &x in &axis {
                    values.push((x + y + z) / 6.0);
                }
            }
        }
        let g = CdfGrid::from_values(vec![axis.clone(), axis.clone(), axis], values).unwrap();
        let set = extract_quantile(&g, 0.45).unwrap();
        assert!(matches!(set.topology, Topology::Triangles(_)));
        for v in &set.vertices {
            assert!((v.iter().sum::<f64>() - 2.7).abs() < 1e-12);
        }
        if let Topology::Triangles(ts) = &set.topology {
            for t in ts {
                let n = normal(&set.vertices[t[0]], &set.vertices[t[1]], &set.vertices[t[2]]);
                assert!(n[0] + n[1] + n[2] > 0.0);
            }
        }
        let cp = critical_point_from_set(&set).unwrap();
        assert!(cp.iter().all(|c| (c - 0.9).abs() < 1e-12));
    }

    #[test]
    fn original_domain_conversion() {
        let g = planar_2d(|x, y| 0.25 * (x + y), 0.0, 2.0, 11);
        let set = extract_quantile(&g, 0.5).unwrap();
        let orig = set.to_original(&[10.0, 0.0], &[2.0, 3.0]).unwrap();
        assert_eq!(orig.domain, Domain::Original);
        assert!((orig.vertices[0][0] - (set.vertices[0][0] * 2.0 + 10.0)).abs() < 1e-12);
        assert!(critical_point_from_set(&orig).is_err());
        assert!(orig.to_original(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }
}

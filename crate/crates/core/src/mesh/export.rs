//! Writers for quantile sets: CSV vertex and element tables, JSON and
//! ASCII STL.

use std::io::Write;

use super::contour::{normal, QuantileSet, Topology};
use crate::error::{Error, Result};

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

impl QuantileSet {
    /// One row per vertex: `id,x,y[,z]`.
    pub fn write_vertices_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string()];
        header.extend(AXIS_NAMES[..self.q()].iter().map(|s| s.to_string()));
        out.write_record(&header)?;
        for (i, v) in self.vertices.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(v.iter().map(|x| format!("{x:.10}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// One row per segment (`a,b`) or triangle (`a,b,c`) of vertex ids.
    pub fn write_elements_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        match &self.topology {
            Topology::Segments(s) => {
                out.write_record(["a", "b"])?;
                for e in s {
                    out.write_record(e.iter().map(|i| i.to_string()))?;
                }
            }
            Topology::Triangles(t) => {
                out.write_record(["a", "b", "c"])?;
                for e in t {
                    out.write_record(e.iter().map(|i| i.to_string()))?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// ASCII STL of a triangulated surface.
    pub fn write_stl<W: Write>(&self, mut w: W, name: &str) -> Result<()> {
        let Topology::Triangles(tris) = &self.topology else {
            return Err(Error::Geometry("STL export needs a triangulated surface".into()));
        };
        writeln!(w, "solid {name}")?;
        for t in tris {
            let (a, b, c) = (&self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]]);
            let n = normal(a, b, c);
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt().max(1e-300);
            writeln!(w, "  facet normal {:e} {:e} {:e}", n[0] / len, n[1] / len, n[2] / len)?;
            writeln!(w, "    outer loop")?;
            for p in [a, b, c] {
                writeln!(w, "      vertex {:e} {:e} {:e}", p[0], p[1], p[2])?;
            }
            writeln!(w, "    endloop")?;
            writeln!(w, "  endfacet")?;
        }
        writeln!(w, "endsolid {name}")?;
        Ok(())
    }
}

//! Legacy ASCII VTK writers: unstructured triangle grids for bulk regions
//! and polyline files for the membrane curve with its surface species.

use morphosim_core::curve::CurveState;
use morphosim_core::mesh::Triangulation;
use std::io::{BufWriter, Write};
use std::path::Path;

pub fn write_vtk_bulk(
    path: &Path,
    title: &str,
    comp: &Triangulation,
    positions: &[[f64; 2]],
    species: &[(&str, &[f64])],
) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", positions.len())?;
    for p in positions {
        writeln!(out, "{:.16e} {:.16e} 0", p[0], p[1])?;
    }
    writeln!(out, "CELLS {} {}", comp.triangles.len(), 4 * comp.triangles.len())?;
    for t in &comp.triangles {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {}", comp.triangles.len())?;
    for _ in &comp.triangles {
        writeln!(out, "5")?;
    }
    if !species.is_empty() {
        writeln!(out, "POINT_DATA {}", positions.len())?;
        for (name, values) in species {
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in *values {
                writeln!(out, "{v:.16e}")?;
            }
        }
    }
    out.flush()
}

pub fn write_vtk_curve(
    path: &Path,
    title: &str,
    curve: &CurveState,
    species: &[(&str, &[f64])],
) -> std::io::Result<()> {
    let n = curve.len();
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {n} double")?;
    for p in &curve.positions {
        writeln!(out, "{:.16e} {:.16e} 0", p[0], p[1])?;
    }
    writeln!(out, "CELLS {n} {}", 3 * n)?;
    for i in 0..n {
        writeln!(out, "2 {} {}", i, (i + 1) % n)?;
    }
    writeln!(out, "CELL_TYPES {n}")?;
    for _ in 0..n {
        writeln!(out, "3")?; // VTK_LINE
    }
    if !species.is_empty() {
        writeln!(out, "POINT_DATA {n}")?;
        for (name, values) in species {
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in *values {
                writeln!(out, "{v:.16e}")?;
            }
        }
    }
    out.flush()
}

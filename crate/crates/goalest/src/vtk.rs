//! Legacy ASCII VTK export of meshes with optional nodal and per-element
//! fields, for external inspection of solutions, indicators, and size
//! fields.

use std::io::Write;
use std::path::Path;

use crate::mesh::{Mesh, Region};
use crate::Result;

/// Writes an unstructured-grid VTK file. `point_data` fields must have one
/// value per vertex, `cell_data` fields one value per triangle. The
/// subdomain tag is always included as cell data.
pub fn write_vtk(
    path: &Path,
    mesh: &Mesh,
    point_data: &[(&str, &[f64])],
    cell_data: &[(&str, &[f64])],
) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "goalest mesh")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;

    writeln!(out, "POINTS {} double", mesh.n_vertices())?;
    for p in mesh.vertices() {
        writeln!(out, "{:.17e} {:.17e} 0.0", p[0], p[1])?;
    }

    let nt = mesh.n_triangles();
    writeln!(out, "CELLS {} {}", nt, 4 * nt)?;
    for t in 0..nt {
        let [a, b, c] = mesh.triangle(t);
        writeln!(out, "3 {a} {b} {c}")?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "5")?;
    }

    if !point_data.is_empty() {
        writeln!(out, "POINT_DATA {}", mesh.n_vertices())?;
        for (name, values) in point_data {
            assert_eq!(values.len(), mesh.n_vertices(), "field {name}");
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in *values {
                writeln!(out, "{v:.17e}")?;
            }
        }
    }

    writeln!(out, "CELL_DATA {nt}")?;
    writeln!(out, "SCALARS region int 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for t in 0..nt {
        let flag = if mesh.region(t) == Region::InSubdomain {
            1
        } else {
            0
        };
        writeln!(out, "{flag}")?;
    }
    for (name, values) in cell_data {
        assert_eq!(values.len(), nt, "field {name}");
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in *values {
            writeln!(out, "{v:.17e}")?;
        }
    }

    std::fs::write(path, out)?;
    Ok(())
}

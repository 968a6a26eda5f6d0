//! Legacy ASCII VTK export (unstructured grid) with per-cell scalars.

use crate::mesh::SurfaceMesh;
use crate::Result;
use std::path::Path;

/// Write the mesh with named per-element scalar arrays.
pub fn write_vtk(mesh: &SurfaceMesh, cell_data: &[(&str, &[f64])], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("surfafem mesh\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET UNSTRUCTURED_GRID\n");
    out.push_str(&format!("POINTS {} double\n", mesh.num_vertices()));
    for v in mesh.vertices() {
        out.push_str(&format!("{:.17} {:.17} {:.17}\n", v.x, v.y, v.z));
    }
    let nv = mesh.dim() + 1;
    let ncell = mesh.num_elements();
    out.push_str(&format!("CELLS {} {}\n", ncell, ncell * (nv + 1)));
    for t in 0..ncell {
        let verts = mesh.element(t).vertex_ids();
        out.push_str(&format!("{}", nv));
        for &v in &verts[..nv] {
            out.push_str(&format!(" {v}"));
        }
        out.push('\n');
    }
    // 5 = VTK_TRIANGLE, 3 = VTK_LINE.
    let cell_type = if mesh.dim() == 2 { 5 } else { 3 };
    out.push_str(&format!("CELL_TYPES {ncell}\n"));
    for _ in 0..ncell {
        out.push_str(&format!("{cell_type}\n"));
    }
    if !cell_data.is_empty() {
        out.push_str(&format!("CELL_DATA {ncell}\n"));
        for (name, values) in cell_data {
            assert_eq!(values.len(), ncell, "cell array `{name}` has wrong length");
            out.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
            for v in *values {
                out.push_str(&format!("{v:.12e}\n"));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

//! ASCII OFF reader/writer for macro meshes.
//!
//! Loaded meshes become their own surfaces: each facet carries the
//! identity chart. Pathological coarse meshes whose patches wrap the
//! whole closed surface (the stacked-bipyramid family) are rejected,
//! since such patches cannot be flattened.

use crate::geometry::SurfaceDescription;
use crate::mesh::SurfaceMesh;
use crate::{Error, Point, Result};
use std::path::Path;

pub fn write_off(mesh: &SurfaceMesh, path: &Path) -> Result<()> {
    let mut out = String::from("OFF\n");
    out.push_str(&format!(
        "{} {} {}\n",
        mesh.num_vertices(),
        mesh.num_elements(),
        mesh.num_faces()
    ));
    for v in mesh.vertices() {
        out.push_str(&format!("{:.17} {:.17} {:.17}\n", v.x, v.y, v.z));
    }
    let nv = mesh.dim() + 1;
    for t in 0..mesh.num_elements() {
        let verts = mesh.element(t).vertex_ids();
        out.push_str(&format!("{}", nv));
        for &v in &verts[..nv] {
            out.push_str(&format!(" {v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse an OFF file into a macro mesh with identity charts.
pub fn read_off(path: &Path) -> Result<(SurfaceMesh, SurfaceDescription)> {
    let text = std::fs::read_to_string(path)?;
    parse_off(&text)
}

pub fn parse_off(text: &str) -> Result<(SurfaceMesh, SurfaceDescription)> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
        .peekable();
    let header = tokens.next().ok_or_else(|| Error::MeshFormat("empty file".into()))?;
    if header != "OFF" {
        return Err(Error::MeshFormat(format!("expected OFF header, found `{header}`")));
    }
    let next_usize = |what: &str, tokens: &mut dyn Iterator<Item = &str>| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::MeshFormat(format!("missing {what}")))?
            .parse()
            .map_err(|_| Error::MeshFormat(format!("bad {what}")))
    };
    let nv = next_usize("vertex count", &mut tokens)?;
    let nf = next_usize("face count", &mut tokens)?;
    let _ne = next_usize("edge count", &mut tokens)?;
    let mut vertices = Vec::with_capacity(nv);
    for i in 0..nv {
        let mut coord = [0.0f64; 3];
        for c in coord.iter_mut() {
            *c = tokens
                .next()
                .ok_or_else(|| Error::MeshFormat(format!("missing coordinate of vertex {i}")))?
                .parse()
                .map_err(|_| Error::MeshFormat(format!("bad coordinate of vertex {i}")))?;
        }
        vertices.push(Point::new(coord[0], coord[1], coord[2]));
    }
    let mut faces = Vec::with_capacity(nf);
    for i in 0..nf {
        let arity = next_usize(&format!("arity of face {i}"), &mut tokens)?;
        if arity != 3 {
            return Err(Error::MeshFormat(format!(
                "face {i} has {arity} vertices; only triangles are supported"
            )));
        }
        let mut f = [0usize; 3];
        for v in f.iter_mut() {
            *v = next_usize(&format!("vertex of face {i}"), &mut tokens)?;
            if *v >= nv {
                return Err(Error::MeshFormat(format!("face {i} references vertex {v}")));
            }
        }
        faces.push(f);
    }
    let surface = SurfaceDescription::polyhedral(vertices, faces)?;
    let mesh = SurfaceMesh::from_surface(&surface);
    mesh.validate()?;
    // Reject closed meshes where some patch covers every element: their
    // reference patches wrap around and cannot be flattened.
    if mesh.is_closed() {
        for t in 0..mesh.num_elements() {
            if mesh.patch(t).len() == mesh.num_elements() {
                return Err(Error::MeshFormat(format!(
                    "patch of element {t} covers the whole closed mesh; refine the input mesh"
                )));
            }
        }
    }
    Ok((mesh, surface))
}

//! Global numbering of Lagrange nodes on a triangle mesh.
//!
//! Shared by the geometry interpolant (degree `k`) and the finite element
//! space (degree `r`). Vertex nodes reuse mesh vertex ids; edge nodes are
//! ordered along the global edge from its smaller to its larger vertex id,
//! which makes the numbering orientation independent.

use crate::basis::{LagrangeBasis, NodeKind, REF_EDGES};
use crate::mesh::SurfaceMesh;
use crate::RefPoint;

#[derive(Debug, Clone)]
pub struct NodeMap {
    pub degree: usize,
    pub num_nodes: usize,
    /// Per element: global node id of each local basis node.
    pub element_nodes: Vec<Vec<usize>>,
    /// Nodes on the mesh boundary.
    pub boundary: Vec<bool>,
    /// One (element, local node) pair owning each global node; the lowest
    /// element id wins, so shared evaluations are deterministic.
    pub owner: Vec<(usize, usize)>,
}

impl NodeMap {
    pub fn build(mesh: &SurfaceMesh, basis: &LagrangeBasis) -> Self {
        assert_eq!(mesh.dim(), 2, "node maps are built for triangle meshes");
        let degree = basis.degree;
        let nv = mesh.num_vertices();
        let per_edge = degree - 1;
        let per_cell = basis.num_interior_nodes();
        let nf = mesh.num_faces();
        let num_nodes = nv + nf * per_edge + mesh.num_elements() * per_cell;

        let mut element_nodes = vec![Vec::new(); mesh.num_elements()];
        let mut boundary = vec![false; num_nodes];
        let mut owner = vec![(usize::MAX, usize::MAX); num_nodes];

        for t in 0..mesh.num_elements() {
            let verts = mesh.element(t).vertex_ids();
            let mut nodes = Vec::with_capacity(basis.len());
            for (local, kind) in basis.kinds.iter().enumerate() {
                let gid = match *kind {
                    NodeKind::Vertex(i) => verts[i],
                    NodeKind::Edge { edge, index } => {
                        let (la, lb) = REF_EDGES[edge];
                        let (a, b) = (verts[la], verts[lb]);
                        let face = mesh.face_index(t, edge);
                        // Orient along the global edge a < b.
                        let j = if a < b { index } else { per_edge - 1 - index };
                        nv + face * per_edge + j
                    }
                    NodeKind::Interior(i) => nv + nf * per_edge + t * per_cell + i,
                };
                if owner[gid].0 == usize::MAX || t < owner[gid].0 {
                    owner[gid] = (t, local);
                }
                nodes.push(gid);
            }
            element_nodes[t] = nodes;
        }

        for v in 0..nv {
            boundary[v] = mesh.is_boundary_vertex(v);
        }
        for (fi, f) in mesh.faces().iter().enumerate() {
            if f.is_boundary() {
                for j in 0..per_edge {
                    boundary[nv + fi * per_edge + j] = true;
                }
            }
        }

        NodeMap {
            degree,
            num_nodes,
            element_nodes,
            boundary,
            owner,
        }
    }

    /// Element-local reference coordinates of a global node as seen from
    /// its owner element.
    pub fn owner_ref_point(&self, basis: &LagrangeBasis, gid: usize) -> (usize, RefPoint) {
        let (t, local) = self.owner[gid];
        (t, basis.nodes[local])
    }
}

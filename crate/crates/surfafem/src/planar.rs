//! Independent planar P_r reference solver.
//!
//! Assembles the standard flat Poisson problem with affine elements and
//! physical-coordinate gradients, bypassing the surface geometry pipeline
//! entirely. Serves as the oracle for the flat-equivalence checks and for
//! the `flat_reference` experiment.

use crate::basis::LagrangeBasis;
use crate::dof::NodeMap;
use crate::fem::{solve, Constraint, Csr, FemSolution, SparseSystem};
use crate::mesh::SurfaceMesh;
use crate::quadrature::triangle_rule;
use crate::Result;
use nalgebra::{Matrix2, Vector2};

/// Solve `-Δu = f` on a flat triangle mesh (z ignored) with Dirichlet
/// boundary values `g`. Coefficients use the same global node numbering
/// as the surface pipeline, so solutions are directly comparable.
pub fn solve_plane(
    mesh: &SurfaceMesh,
    r: usize,
    f: impl Fn(f64, f64) -> f64,
    g: impl Fn(f64, f64) -> f64,
    tol: f64,
) -> Result<(FemSolution, NodeMap)> {
    let basis = LagrangeBasis::new(r);
    let node_map = NodeMap::build(mesh, &basis);
    let rule = triangle_rule(2 * r + 2);
    let vals_at: Vec<_> = rule.points.iter().map(|&p| basis.eval(p)).collect();
    let grads_at: Vec<_> = rule.points.iter().map(|&p| basis.grad(p)).collect();
    let nloc = basis.len();

    let n = node_map.num_nodes;
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    for t in 0..mesh.num_elements() {
        let e = mesh.element(t);
        let p0 = mesh.vertex(e.vertex_ids()[0]);
        let p1 = mesh.vertex(e.vertex_ids()[1]);
        let p2 = mesh.vertex(e.vertex_ids()[2]);
        let b = Matrix2::new(p1.x - p0.x, p2.x - p0.x, p1.y - p0.y, p2.y - p0.y);
        let det = b.determinant();
        let area_scale = det.abs();
        let binv_t = b.try_inverse().expect("flat element is nondegenerate").transpose();
        let nodes = &node_map.element_nodes[t];
        for (qi, &xq) in rule.points.iter().enumerate() {
            let w = rule.weights[qi] * area_scale;
            let phys = Vector2::new(p0.x, p0.y) + b * Vector2::new(xq.x, xq.y);
            let fval = f(phys.x, phys.y);
            let gphys: Vec<Vector2<f64>> = grads_at[qi].iter().map(|gr| binv_t * gr).collect();
            for i in 0..nloc {
                for j in 0..nloc {
                    triplets.push((nodes[i], nodes[j], gphys[i].dot(&gphys[j]) * w));
                }
                rhs[nodes[i]] += fval * vals_at[qi][i] * w;
            }
        }
    }
    let matrix = Csr::from_triplets(n, &mut triplets);
    let mut values = vec![0.0; n];
    for gid in 0..n {
        if node_map.boundary[gid] {
            let (x, y) = node_xy(mesh, &node_map, &basis, gid);
            values[gid] = g(x, y);
        }
    }
    let sys = SparseSystem {
        matrix,
        rhs,
        constraint: Constraint::Dirichlet { values, flags: node_map.boundary.clone() },
    };
    let sol = solve(&sys, tol)?;
    Ok((sol, node_map))
}

/// Planar coordinates of a global node.
pub fn node_xy(mesh: &SurfaceMesh, node_map: &NodeMap, basis: &LagrangeBasis, gid: usize) -> (f64, f64) {
    let (t, local) = node_map.owner[gid];
    let e = mesh.element(t);
    let p0 = mesh.vertex(e.vertex_ids()[0]);
    let p1 = mesh.vertex(e.vertex_ids()[1]);
    let p2 = mesh.vertex(e.vertex_ids()[2]);
    let xq = basis.nodes[local];
    (
        p0.x + (p1.x - p0.x) * xq.x + (p2.x - p0.x) * xq.y,
        p0.y + (p1.y - p0.y) * xq.x + (p2.y - p0.y) * xq.y,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SurfaceDescription;

    #[test]
    fn plane_poisson_converges_at_nodes() {
        use std::f64::consts::PI;
        let s = SurfaceDescription::flat_patch();
        let mut errs = Vec::new();
        for level in 2..=4 {
            let mesh = SurfaceMesh::from_surface(&s).refine_uniform(2 * level, &s).unwrap();
            let (sol, node_map) = solve_plane(
                &mesh,
                1,
                |x, y| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin(),
                |_, _| 0.0,
                1e-12,
            )
            .unwrap();
            let basis = LagrangeBasis::new(1);
            let mut max_err = 0.0f64;
            for gid in 0..node_map.num_nodes {
                let (x, y) = node_xy(&mesh, &node_map, &basis, gid);
                let exact = (PI * x).sin() * (PI * y).sin();
                max_err = max_err.max((sol.coeffs[gid] - exact).abs());
            }
            errs.push(max_err);
        }
        assert!(errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
        assert!(errs[2] < 0.01, "{errs:?}");
    }
}

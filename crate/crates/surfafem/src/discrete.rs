//! The degree-`k` interpolated surface `Γ` and its geometric caches.
//!
//! `X_T = I_k χ_T` interpolates the chart at the degree-`k` Lagrange nodes.
//! Coefficients are stored per global node (the owning element evaluates
//! the chart once), so adjacent elements share bitwise identical face
//! coefficients and `Γ` is exactly continuous.

use crate::basis::{edge_point, ref_conormal, LagrangeBasis, REF_EDGES};
use crate::dof::NodeMap;
use crate::geometry::{DistanceData, SurfaceDescription};
use crate::mesh::SurfaceMesh;
use crate::quadrature::{segment_rule, triangle_rule, QuadratureRule};
use crate::{Error, Point, RefPoint, Result};
use nalgebra::{Matrix2, Matrix3, Matrix3x2};
use std::sync::Arc;

/// Shape-regularity floor: singular values of `DX_T` must stay within
/// `[SHAPE_REG_LOW, SHAPE_REG_HIGH] · diam(T̄)`.
pub const SHAPE_REG_LOW: f64 = 0.05;
pub const SHAPE_REG_HIGH: f64 = 20.0;

#[derive(Debug, Clone)]
pub struct DiscreteSurface {
    mesh: Arc<SurfaceMesh>,
    surface: Arc<SurfaceDescription>,
    k: usize,
    basis: LagrangeBasis,
    node_map: NodeMap,
    /// Geometry coefficient per global node.
    node_coords: Vec<Point>,
}

/// Build `X = I_k χ` over the mesh. Fails when an element violates the
/// shape-regularity floor.
pub fn interpolate_geometry(
    mesh: Arc<SurfaceMesh>,
    surface: Arc<SurfaceDescription>,
    k: usize,
) -> Result<DiscreteSurface> {
    DiscreteSurface::build(mesh, surface, k)
}

impl DiscreteSurface {
    pub fn build(
        mesh: Arc<SurfaceMesh>,
        surface: Arc<SurfaceDescription>,
        k: usize,
    ) -> Result<Self> {
        if mesh.dim() != 2 {
            return Err(Error::UnsupportedDimension(mesh.dim()));
        }
        assert!(k >= 1);
        let basis = LagrangeBasis::new(k);
        let node_map = NodeMap::build(&mesh, &basis);
        let mut node_coords = vec![Point::zeros(); node_map.num_nodes];
        // Vertex nodes reuse the mesh coordinates (already on γ); the rest
        // are chart evaluations at the owner's reference position.
        for v in 0..mesh.num_vertices() {
            node_coords[v] = mesh.vertex(v);
        }
        for gid in mesh.num_vertices()..node_map.num_nodes {
            let (t, local) = node_map.owner[gid];
            let e = mesh.element(t);
            let r = e.local_to_macro(basis.nodes[local], 2);
            let (p, _) = surface.chart_eval(e.macro_id(), r)?;
            node_coords[gid] = p;
        }
        let ds = DiscreteSurface {
            mesh,
            surface,
            k,
            basis,
            node_map,
            node_coords,
        };
        ds.check_shape_regularity()?;
        Ok(ds)
    }

    fn check_shape_regularity(&self) -> Result<()> {
        let probe = triangle_rule(2 * self.k);
        for t in 0..self.mesh.num_elements() {
            let e = self.mesh.element(t);
            let verts = e.vertex_ids();
            let diam = (0..3)
                .map(|i| {
                    (self.mesh.vertex(verts[i]) - self.mesh.vertex(verts[(i + 1) % 3])).norm()
                })
                .fold(0.0f64, f64::max);
            for &p in &probe.points {
                let jac = self.jacobian(t, p);
                let svd = jac.svd(false, false);
                let smax = svd.singular_values[0];
                let smin = svd.singular_values[1];
                if smin < SHAPE_REG_LOW * diam || smax > SHAPE_REG_HIGH * diam {
                    return Err(Error::ShapeRegularity {
                        element: t,
                        ratio: smin / diam,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn mesh(&self) -> &Arc<SurfaceMesh> {
        &self.mesh
    }

    pub fn surface(&self) -> &Arc<SurfaceDescription> {
        &self.surface
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn geometry_basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    /// Geometry coefficients (points at the degree-k nodes) of an element.
    pub fn coefficients(&self, t: usize) -> Vec<Point> {
        self.node_map.element_nodes[t]
            .iter()
            .map(|&g| self.node_coords[g])
            .collect()
    }

    /// `X_T(x̂)`.
    pub fn position(&self, t: usize, x: RefPoint) -> Point {
        let vals = self.basis.eval(x);
        let mut p = Point::zeros();
        for (i, &gid) in self.node_map.element_nodes[t].iter().enumerate() {
            p += self.node_coords[gid] * vals[i];
        }
        p
    }

    /// `DX_T(x̂)` with respect to element-local reference coordinates.
    pub fn jacobian(&self, t: usize, x: RefPoint) -> Matrix3x2<f64> {
        let grads = self.basis.grad(x);
        let mut jac = Matrix3x2::zeros();
        for (i, &gid) in self.node_map.element_nodes[t].iter().enumerate() {
            let c = self.node_coords[gid];
            for a in 0..3 {
                jac[(a, 0)] += c[a] * grads[i].x;
                jac[(a, 1)] += c[a] * grads[i].y;
            }
        }
        jac
    }

    /// Reference Hessian of each ambient component of `X_T`.
    pub fn second_derivatives(&self, t: usize, x: RefPoint) -> [Matrix2<f64>; 3] {
        let hess = self.basis.hess(x);
        let mut out = [Matrix2::zeros(); 3];
        for (i, &gid) in self.node_map.element_nodes[t].iter().enumerate() {
            let c = self.node_coords[gid];
            for a in 0..3 {
                out[a] += hess[i] * c[a];
            }
        }
        out
    }

    /// Exact chart value and Jacobian in element-local reference
    /// coordinates.
    pub fn chart(&self, t: usize, x: RefPoint) -> Result<(Point, Matrix3x2<f64>)> {
        let e = self.mesh.element(t);
        let macro_point = e.local_to_macro(x, 2);
        let (p, jac_macro) = self.surface.chart_eval(e.macro_id(), macro_point)?;
        // Constant derivative of the macro-reference coordinates with
        // respect to the element-local ones.
        let a = Matrix2::from_columns(&[
            e.ref_vertex(1) - e.ref_vertex(0),
            e.ref_vertex(2) - e.ref_vertex(0),
        ]);
        Ok((p, jac_macro * a))
    }

    /// Default volume rule, exactness `2r + 2k`.
    pub fn volume_rule(&self, r: usize) -> QuadratureRule {
        triangle_rule(2 * r + 2 * self.k)
    }

    /// Default face rule, exactness `2r + k`.
    pub fn face_rule(&self, r: usize) -> QuadratureRule {
        segment_rule(2 * r + self.k)
    }

    /// Geometric quantities of element `t` at every quadrature point.
    pub fn geometry_cache(&self, t: usize, rule: &QuadratureRule) -> Result<ElementGeometryCache> {
        let with_oracle = self.surface.has_distance_oracle();
        let mut points = Vec::with_capacity(rule.len());
        for (&xref, &weight) in rule.points.iter().zip(&rule.weights) {
            points.push(self.geometry_at(t, xref, weight, with_oracle)?);
        }
        Ok(ElementGeometryCache { element: t, points })
    }

    /// Geometric quantities at a single reference point.
    pub fn geometry_at(
        &self,
        t: usize,
        xref: RefPoint,
        weight: f64,
        with_oracle: bool,
    ) -> Result<GeomPoint> {
        let g_cols = self.jacobian(t, xref);
        let g = g_cols.transpose() * g_cols;
        let det = g.determinant();
        if !(det > 0.0) {
            return Err(Error::DegenerateElement { element: t, measure: det });
        }
        let ginv = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]) / det;
        let q = det.sqrt();
        let normal = {
            let c0 = Point::from(g_cols.column(0));
            let c1 = Point::from(g_cols.column(1));
            let n = c0.cross(&c1);
            n / n.norm()
        };
        let x = self.position(t, xref);
        let (chart_point, chart_cols) = self.chart(t, xref)?;
        let g_exact = chart_cols.transpose() * chart_cols;
        let q_exact = g_exact.determinant().max(0.0).sqrt();

        let (q_dist, dist, proj_cols) = if with_oracle {
            let data = self.surface.distance_oracle(x)?;
            // Area element of P_d ∘ X: columns (I - ∇d ∇dᵀ - d W) DX.
            let dp = Matrix3::identity() - data.grad * data.grad.transpose() - data.hess * data.d;
            let j = dp * g_cols;
            let gj = j.transpose() * j;
            let qd = gj.determinant().max(0.0).sqrt();
            (Some(qd), Some(data), Some(j))
        } else {
            (None, None, None)
        };

        Ok(GeomPoint {
            xref,
            weight,
            x,
            g_cols,
            ginv,
            q,
            normal,
            chart_point,
            chart_cols,
            q_exact,
            q_dist,
            dist,
            proj_cols,
        })
    }

    /// Metric factor `M = q_Γ g_Γ⁻¹` and its reference derivatives,
    /// assembled from exact derivatives of the polynomial `X_T`.
    pub fn metric_derivatives(
        &self,
        t: usize,
        x: RefPoint,
    ) -> (Matrix2<f64>, [Matrix2<f64>; 2], f64) {
        let g_cols = self.jacobian(t, x);
        let hess = self.second_derivatives(t, x);
        let g = g_cols.transpose() * g_cols;
        let det = g.determinant();
        let q = det.sqrt();
        let adj = |m: &Matrix2<f64>| Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]);
        let m = adj(&g) / q;
        let mut dm = [Matrix2::zeros(); 2];
        for c in 0..2 {
            // ∂_c DX has entries hess[a][(j, c)].
            let mut dgc = Matrix3x2::zeros();
            for a in 0..3 {
                for j in 0..2 {
                    dgc[(a, j)] = hess[a][(j, c)];
                }
            }
            let dg = g_cols.transpose() * dgc + dgc.transpose() * g_cols;
            let ddet =
                dg[(0, 0)] * g[(1, 1)] + g[(0, 0)] * dg[(1, 1)] - 2.0 * g[(0, 1)] * dg[(0, 1)];
            let dq = 0.5 * ddet / q;
            dm[c] = adj(&dg) / q - adj(&g) * (dq / (q * q));
        }
        (m, dm, q)
    }

    /// Face cache for global face `face` at the points of `rule` (given on
    /// `[0, 1]` along the face in its stored orientation).
    pub fn face_cache(&self, face: usize, rule: &QuadratureRule) -> Result<FaceGeometryCache> {
        let f = &self.mesh.faces()[face];
        let fv = f.verts;
        let mut points = Vec::with_capacity(rule.len());
        for (&p, &weight) in rule.points.iter().zip(&rule.weights) {
            let tpar = p.x;
            let mut sides = Vec::with_capacity(f.sides.len());
            for &(t, local) in &f.sides {
                sides.push(self.face_side_at(t, local, fv, tpar)?);
            }
            points.push(FacePoint { t: tpar, weight, sides });
        }
        Ok(FaceGeometryCache { face, points })
    }

    /// Geometry of one side of a face at face parameter `tpar` measured
    /// along the stored face orientation.
    pub fn face_side_at(
        &self,
        t: usize,
        local: usize,
        face_verts: [usize; 2],
        tpar: f64,
    ) -> Result<FaceSide> {
        let e = self.mesh.element(t);
        let (la, lb) = REF_EDGES[local];
        let (va, vb) = (e.vertex_ids()[la], e.vertex_ids()[lb]);
        // Align the element's local edge direction with the face's stored
        // orientation.
        let s = if (va, vb) == (face_verts[0], face_verts[1]) {
            tpar
        } else {
            debug_assert_eq!((vb, va), (face_verts[0], face_verts[1]));
            1.0 - tpar
        };
        let xref = edge_point(local, s);
        let gp = self.geometry_at(t, xref, 0.0, false)?;
        let pa = ref_vertex_point(la);
        let pb = ref_vertex_point(lb);
        let edge_vec = pb - pa;
        let ref_len = edge_vec.norm();
        let that = edge_vec / ref_len;
        let r_arc = (gp.g_cols * that).norm();
        let nhat = ref_conormal(local);
        // n = (q_Γ / r_Γ) n̂ D_Γ with D_Γ = g⁻¹ Gᵀ; unit by construction.
        let dgam = gp.ginv * gp.g_cols.transpose();
        let conormal = Point::from((nhat.transpose() * dgam).transpose()) * (gp.q / r_arc);
        Ok(FaceSide {
            element: t,
            local_edge: local,
            xref,
            position: gp.x,
            conormal,
            r_arc,
            ref_len,
            q: gp.q,
            ginv: gp.ginv,
            g_cols: gp.g_cols,
            nhat,
            normal: gp.normal,
        })
    }

    /// Total area of `Γ` (integrating `q_Γ`).
    pub fn total_area_discrete(&self, rule: &QuadratureRule) -> Result<f64> {
        let mut total = 0.0;
        for t in 0..self.mesh.num_elements() {
            let cache = self.geometry_cache(t, rule)?;
            total += cache.points.iter().map(|p| p.weight * p.q).sum::<f64>();
        }
        Ok(total)
    }

    /// Total area of `γ` through the charts (integrating `q`).
    pub fn total_area_exact(&self, rule: &QuadratureRule) -> Result<f64> {
        let mut total = 0.0;
        for t in 0..self.mesh.num_elements() {
            let cache = self.geometry_cache(t, rule)?;
            total += cache.points.iter().map(|p| p.weight * p.q_exact).sum::<f64>();
        }
        Ok(total)
    }

}

fn ref_vertex_point(local: usize) -> RefPoint {
    let (x, y) = crate::basis::REF_VERTICES[local];
    RefPoint::new(x, y)
}

/// Geometry of one element quadrature point.
#[derive(Debug, Clone)]
pub struct GeomPoint {
    pub xref: RefPoint,
    pub weight: f64,
    /// Position on `Γ`.
    pub x: Point,
    /// `G_Γ = DX_T`.
    pub g_cols: Matrix3x2<f64>,
    /// `g_Γ⁻¹`.
    pub ginv: Matrix2<f64>,
    /// `q_Γ = √det g_Γ`.
    pub q: f64,
    /// Unit normal `ν_Γ`.
    pub normal: Point,
    /// `χ_T(x̂)` on `γ`.
    pub chart_point: Point,
    /// Exact chart Jacobian `G`.
    pub chart_cols: Matrix3x2<f64>,
    /// Exact area element `q`.
    pub q_exact: f64,
    /// Area element of `P_d ∘ X` when the distance oracle exists.
    pub q_dist: Option<f64>,
    /// Distance data at `x`.
    pub dist: Option<DistanceData>,
    /// Columns of `D(P_d ∘ X)`.
    pub proj_cols: Option<Matrix3x2<f64>>,
}

#[derive(Debug, Clone)]
pub struct ElementGeometryCache {
    pub element: usize,
    pub points: Vec<GeomPoint>,
}

/// Geometry of one side of a face at one quadrature point.
#[derive(Debug, Clone)]
pub struct FaceSide {
    pub element: usize,
    pub local_edge: usize,
    pub xref: RefPoint,
    pub position: Point,
    /// Outward unit co-normal, tangent to `Γ`.
    pub conormal: Point,
    /// Length element per unit of arc length on the reference edge.
    pub r_arc: f64,
    /// Length of the reference edge (1 or √2).
    pub ref_len: f64,
    pub q: f64,
    pub ginv: Matrix2<f64>,
    pub g_cols: Matrix3x2<f64>,
    /// Reference outward co-normal `n̂`.
    pub nhat: RefPoint,
    pub normal: Point,
}

#[derive(Debug, Clone)]
pub struct FacePoint {
    /// Parameter along the face in its stored orientation.
    pub t: f64,
    pub weight: f64,
    pub sides: Vec<FaceSide>,
}

#[derive(Debug, Clone)]
pub struct FaceGeometryCache {
    pub face: usize,
    pub points: Vec<FacePoint>,
}

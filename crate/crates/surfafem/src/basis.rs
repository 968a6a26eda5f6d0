//! Lagrange bases on the reference triangle.
//!
//! Nodes are equispaced, ordered vertices first, then edge nodes walking
//! each edge from its first to its second vertex, then interior nodes.
//! Basis coefficients come from inverting the monomial Vandermonde matrix,
//! which is perfectly adequate for the degrees used here (≤ 4).

use crate::RefPoint;
use nalgebra::{DMatrix, DVector, Matrix2};

/// Reference triangle vertices in local order.
pub const REF_VERTICES: [(f64, f64); 3] = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];

/// Local edges as (first vertex, second vertex).
pub const REF_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

/// Outward unit co-normals of the reference edges.
pub fn ref_conormal(edge: usize) -> RefPoint {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match edge {
        0 => RefPoint::new(0.0, -1.0),
        1 => RefPoint::new(s, s),
        2 => RefPoint::new(-1.0, 0.0),
        _ => panic!("edge index {edge} out of range"),
    }
}

/// Where a Lagrange node sits on the reference triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Vertex(usize),
    /// `index` counts interior edge nodes from the edge's first vertex.
    Edge { edge: usize, index: usize },
    Interior(usize),
}

#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    pub degree: usize,
    pub nodes: Vec<RefPoint>,
    pub kinds: Vec<NodeKind>,
    /// `coeffs[(m, i)]`: coefficient of monomial `m` in basis function `i`.
    coeffs: DMatrix<f64>,
    /// Monomial exponents (a, b) for x^a y^b, total degree ≤ `degree`.
    monomials: Vec<(u32, u32)>,
}

impl LagrangeBasis {
    pub fn new(degree: usize) -> Self {
        assert!(degree >= 1, "Lagrange degree must be at least 1");
        let s = degree;
        let mut nodes = Vec::new();
        let mut kinds = Vec::new();
        for (i, &(x, y)) in REF_VERTICES.iter().enumerate() {
            nodes.push(RefPoint::new(x, y));
            kinds.push(NodeKind::Vertex(i));
        }
        for (e, &(a, b)) in REF_EDGES.iter().enumerate() {
            let pa = RefPoint::new(REF_VERTICES[a].0, REF_VERTICES[a].1);
            let pb = RefPoint::new(REF_VERTICES[b].0, REF_VERTICES[b].1);
            for t in 1..s {
                let f = t as f64 / s as f64;
                nodes.push(pa + (pb - pa) * f);
                kinds.push(NodeKind::Edge { edge: e, index: t - 1 });
            }
        }
        let mut interior = 0;
        for i in 0..=s {
            for j in 0..=(s - i) {
                if i > 0 && j > 0 && i + j < s {
                    nodes.push(RefPoint::new(i as f64 / s as f64, j as f64 / s as f64));
                    kinds.push(NodeKind::Interior(interior));
                    interior += 1;
                }
            }
        }
        let monomials: Vec<(u32, u32)> = (0..=s as u32)
            .flat_map(|a| (0..=(s as u32 - a)).map(move |b| (a, b)))
            .collect();
        let n = nodes.len();
        debug_assert_eq!(n, monomials.len());
        let mut vand = DMatrix::zeros(n, n);
        for (r, p) in nodes.iter().enumerate() {
            for (c, &(a, b)) in monomials.iter().enumerate() {
                vand[(r, c)] = p.x.powi(a as i32) * p.y.powi(b as i32);
            }
        }
        let inv = vand
            .try_inverse()
            .expect("Lagrange Vandermonde is invertible");
        // Column i of inv^T holds the monomial coefficients of basis i.
        LagrangeBasis {
            degree,
            nodes,
            kinds,
            coeffs: inv,
            monomials,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_edge_nodes(&self) -> usize {
        self.degree - 1
    }

    pub fn num_interior_nodes(&self) -> usize {
        (self.degree.saturating_sub(1)) * (self.degree.saturating_sub(2)) / 2
    }

    /// Values of all basis functions at `p`.
    pub fn eval(&self, p: RefPoint) -> DVector<f64> {
        let n = self.len();
        let mut mono = DVector::zeros(n);
        for (c, &(a, b)) in self.monomials.iter().enumerate() {
            mono[c] = p.x.powi(a as i32) * p.y.powi(b as i32);
        }
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let mut v = 0.0;
            for c in 0..n {
                v += self.coeffs[(c, i)] * mono[c];
            }
            out[i] = v;
        }
        out
    }

    /// Gradients; row `i` is `(∂x φ_i, ∂y φ_i)`.
    pub fn grad(&self, p: RefPoint) -> Vec<RefPoint> {
        let n = self.len();
        let mut out = vec![RefPoint::zeros(); n];
        for (c, &(a, b)) in self.monomials.iter().enumerate() {
            let (a, b) = (a as i32, b as i32);
            let dx = if a > 0 {
                a as f64 * p.x.powi(a - 1) * p.y.powi(b)
            } else {
                0.0
            };
            let dy = if b > 0 {
                b as f64 * p.x.powi(a) * p.y.powi(b - 1)
            } else {
                0.0
            };
            for i in 0..n {
                out[i].x += self.coeffs[(c, i)] * dx;
                out[i].y += self.coeffs[(c, i)] * dy;
            }
        }
        out
    }

    /// Reference Hessians as symmetric 2x2 matrices.
    pub fn hess(&self, p: RefPoint) -> Vec<Matrix2<f64>> {
        let n = self.len();
        let mut out = vec![Matrix2::zeros(); n];
        for (c, &(a, b)) in self.monomials.iter().enumerate() {
            let (a, b) = (a as i32, b as i32);
            let dxx = if a > 1 {
                (a * (a - 1)) as f64 * p.x.powi(a - 2) * p.y.powi(b)
            } else {
                0.0
            };
            let dyy = if b > 1 {
                (b * (b - 1)) as f64 * p.x.powi(a) * p.y.powi(b - 2)
            } else {
                0.0
            };
            let dxy = if a > 0 && b > 0 {
                (a * b) as f64 * p.x.powi(a - 1) * p.y.powi(b - 1)
            } else {
                0.0
            };
            for i in 0..n {
                let k = self.coeffs[(c, i)];
                out[i][(0, 0)] += k * dxx;
                out[i][(1, 1)] += k * dyy;
                out[i][(0, 1)] += k * dxy;
                out[i][(1, 0)] += k * dxy;
            }
        }
        out
    }
}

/// Point on a reference edge at parameter `t ∈ [0, 1]` walking the edge
/// from its first to its second vertex.
pub fn edge_point(edge: usize, t: f64) -> RefPoint {
    let (a, b) = REF_EDGES[edge];
    let pa = RefPoint::new(REF_VERTICES[a].0, REF_VERTICES[a].1);
    let pb = RefPoint::new(REF_VERTICES[b].0, REF_VERTICES[b].1);
    pa + (pb - pa) * t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronecker_property() {
        for degree in 1..=4 {
            let basis = LagrangeBasis::new(degree);
            for (i, &node) in basis.nodes.iter().enumerate() {
                let vals = basis.eval(node);
                for j in 0..basis.len() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (vals[j] - expect).abs() < 1e-11,
                        "degree {degree}: phi_{j}(node {i}) = {}",
                        vals[j]
                    );
                }
            }
        }
    }

    #[test]
    fn partition_of_unity_and_gradients() {
        for degree in 1..=4 {
            let basis = LagrangeBasis::new(degree);
            let p = RefPoint::new(0.21, 0.33);
            let vals = basis.eval(p);
            assert!((vals.sum() - 1.0).abs() < 1e-12);
            let grads = basis.grad(p);
            let sum: RefPoint = grads.iter().sum();
            assert!(sum.norm() < 1e-11);

            // Finite-difference check of gradients and Hessians.
            let h = 1e-6;
            let gx = (basis.eval(p + RefPoint::new(h, 0.0)) - basis.eval(p - RefPoint::new(h, 0.0))) / (2.0 * h);
            for i in 0..basis.len() {
                assert!((gx[i] - grads[i].x).abs() < 1e-7);
            }
            let hess = basis.hess(p);
            let gpx = basis.grad(p + RefPoint::new(h, 0.0));
            let gmx = basis.grad(p - RefPoint::new(h, 0.0));
            for i in 0..basis.len() {
                let dxx = (gpx[i].x - gmx[i].x) / (2.0 * h);
                let dxy = (gpx[i].y - gmx[i].y) / (2.0 * h);
                assert!((dxx - hess[i][(0, 0)]).abs() < 1e-6);
                assert!((dxy - hess[i][(0, 1)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn node_counts() {
        assert_eq!(LagrangeBasis::new(1).len(), 3);
        assert_eq!(LagrangeBasis::new(2).len(), 6);
        assert_eq!(LagrangeBasis::new(3).len(), 10);
        let b3 = LagrangeBasis::new(3);
        assert_eq!(b3.num_interior_nodes(), 1);
        assert_eq!(
            b3.kinds.iter().filter(|k| matches!(k, NodeKind::Edge { .. })).count(),
            6
        );
    }
}

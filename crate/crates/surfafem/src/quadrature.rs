//! Quadrature on the reference simplex.
//!
//! Triangle rules are conical products of Gauss-Legendre and Gauss-Jacobi
//! rules through the Duffy map, so a requested polynomial exactness degree
//! is met exactly rather than looked up in a table. Segment rules are plain
//! Gauss-Legendre on `[0, 1]`.

use crate::RefPoint;
use nalgebra::DMatrix;

/// Points and weights on the reference simplex
/// `T̂ = {x ≥ 0, y ≥ 0, x + y ≤ 1}` (or `[0, 1]` for segments).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<RefPoint>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Approximate `∫ f` over the reference domain.
    pub fn integrate(&self, mut f: impl FnMut(RefPoint) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }
}

/// Eigenvalues/eigenvectors of a symmetric tridiagonal Jacobi matrix give
/// the nodes and weights (Golub-Welsch). `m` is small, so a dense solve
/// is fine.
fn golub_welsch(diag: &[f64], offdiag: &[f64], moment0: f64) -> (Vec<f64>, Vec<f64>) {
    let m = diag.len();
    let mut j = DMatrix::zeros(m, m);
    for i in 0..m {
        j[(i, i)] = diag[i];
        if i + 1 < m {
            j[(i, i + 1)] = offdiag[i];
            j[(i + 1, i)] = offdiag[i];
        }
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            (x, moment0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `m`-point Gauss-Legendre rule on `[0, 1]`, exact for degree `2m - 1`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let diag = vec![0.0; m];
    let offdiag: Vec<f64> = (1..m)
        .map(|k| {
            let k = k as f64;
            (k * k / (4.0 * k * k - 1.0)).sqrt()
        })
        .collect();
    let (nodes, weights) = golub_welsch(&diag, &offdiag, 2.0);
    (
        nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        weights.iter().map(|w| 0.5 * w).collect(),
    )
}

/// `m`-point Gauss-Jacobi rule with weight `(1 - x)` on `[0, 1]`,
/// exact for degree `2m - 1`. Used by the collapsed direction of the
/// Duffy map, whose Jacobian contributes exactly this weight.
fn gauss_jacobi_10(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    // Recurrence coefficients for Jacobi(1, 0) polynomials on [-1, 1].
    let diag: Vec<f64> = (0..m)
        .map(|k| {
            let k = k as f64;
            -1.0 / ((2.0 * k + 1.0) * (2.0 * k + 3.0))
        })
        .collect();
    let offdiag: Vec<f64> = (1..m)
        .map(|k| {
            let k = k as f64;
            (k * (k + 1.0) / ((2.0 * k + 1.0) * (2.0 * k + 1.0))).sqrt()
        })
        .collect();
    let (nodes, weights) = golub_welsch(&diag, &offdiag, 2.0);
    (
        nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        // ∫₀¹ (1-t) f dt = ¼ ∫₋₁¹ (1-x) f((1+x)/2) dx
        weights.iter().map(|w| 0.25 * w).collect(),
    )
}

/// Rule on the reference triangle exact for total degree `degree`.
pub fn triangle_rule(degree: usize) -> QuadratureRule {
    let m = degree / 2 + 1;
    let (gu, wu) = gauss_legendre(m);
    let (gv, wv) = gauss_jacobi_10(m);
    let mut points = Vec::with_capacity(m * m);
    let mut weights = Vec::with_capacity(m * m);
    // Duffy map (u, v) -> (u (1 - v), v); its Jacobian (1 - v) is the
    // Jacobi weight of the v-rule.
    for (&v, &bv) in gv.iter().zip(&wv) {
        for (&u, &au) in gu.iter().zip(&wu) {
            points.push(RefPoint::new(u * (1.0 - v), v));
            weights.push(au * bv);
        }
    }
    QuadratureRule {
        points,
        weights,
        degree,
    }
}

/// Rule on the reference segment `[0, 1]` exact for `degree`. Points are
/// stored in the first coordinate.
pub fn segment_rule(degree: usize) -> QuadratureRule {
    let m = degree / 2 + 1;
    let (nodes, weights) = gauss_legendre(m);
    QuadratureRule {
        points: nodes.iter().map(|&t| RefPoint::new(t, 0.0)).collect(),
        weights,
        degree,
    }
}

/// Deterministic sampling lattice on the reference triangle: all points
/// `(i/o, j/o)` with `i + j ≤ o`. Includes the vertices, so sup-norm
/// estimates see the extreme points of the element.
pub fn triangle_lattice(order: usize) -> Vec<RefPoint> {
    let o = order.max(1);
    let mut pts = Vec::with_capacity((o + 1) * (o + 2) / 2);
    for i in 0..=o {
        for j in 0..=(o - i) {
            pts.push(RefPoint::new(i as f64 / o as f64, j as f64 / o as f64));
        }
    }
    pts
}

/// Lattice on `[0, 1]` including the endpoints.
pub fn segment_lattice(order: usize) -> Vec<f64> {
    let o = order.max(1);
    (0..=o).map(|i| i as f64 / o as f64).collect()
}

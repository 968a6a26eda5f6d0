//! Exact surface descriptions.
//!
//! A surface is known through per-macro-element charts `χ_T` mapping the
//! reference simplex onto the surface, plus (for the built-in oracle
//! surfaces) a signed distance function `d` with gradient `∇d = ν` and
//! Hessian `D²d = W`, the Weingarten map. The distance data never enters
//! the estimator path; it backs diagnostics and exact-error measurement.

use crate::{Error, Point, RefPoint, Result};
use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector2};

/// Exponent offset of the graph surface `z = (3/4 - x² - y²)₊^{2+α}`.
const GRAPH_BASE_EXPONENT: f64 = 2.0;

/// Lattice resolution used to sample the curvature bound of the graph
/// surface (≥ 10⁴ points), and the safety factor applied on top since
/// sampling only yields a lower bound of the supremum.
const CURVATURE_SAMPLES_PER_AXIS: usize = 101;
const CURVATURE_SAFETY: f64 = 1.1;

/// Accepted barycentric overshoot before a reference point is considered
/// outside the chart.
const CHART_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceKind {
    Sphere { radius: f64 },
    HalfSphere { radius: f64 },
    Graph { alpha: f64 },
    FlatPatch,
    Circle { radius: f64 },
    /// Piecewise-flat surface loaded from a mesh file; charts are the
    /// identity on each facet.
    Polyhedral,
}

/// Signed distance data at a point of the tubular neighborhood.
#[derive(Debug, Clone, Copy)]
pub struct DistanceData {
    pub d: f64,
    /// `∇d`, the unit normal of the parallel surface through the point.
    pub grad: Point,
    /// `D²d`, the Weingarten map. Annihilates `grad`.
    pub hess: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ClosestPoint {
    pub point: Point,
    pub d: f64,
    pub normal: Point,
}

/// Principal curvatures at a query point and their maximum modulus.
#[derive(Debug, Clone)]
pub struct CurvatureReport {
    pub kappas: Vec<f64>,
    pub max_abs: f64,
}

impl CurvatureReport {
    fn new(kappas: Vec<f64>) -> Self {
        let max_abs = kappas.iter().fold(0.0f64, |m, k| m.max(k.abs()));
        CurvatureReport { kappas, max_abs }
    }
}

/// Macro-element chart data: global vertex ids plus the parameter-domain
/// corners the chart interpolates between. The first two vertices span the
/// refinement edge of newest-vertex bisection.
#[derive(Debug, Clone)]
pub(crate) struct MacroElement {
    pub vertices: [usize; 3],
    pub params: [Point; 3],
}

#[derive(Debug, Clone)]
pub struct SurfaceDescription {
    kind: SurfaceKind,
    n: usize,
    closed: bool,
    macro_vertices: Vec<Point>,
    macro_elements: Vec<MacroElement>,
    curvature_bound: f64,
    has_oracle: bool,
}

impl SurfaceDescription {
    pub fn sphere(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius {radius} must be positive")));
        }
        let r = radius;
        let verts = vec![
            Point::new(r, 0.0, 0.0),
            Point::new(0.0, r, 0.0),
            Point::new(0.0, 0.0, r),
            Point::new(-r, 0.0, 0.0),
            Point::new(0.0, -r, 0.0),
            Point::new(0.0, 0.0, -r),
        ];
        // Outward-oriented octahedron; every refinement edge lies on the
        // equator so adjacent refinement edges pair up across hemispheres.
        let faces = [
            [0, 1, 2],
            [1, 3, 2],
            [3, 4, 2],
            [4, 0, 2],
            [1, 0, 5],
            [3, 1, 5],
            [4, 3, 5],
            [0, 4, 5],
        ];
        let macro_elements = faces
            .iter()
            .map(|f| MacroElement {
                vertices: *f,
                params: [verts[f[0]], verts[f[1]], verts[f[2]]],
            })
            .collect();
        Ok(SurfaceDescription {
            kind: SurfaceKind::Sphere { radius },
            n: 2,
            closed: true,
            macro_vertices: verts,
            macro_elements,
            curvature_bound: 1.0 / radius,
            has_oracle: true,
        })
    }

    pub fn half_sphere(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius {radius} must be positive")));
        }
        let r = radius;
        let verts = vec![
            Point::new(r, 0.0, 0.0),
            Point::new(0.0, r, 0.0),
            Point::new(-r, 0.0, 0.0),
            Point::new(0.0, -r, 0.0),
            Point::new(0.0, 0.0, r),
        ];
        let faces = [[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
        let macro_elements = faces
            .iter()
            .map(|f| MacroElement {
                vertices: *f,
                params: [verts[f[0]], verts[f[1]], verts[f[2]]],
            })
            .collect();
        Ok(SurfaceDescription {
            kind: SurfaceKind::HalfSphere { radius },
            n: 2,
            closed: false,
            macro_vertices: verts,
            macro_elements,
            curvature_bound: 1.0 / radius,
            has_oracle: true,
        })
    }

    pub fn flat_patch() -> Self {
        let verts = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(1.0, 1.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ];
        // Both refinement edges on the shared diagonal.
        let faces = [[2, 0, 1], [0, 2, 3]];
        let macro_elements = faces
            .iter()
            .map(|f| MacroElement {
                vertices: *f,
                params: [verts[f[0]], verts[f[1]], verts[f[2]]],
            })
            .collect();
        SurfaceDescription {
            kind: SurfaceKind::FlatPatch,
            n: 2,
            closed: false,
            macro_vertices: verts,
            macro_elements,
            curvature_bound: 0.0,
            has_oracle: true,
        }
    }

    pub fn graph(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} must lie in (0, 1]")));
        }
        let corners = [
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(0.0, 1.0),
        ];
        let verts: Vec<Point> = corners
            .iter()
            .map(|c| Point::new(c.x, c.y, graph_height(alpha, c.x, c.y)))
            .collect();
        let params: Vec<Point> = corners.iter().map(|c| Point::new(c.x, c.y, 0.0)).collect();
        let faces = [[2, 0, 1], [0, 2, 3]];
        let macro_elements = faces
            .iter()
            .map(|f| MacroElement {
                vertices: *f,
                params: [params[f[0]], params[f[1]], params[f[2]]],
            })
            .collect();
        let curvature_bound = sample_graph_curvature_bound(alpha);
        Ok(SurfaceDescription {
            kind: SurfaceKind::Graph { alpha },
            n: 2,
            closed: false,
            macro_vertices: verts,
            macro_elements,
            curvature_bound,
            has_oracle: true,
        })
    }

    pub fn circle(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius {radius} must be positive")));
        }
        let r = radius;
        let verts = vec![
            Point::new(r, 0.0, 0.0),
            Point::new(0.0, r, 0.0),
            Point::new(-r, 0.0, 0.0),
            Point::new(0.0, -r, 0.0),
        ];
        let segs = [[0, 1], [1, 2], [2, 3], [3, 0]];
        let macro_elements = segs
            .iter()
            .map(|s| MacroElement {
                vertices: [s[0], s[1], usize::MAX],
                params: [verts[s[0]], verts[s[1]], Point::zeros()],
            })
            .collect();
        Ok(SurfaceDescription {
            kind: SurfaceKind::Circle { radius },
            n: 1,
            closed: true,
            macro_vertices: verts,
            macro_elements,
            curvature_bound: 1.0 / radius,
            has_oracle: true,
        })
    }

    /// Identity-chart surface over an existing flat mesh (used by the OFF
    /// loader). Each facet is its own chart.
    pub fn polyhedral(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for f in &faces {
            for &v in f {
                if v >= vertices.len() {
                    return Err(Error::MeshFormat(format!("vertex index {v} out of range")));
                }
            }
        }
        let macro_elements = faces
            .iter()
            .map(|f| MacroElement {
                vertices: *f,
                params: [vertices[f[0]], vertices[f[1]], vertices[f[2]]],
            })
            .collect();
        Ok(SurfaceDescription {
            kind: SurfaceKind::Polyhedral,
            n: 2,
            closed: false, // refined from the mesh topology on load
            macro_vertices: vertices,
            macro_elements,
            curvature_bound: 0.0,
            has_oracle: false,
        })
    }

    /// Surface selection by string id plus JSON parameter object, e.g.
    /// `{"surface": "graph", "alpha": 0.4}`.
    pub fn from_id(id: &str, params: &serde_json::Value) -> Result<Self> {
        let radius = params
            .get("radius")
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| Error::InvalidParameter("radius must be a number".into()))
            })
            .transpose()?
            .unwrap_or(1.0);
        match id {
            "sphere" => Self::sphere(radius),
            "half_sphere" => Self::half_sphere(radius),
            "flat_patch" => Ok(Self::flat_patch()),
            "circle" => Self::circle(radius),
            "graph" => {
                let alpha = params
                    .get("alpha")
                    .map(|v| {
                        v.as_f64()
                            .ok_or_else(|| Error::InvalidParameter("alpha must be a number".into()))
                    })
                    .transpose()?
                    .unwrap_or(0.4);
                Self::graph(alpha)
            }
            other => Err(Error::UnknownSurface(other.to_string())),
        }
    }

    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }

    /// Simplex dimension: 2 for surfaces in R³, 1 for curves.
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Global bound `‖K‖_{L∞(γ)}` on the maximum principal curvature.
    /// Analytic for spheres and circles, sampled (lower bound times a
    /// safety factor) for the graph surface.
    pub fn curvature_bound(&self) -> f64 {
        self.curvature_bound
    }

    pub fn has_distance_oracle(&self) -> bool {
        self.has_oracle
    }

    pub fn num_macro_elements(&self) -> usize {
        self.macro_elements.len()
    }

    pub(crate) fn macro_elements(&self) -> &[MacroElement] {
        &self.macro_elements
    }

    pub(crate) fn macro_vertices(&self) -> &[Point] {
        &self.macro_vertices
    }

    fn check_ref_point(&self, x: RefPoint) -> Result<()> {
        let bary = [1.0 - x.x - x.y, x.x, x.y];
        if bary.iter().any(|b| *b < -CHART_MARGIN || *b > 1.0 + CHART_MARGIN) {
            return Err(Error::OutsideChart(format!("reference point ({}, {})", x.x, x.y)));
        }
        Ok(())
    }

    /// Evaluate the chart `χ_T` of macro element `macro_id` and its
    /// Jacobian at reference coordinates `x̂`. For curves only the first
    /// reference coordinate and Jacobian column are used.
    pub fn chart_eval(&self, macro_id: usize, x: RefPoint) -> Result<(Point, Matrix3x2<f64>)> {
        let me = self
            .macro_elements
            .get(macro_id)
            .ok_or_else(|| Error::OutsideChart(format!("macro element {macro_id}")))?;
        if self.n == 1 {
            let t = x.x;
            if !(-CHART_MARGIN..=1.0 + CHART_MARGIN).contains(&t) {
                return Err(Error::OutsideChart(format!("reference point {t}")));
            }
            let p = me.params[0] + (me.params[1] - me.params[0]) * t;
            let dp = me.params[1] - me.params[0];
            return Ok(self.lift_param_1d(p, dp));
        }
        self.check_ref_point(x)?;
        // Affine parameter point and its constant Jacobian.
        let p = me.params[0] * (1.0 - x.x - x.y) + me.params[1] * x.x + me.params[2] * x.y;
        let mut dp = Matrix3x2::zeros();
        dp.set_column(0, &(me.params[1] - me.params[0]));
        dp.set_column(1, &(me.params[2] - me.params[0]));
        match self.kind {
            SurfaceKind::FlatPatch | SurfaceKind::Polyhedral => Ok((p, dp)),
            SurfaceKind::Sphere { radius } | SurfaceKind::HalfSphere { radius } => {
                let norm = p.norm();
                let point = p * (radius / norm);
                // D[R p/|p|] = R (I - p̂ p̂ᵀ) / |p| applied to Dp.
                let scale = radius / norm;
                let phat = p / norm;
                let jac = (dp - phat * (phat.transpose() * dp)) * scale;
                Ok((point, jac))
            }
            SurfaceKind::Graph { alpha } => {
                let (s, t) = (p.x, p.y);
                let (z, zs, zt) = graph_height_grad(alpha, s, t);
                let point = Point::new(s, t, z);
                // Chain rule through the 2D parameter map.
                let mut jac = Matrix3x2::zeros();
                for c in 0..2 {
                    let ds = dp[(0, c)];
                    let dt = dp[(1, c)];
                    jac[(0, c)] = ds;
                    jac[(1, c)] = dt;
                    jac[(2, c)] = zs * ds + zt * dt;
                }
                Ok((point, jac))
            }
            SurfaceKind::Circle { .. } => unreachable!("circle charts handled by the 1d path"),
        }
    }

    fn lift_param_1d(&self, p: Point, dp: Point) -> (Point, Matrix3x2<f64>) {
        match self.kind {
            SurfaceKind::Circle { radius } => {
                let q = Vector2::new(p.x, p.y);
                let norm = q.norm();
                let point = Point::new(q.x, q.y, 0.0) * (radius / norm);
                let scale = radius / norm;
                let qhat = q / norm;
                let dq = Vector2::new(dp.x, dp.y);
                let proj = dq - qhat * qhat.dot(&dq);
                let mut jac = Matrix3x2::zeros();
                jac[(0, 0)] = proj.x * scale;
                jac[(1, 0)] = proj.y * scale;
                (point, jac)
            }
            _ => {
                let mut jac = Matrix3x2::zeros();
                jac.set_column(0, &dp);
                (p, jac)
            }
        }
    }

    /// Signed distance, unit normal and Weingarten map at `x`. The sign
    /// convention is `d < 0` inside closed surfaces (below graphs), so
    /// the unit sphere carries `κ_i = +1`.
    pub fn distance_oracle(&self, x: Point) -> Result<DistanceData> {
        match self.kind {
            SurfaceKind::Sphere { radius } | SurfaceKind::HalfSphere { radius } => {
                let norm = x.norm();
                if norm < 1e-14 {
                    return Err(Error::OutsideTube { dist: radius, limit: radius });
                }
                let grad = x / norm;
                let hess = (Matrix3::identity() - grad * grad.transpose()) / norm;
                Ok(DistanceData { d: norm - radius, grad, hess })
            }
            SurfaceKind::FlatPatch => Ok(DistanceData {
                d: x.z,
                grad: Point::new(0.0, 0.0, 1.0),
                hess: Matrix3::zeros(),
            }),
            SurfaceKind::Circle { radius } => {
                let q = Vector2::new(x.x, x.y);
                let norm = q.norm();
                if norm < 1e-14 {
                    return Err(Error::OutsideTube { dist: radius, limit: radius });
                }
                let grad = Point::new(q.x / norm, q.y / norm, 0.0);
                let mut hess = Matrix3::zeros();
                let qh = q / norm;
                let tang = Vector2::new(-qh.y, qh.x);
                let h2 = tang * tang.transpose() / norm;
                hess.fixed_view_mut::<2, 2>(0, 0).copy_from(&h2);
                Ok(DistanceData { d: norm - radius, grad, hess })
            }
            SurfaceKind::Graph { alpha } => graph_distance_oracle(alpha, x),
            SurfaceKind::Polyhedral => Err(Error::MissingOracle),
        }
    }

    /// Closest-point projection `P_d(x) = x - d(x) ∇d(x)` with tubular
    /// neighborhood check `|d| < ‖K‖⁻¹`.
    pub fn closest_point(&self, x: Point) -> Result<ClosestPoint> {
        let data = self.distance_oracle(x)?;
        if self.curvature_bound > 0.0 {
            let limit = 1.0 / self.curvature_bound;
            if data.d.abs() > limit {
                return Err(Error::OutsideTube { dist: data.d.abs(), limit });
            }
        }
        Ok(ClosestPoint {
            point: x - data.grad * data.d,
            d: data.d,
            normal: data.grad,
        })
    }

    /// Principal curvatures at `x`: the eigenvalues of `D²d(x)` restricted
    /// to the tangent space (the null direction along `∇d` is dropped).
    pub fn curvature(&self, x: Point) -> Result<CurvatureReport> {
        let data = self.distance_oracle(x)?;
        if self.n == 1 {
            let (t1, _) = tangent_basis(data.grad);
            let k = (t1.transpose() * data.hess * t1)[(0, 0)];
            return Ok(CurvatureReport::new(vec![k]));
        }
        let (t1, t2) = tangent_basis(data.grad);
        let s11 = (t1.transpose() * data.hess * t1)[(0, 0)];
        let s22 = (t2.transpose() * data.hess * t2)[(0, 0)];
        let s12 = (t1.transpose() * data.hess * t2)[(0, 0)];
        let (k1, k2) = sym2x2_eigenvalues(s11, s12, s22);
        Ok(CurvatureReport::new(vec![k1, k2]))
    }
}

/// Orthonormal basis of the plane orthogonal to `normal`.
fn tangent_basis(normal: Point) -> (Point, Point) {
    let pick = if normal.x.abs() < 0.9 {
        Point::new(1.0, 0.0, 0.0)
    } else {
        Point::new(0.0, 1.0, 0.0)
    };
    let t1 = (pick - normal * normal.dot(&pick)).normalize();
    let t2 = normal.cross(&t1);
    (t1, t2)
}

fn sym2x2_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let tr = a + c;
    let disc = ((a - c) * 0.5).hypot(b);
    (tr * 0.5 - disc, tr * 0.5 + disc)
}

pub(crate) fn graph_height(alpha: f64, s: f64, t: f64) -> f64 {
    let w = 0.75 - s * s - t * t;
    if w <= 0.0 {
        0.0
    } else {
        w.powf(GRAPH_BASE_EXPONENT + alpha)
    }
}

/// Height plus first parameter derivatives.
fn graph_height_grad(alpha: f64, s: f64, t: f64) -> (f64, f64, f64) {
    let e = GRAPH_BASE_EXPONENT + alpha;
    let w = 0.75 - s * s - t * t;
    if w <= 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let we1 = w.powf(e - 1.0);
        (w * we1, -2.0 * e * s * we1, -2.0 * e * t * we1)
    }
}

/// Second parameter derivatives (z_ss, z_st, z_tt).
fn graph_height_hess(alpha: f64, s: f64, t: f64) -> (f64, f64, f64) {
    let e = GRAPH_BASE_EXPONENT + alpha;
    let w = 0.75 - s * s - t * t;
    if w <= 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let we1 = w.powf(e - 1.0);
        let we2 = w.powf(e - 2.0);
        let zss = -2.0 * e * we1 + 4.0 * e * (e - 1.0) * s * s * we2;
        let ztt = -2.0 * e * we1 + 4.0 * e * (e - 1.0) * t * t * we2;
        let zst = 4.0 * e * (e - 1.0) * s * t * we2;
        (zss, zst, ztt)
    }
}

/// Graph point, tangent frame, upward unit normal and Weingarten map at
/// parameters (s, t).
fn graph_frame(alpha: f64, s: f64, t: f64) -> (Point, Matrix3x2<f64>, Point, Matrix3<f64>) {
    let (z, zs, zt) = graph_height_grad(alpha, s, t);
    let (zss, zst, ztt) = graph_height_hess(alpha, s, t);
    let sigma = Point::new(s, t, z);
    let mut g_cols = Matrix3x2::zeros();
    g_cols.set_column(0, &Point::new(1.0, 0.0, zs));
    g_cols.set_column(1, &Point::new(0.0, 1.0, zt));
    let m = Point::new(-zs, -zt, 1.0);
    let mn = m.norm();
    let nu = m / mn;
    let ms = Point::new(-zss, -zst, 0.0);
    let mt = Point::new(-zst, -ztt, 0.0);
    let nus = ms / mn - m * (m.dot(&ms) / (mn * mn * mn));
    let nut = mt / mn - m * (m.dot(&mt) / (mn * mn * mn));
    let g = g_cols.transpose() * g_cols;
    let ginv = g.try_inverse().expect("graph metric is nonsingular");
    let dpinv = ginv * g_cols.transpose();
    let mut nucols = Matrix3x2::zeros();
    nucols.set_column(0, &nus);
    nucols.set_column(1, &nut);
    let w_raw = nucols * dpinv;
    let w = (w_raw + w_raw.transpose()) * 0.5;
    (sigma, g_cols, nu, w)
}

/// Damped Newton iteration for the closest point on the graph surface,
/// initialized from the vertical projection.
fn graph_distance_oracle(alpha: f64, x: Point) -> Result<DistanceData> {
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 50;
    let mut st = Vector2::new(x.x, x.y);
    let objective = |st: &Vector2<f64>| {
        let z = graph_height(alpha, st.x, st.y);
        let r = x - Point::new(st.x, st.y, z);
        0.5 * r.norm_squared()
    };
    let mut fval = objective(&st);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let (sigma, g_cols, _, _) = graph_frame(alpha, st.x, st.y);
        let r = x - sigma;
        let g1 = -r.dot(&g_cols.column(0));
        let g2 = -r.dot(&g_cols.column(1));
        grad_norm = g1.hypot(g2);
        if grad_norm <= TOL * (1.0 + x.norm()) {
            break;
        }
        let (zss, zst, ztt) = graph_height_hess(alpha, st.x, st.y);
        // Hessian of ½|x - σ|²: σ_i·σ_j - r·σ_ij.
        let h11 = g_cols.column(0).dot(&g_cols.column(0)) - r.z * zss;
        let h12 = g_cols.column(0).dot(&g_cols.column(1)) - r.z * zst;
        let h22 = g_cols.column(1).dot(&g_cols.column(1)) - r.z * ztt;
        let h = Matrix2::new(h11, h12, h12, h22);
        let rhs = Vector2::new(-g1, -g2);
        let step = h.try_inverse().map(|hi| hi * rhs).unwrap_or(rhs);
        // Damping: backtrack until the objective decreases.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = st + step * lambda;
            let fc = objective(&cand);
            if fc <= fval {
                st = cand;
                fval = fc;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if grad_norm > 1e-8 * (1.0 + x.norm()) {
        return Err(Error::ProjectionDiverged { iterations: MAX_ITER, residual: grad_norm });
    }
    let (sigma, _, nu, w_surf) = graph_frame(alpha, st.x, st.y);
    let d = (x - sigma).dot(&nu);
    // Transport the Weingarten map to the parallel surface through x:
    // κ_i(x) = κ_i(σ) / (1 + d κ_i(σ)) with unchanged principal directions.
    let (t1, t2) = tangent_basis(nu);
    let s11 = (t1.transpose() * w_surf * t1)[(0, 0)];
    let s22 = (t2.transpose() * w_surf * t2)[(0, 0)];
    let s12 = (t1.transpose() * w_surf * t2)[(0, 0)];
    let (k1, k2) = sym2x2_eigenvalues(s11, s12, s22);
    // Eigenvectors of the 2x2 tangent representation.
    let dir = |k: f64| -> Point {
        if s12.abs() > 1e-14 {
            let v = Vector2::new(s12, k - s11).normalize();
            t1 * v.x + t2 * v.y
        } else if (k - s11).abs() < (k - s22).abs() {
            t1
        } else {
            t2
        }
    };
    let e1 = dir(k1);
    let e2 = (nu.cross(&e1)).normalize();
    let k1x = k1 / (1.0 + d * k1);
    let k2x = k2 / (1.0 + d * k2);
    let hess = e1 * e1.transpose() * k1x + e2 * e2.transpose() * k2x;
    Ok(DistanceData { d, grad: nu, hess })
}

fn sample_graph_curvature_bound(alpha: f64) -> f64 {
    let m = CURVATURE_SAMPLES_PER_AXIS;
    let mut kmax = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let s = i as f64 / (m - 1) as f64;
            let t = j as f64 / (m - 1) as f64;
            let (_, _, _, w) = graph_frame(alpha, s, t);
            let nu = {
                let (_, _, nu, _) = graph_frame(alpha, s, t);
                nu
            };
            let (t1, t2) = tangent_basis(nu);
            let s11 = (t1.transpose() * w * t1)[(0, 0)];
            let s22 = (t2.transpose() * w * t2)[(0, 0)];
            let s12 = (t1.transpose() * w * t2)[(0, 0)];
            let (k1, k2) = sym2x2_eigenvalues(s11, s12, s22);
            kmax = kmax.max(k1.abs()).max(k2.abs());
        }
    }
    kmax * CURVATURE_SAFETY
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_patch_identity_chart() {
        let s = SurfaceDescription::flat_patch();
        // Macro 0 covers the triangle (1,1)-(0,0)-(1,0).
        let (p, jac) = s.chart_eval(0, RefPoint::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(p, Point::new(1.0, 1.0, 0.0));
        // Affine chart: columns are edge vectors.
        assert_relative_eq!(Point::from(jac.column(0)), Point::new(-1.0, -1.0, 0.0));
    }

    #[test]
    fn sphere_chart_normalizes_barycenter() {
        let s = SurfaceDescription::sphere(1.0).unwrap();
        // Face 0 is (e1, e2, e3); its barycenter maps to (1,1,1)/√3.
        let (p, _) = s.chart_eval(0, RefPoint::new(1.0 / 3.0, 1.0 / 3.0)).unwrap();
        let expect = Point::new(1.0, 1.0, 1.0) / 3f64.sqrt();
        assert_relative_eq!(p, expect, epsilon = 1e-14);
    }

    #[test]
    fn graph_chart_value() {
        let s = SurfaceDescription::graph(0.4).unwrap();
        // Locate parameter (0.5, 0.5) in macro 0: params are (1,1),(0,0),(1,0);
        // x̂ = (0.5, 0) gives the midpoint of (1,1)-(0,0).
        let (p, _) = s.chart_eval(0, RefPoint::new(0.5, 0.0)).unwrap();
        assert_relative_eq!(p.x, 0.5);
        assert_relative_eq!(p.y, 0.5);
        assert_relative_eq!(p.z, 0.25f64.powf(2.4), epsilon = 1e-12);
        assert!((p.z - 0.035897).abs() < 1e-6);
    }

    #[test]
    fn chart_jacobian_matches_finite_differences() {
        let surfaces = vec![
            SurfaceDescription::sphere(1.0).unwrap(),
            SurfaceDescription::half_sphere(1.0).unwrap(),
            SurfaceDescription::graph(0.4).unwrap(),
            SurfaceDescription::flat_patch(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for s in surfaces {
            for _ in 0..1000 {
                let m = rng.random_range(0..s.num_macro_elements());
                let a: f64 = rng.random_range(0.05..0.9);
                let b: f64 = rng.random_range(0.05..(0.95 - a));
                let x = RefPoint::new(a, b);
                let (_, jac) = s.chart_eval(m, x).unwrap();
                let h = 1e-6;
                for c in 0..2 {
                    let mut dx = RefPoint::zeros();
                    dx[c] = h;
                    let (pp, _) = s.chart_eval(m, x + dx).unwrap();
                    let (pm, _) = s.chart_eval(m, x - dx).unwrap();
                    let fd = (pp - pm) / (2.0 * h);
                    let col = Point::from(jac.column(c));
                    assert!(
                        (fd - col).norm() <= 1e-6 * (1.0 + col.norm()),
                        "{:?} macro {m}: fd {fd:?} vs {col:?}",
                        s.kind()
                    );
                }
            }
        }
    }

    #[test]
    fn closest_point_sphere_and_plane() {
        let s = SurfaceDescription::sphere(1.0).unwrap();
        let cp = s.closest_point(Point::new(2.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(cp.point, Point::new(1.0, 0.0, 0.0), epsilon = 1e-14);
        assert_relative_eq!(cp.d, 1.0);
        assert_relative_eq!(cp.normal, Point::new(1.0, 0.0, 0.0));

        let f = SurfaceDescription::flat_patch();
        let cp = f.closest_point(Point::new(0.3, 0.4, 0.2)).unwrap();
        assert_relative_eq!(cp.point, Point::new(0.3, 0.4, 0.0), epsilon = 1e-14);
        assert_relative_eq!(cp.d, 0.2);
        assert_relative_eq!(cp.normal, Point::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn closest_point_outside_tube_errors() {
        let s = SurfaceDescription::sphere(1.0).unwrap();
        assert!(matches!(
            s.closest_point(Point::new(2.5, 0.0, 0.0)),
            Err(Error::OutsideTube { .. })
        ));
    }

    #[test]
    fn graph_newton_lands_on_flat_region() {
        let s = SurfaceDescription::graph(0.4).unwrap();
        let cp = s.closest_point(Point::new(0.9, 0.9, 0.1)).unwrap();
        assert!((cp.point - Point::new(0.9, 0.9, 0.0)).norm() < 1e-12);
        assert!((cp.d - 0.1).abs() < 1e-12);
        assert!((cp.normal - Point::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn curvature_sphere_flat_and_offset() {
        let s = SurfaceDescription::sphere(1.0).unwrap();
        let r = s.curvature(Point::new(0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(r.kappas[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.kappas[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.max_abs, 1.0);

        let f = SurfaceDescription::flat_patch();
        let r = f.curvature(Point::new(0.3, 0.3, 0.0)).unwrap();
        assert_relative_eq!(r.max_abs, 0.0);

        // d = 0.5 outside the unit sphere: κ = 1 / (1 + 0.5) = 2/3.
        let r = s.curvature(Point::new(1.5, 0.0, 0.0)).unwrap();
        assert_relative_eq!(r.kappas[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.kappas[1], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn distance_oracle_identities() {
        let surfaces = vec![
            SurfaceDescription::sphere(1.3).unwrap(),
            SurfaceDescription::graph(0.4).unwrap(),
            SurfaceDescription::flat_patch(),
            SurfaceDescription::circle(2.0).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for s in surfaces {
            let mut checked = 0;
            while checked < 1000 {
                let x = match s.kind() {
                    SurfaceKind::Circle { .. } => Point::new(
                        rng.random_range(-2.4..2.4),
                        rng.random_range(-2.4..2.4),
                        0.0,
                    ),
                    SurfaceKind::Graph { .. } => Point::new(
                        rng.random_range(0.1..0.9),
                        rng.random_range(0.1..0.9),
                        rng.random_range(0.0..0.7),
                    ),
                    _ => Point::new(
                        rng.random_range(-1.6..1.6),
                        rng.random_range(-1.6..1.6),
                        rng.random_range(-1.6..1.6),
                    ),
                };
                let Ok(data) = s.distance_oracle(x) else { continue };
                if s.curvature_bound() > 0.0 && data.d.abs() > 0.4 / s.curvature_bound() {
                    continue;
                }
                checked += 1;
                assert!((data.grad.norm() - 1.0).abs() < 1e-10, "{:?}", s.kind());
                assert!(
                    (data.hess * data.grad).norm() < 1e-10,
                    "{:?}: W ∇d = {:?}",
                    s.kind(),
                    data.hess * data.grad
                );
                // Idempotence of the projection.
                let cp = s.closest_point(x).unwrap();
                let again = s.distance_oracle(cp.point).unwrap();
                assert!(again.d.abs() < 1e-11, "{:?}: residual d {}", s.kind(), again.d);
            }
        }
    }

    #[test]
    fn closest_point_optimality_against_chart_lattice() {
        // |x - P_d(x)| ≤ |x - y| for any chart point y.
        let surfaces = vec![
            SurfaceDescription::sphere(1.0).unwrap(),
            SurfaceDescription::graph(0.4).unwrap(),
            SurfaceDescription::flat_patch(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lattice = crate::quadrature::triangle_lattice(10);
        for s in surfaces {
            let mut checked = 0;
            while checked < 1000 {
                let x = match s.kind() {
                    SurfaceKind::Graph { .. } => Point::new(
                        rng.random_range(0.05..0.95),
                        rng.random_range(0.05..0.95),
                        rng.random_range(0.0..0.5),
                    ),
                    _ => Point::new(
                        rng.random_range(-1.3..1.3),
                        rng.random_range(-1.3..1.3),
                        rng.random_range(-1.3..1.3),
                    ),
                };
                let Ok(cp) = s.closest_point(x) else { continue };
                checked += 1;
                let m = rng.random_range(0..s.num_macro_elements());
                let l = lattice[rng.random_range(0..lattice.len())];
                let (y, _) = s.chart_eval(m, l).unwrap();
                assert!(
                    (x - cp.point).norm() <= (x - y).norm() + 1e-12,
                    "{:?}: projection not optimal",
                    s.kind()
                );
            }
        }
    }

    #[test]
    fn graph_curvature_continuous_across_seam() {
        // Approaching the seam circle r² = 3/4 from the curved side, the
        // curvature decays like w^α and matches the flat side's zero.
        let s = SurfaceDescription::graph(0.4).unwrap();
        let r = 0.75f64.sqrt();
        let at_radius = |rad: f64| {
            let q = rad / 2f64.sqrt();
            let p = Point::new(q, q, graph_height(0.4, q, q));
            s.curvature(p).unwrap().max_abs
        };
        let outside = at_radius(r + 1e-9);
        assert!(outside < 1e-12);
        let near = at_radius(r - 1e-6);
        let nearer = at_radius(r - 1e-9);
        assert!(near < 1e-1, "curvature near seam: {near}");
        assert!(nearer < near / 3.0, "no decay toward the seam: {nearer} vs {near}");
    }

    #[test]
    fn curvature_bound_values() {
        assert_relative_eq!(SurfaceDescription::sphere(2.0).unwrap().curvature_bound(), 0.5);
        assert_relative_eq!(SurfaceDescription::flat_patch().curvature_bound(), 0.0);
        let g = SurfaceDescription::graph(0.4).unwrap();
        assert!(g.curvature_bound() > 0.0);
    }

    #[test]
    fn unknown_surface_rejected() {
        let err = SurfaceDescription::from_id("torus", &serde_json::json!({}));
        assert!(matches!(err, Err(Error::UnknownSurface(_))));
        let err = SurfaceDescription::sphere(-1.0);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }
}

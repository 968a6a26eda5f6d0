//! Degree-`r` Lagrange finite elements on the interpolated surface.
//!
//! The discrete problem is `∫_Γ ∇_Γ U · ∇_Γ V = ∫_Γ F_Γ V` with
//! `F_Γ = f q / q_Γ`, so the load is assembled against the exact area
//! element: `∫ F_Γ V q_Γ = ∫ (f ∘ χ) V q`, which never divides by `q_Γ`.

use crate::basis::LagrangeBasis;
use crate::discrete::DiscreteSurface;
use crate::dof::NodeMap;
use crate::mesh::SurfaceMesh;
use crate::{map_indexed, Error, Point, Result};
use nalgebra::Matrix2;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// Closed surfaces: solutions with vanishing mean.
    MeanZero,
    /// Boundary values interpolated from the exact solution when one is
    /// attached, zero otherwise.
    Dirichlet,
}

#[derive(Debug, Clone)]
pub struct FemSpace {
    pub r: usize,
    pub mode: ConstraintMode,
    pub basis: LagrangeBasis,
    pub node_map: NodeMap,
    /// Unknowns: all nodes for mean-zero, interior nodes for Dirichlet.
    pub num_dofs: usize,
}

/// Build the degree-`r` space over the mesh.
pub fn build_space(mesh: &SurfaceMesh, r: usize, mode: ConstraintMode) -> FemSpace {
    assert!(r >= 1);
    let basis = LagrangeBasis::new(r);
    let node_map = NodeMap::build(mesh, &basis);
    let num_dofs = match mode {
        ConstraintMode::MeanZero => node_map.num_nodes,
        ConstraintMode::Dirichlet => node_map.boundary.iter().filter(|&&b| !b).count(),
    };
    FemSpace { r, mode, basis, node_map, num_dofs }
}

type PointFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Exact solution on the surface plus its tangential gradient, used for
/// error measurement and Dirichlet data.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: PointFn,
    pub grad: GradFn,
}

/// Load data `f` on `γ` (evaluated through the charts) and an optional
/// exact solution.
#[derive(Clone)]
pub struct ProblemData {
    pub f: PointFn,
    pub exact: Option<ExactSolution>,
}

impl std::fmt::Debug for ProblemData {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt.debug_struct("ProblemData")
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

/// Pole guard for the singular half-sphere solution: contributions with
/// `x₁² + x₂²` below this squared radius are dropped. The integrands are
/// integrable, so the excluded mass is below every tolerance.
const POLE_GUARD: f64 = 1e-12;

impl ProblemData {
    /// `u = sin(φ) sin(θ)^{3/5}` on the unit half sphere (θ polar from the
    /// north pole), i.e. `u = x₂ ρ^{-1/5}` with `ρ = x₁² + x₂²`, and
    /// `f = -Δ_γ u = (16/25) x₂ ρ^{-6/5} + (24/25) x₂ ρ^{-1/5}`.
    pub fn half_sphere_singular() -> Self {
        let f: PointFn = Arc::new(|p: Point| {
            let rho = p.x * p.x + p.y * p.y;
            if rho < POLE_GUARD * POLE_GUARD {
                return 0.0;
            }
            (16.0 / 25.0) * p.y * rho.powf(-1.2) + (24.0 / 25.0) * p.y * rho.powf(-0.2)
        });
        let u: PointFn = Arc::new(|p: Point| {
            let rho = p.x * p.x + p.y * p.y;
            if rho < POLE_GUARD * POLE_GUARD {
                return 0.0;
            }
            p.y * rho.powf(-0.2)
        });
        let grad: GradFn = Arc::new(|p: Point| {
            let rho = p.x * p.x + p.y * p.y;
            if rho < POLE_GUARD * POLE_GUARD {
                return Point::zeros();
            }
            let du = Point::new(
                -0.4 * p.x * p.y * rho.powf(-1.2),
                rho.powf(-0.2) - 0.4 * p.y * p.y * rho.powf(-1.2),
                0.0,
            );
            // Tangential part on the unit sphere.
            du - p * p.dot(&du)
        });
        ProblemData { f, exact: Some(ExactSolution { u, grad }) }
    }

    /// Smooth manufactured solution `u = x₁ x₂` on the unit sphere; a
    /// degree-2 spherical harmonic, so `f = 6 x₁ x₂`.
    pub fn sphere_harmonic() -> Self {
        let f: PointFn = Arc::new(|p: Point| 6.0 * p.x * p.y);
        let u: PointFn = Arc::new(|p: Point| p.x * p.y);
        let grad: GradFn = Arc::new(|p: Point| {
            let du = Point::new(p.y, p.x, 0.0);
            du - p * p.dot(&du)
        });
        ProblemData { f, exact: Some(ExactSolution { u, grad }) }
    }

    /// Unit load with homogeneous Dirichlet values (graph experiment).
    pub fn unit_load() -> Self {
        ProblemData { f: Arc::new(|_| 1.0), exact: None }
    }

    /// `u = sin(πx) sin(πy)` on the flat patch.
    pub fn flat_sine() -> Self {
        use std::f64::consts::PI;
        let f: PointFn = Arc::new(|p: Point| 2.0 * PI * PI * (PI * p.x).sin() * (PI * p.y).sin());
        let u: PointFn = Arc::new(|p: Point| (PI * p.x).sin() * (PI * p.y).sin());
        let grad: GradFn = Arc::new(|p: Point| {
            Point::new(
                PI * (PI * p.x).cos() * (PI * p.y).sin(),
                PI * (PI * p.x).sin() * (PI * p.y).cos(),
                0.0,
            )
        });
        ProblemData { f, exact: Some(ExactSolution { u, grad }) }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub nrows: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Sort triplets and merge duplicates.
    pub fn from_triplets(n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> Csr {
        triplets.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut i = 0;
        let mut current_row = 0usize;
        while i < triplets.len() {
            let (r, c, _) = triplets[i];
            while current_row < r {
                current_row += 1;
                row_ptr[current_row] = cols.len();
            }
            let mut v = 0.0;
            while i < triplets.len() && triplets[i].0 == r && triplets[i].1 == c {
                v += triplets[i].2;
                i += 1;
            }
            cols.push(c);
            vals.push(v);
        }
        while current_row < n {
            current_row += 1;
            row_ptr[current_row] = cols.len();
        }
        Csr { nrows: n, row_ptr, cols, vals }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[idx] * x[self.cols[idx]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.cols[idx] == r {
                    d[r] = self.vals[idx];
                }
            }
        }
        d
    }

    /// Largest relative symmetry defect.
    pub fn symmetry_defect(&self) -> f64 {
        let mut max = 0.0f64;
        let mut scale = 0.0f64;
        for r in 0..self.nrows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[idx];
                let v = self.vals[idx];
                scale = scale.max(v.abs());
                let mut vt = 0.0;
                for jdx in self.row_ptr[c]..self.row_ptr[c + 1] {
                    if self.cols[jdx] == r {
                        vt = self.vals[jdx];
                    }
                }
                max = max.max((v - vt).abs());
            }
        }
        if scale > 0.0 {
            max / scale
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub enum Constraint {
    MeanZero {
        /// Moments `∫_Γ φ_i`, for the final mean shift.
        moments: Vec<f64>,
    },
    Dirichlet {
        values: Vec<f64>,
        flags: Vec<bool>,
    },
}

#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: Csr,
    pub rhs: Vec<f64>,
    pub constraint: Constraint,
}

/// Assemble stiffness and load over all global nodes; constraints are
/// applied at solve time. `A_ij = Σ_T ∫ ∇φ_i g_Γ⁻¹ ∇φ_jᵀ q_Γ`,
/// `b_i = Σ_T ∫ (f ∘ χ) φ_i q`.
pub fn assemble(ds: &DiscreteSurface, space: &FemSpace, data: &ProblemData) -> Result<SparseSystem> {
    let mesh = ds.mesh();
    let rule = ds.volume_rule(space.r);
    let nloc = space.basis.len();
    let vals_at: Vec<_> = rule.points.iter().map(|&p| space.basis.eval(p)).collect();
    let grads_at: Vec<_> = rule.points.iter().map(|&p| space.basis.grad(p)).collect();

    struct Local {
        mat: Vec<f64>,
        rhs: Vec<f64>,
        moments: Vec<f64>,
    }
    let locals: Vec<Result<Local>> = map_indexed(mesh.num_elements(), |t| {
        let cache = ds.geometry_cache(t, &rule)?;
        let mut mat = vec![0.0; nloc * nloc];
        let mut rhs = vec![0.0; nloc];
        let mut moments = vec![0.0; nloc];
        let mut gg: Vec<nalgebra::Vector2<f64>> = vec![nalgebra::Vector2::zeros(); nloc];
        for (qi, gp) in cache.points.iter().enumerate() {
            let w = gp.weight;
            let grads = &grads_at[qi];
            let vals = &vals_at[qi];
            for i in 0..nloc {
                gg[i] = gp.ginv * grads[i];
            }
            let fval = (data.f)(gp.chart_point);
            for i in 0..nloc {
                for j in i..nloc {
                    let a = grads[i].dot(&gg[j]) * gp.q * w;
                    mat[i * nloc + j] += a;
                    if i != j {
                        mat[j * nloc + i] += a;
                    }
                }
                rhs[i] += fval * vals[i] * gp.q_exact * w;
                moments[i] += vals[i] * gp.q * w;
            }
        }
        Ok(Local { mat, rhs, moments })
    });

    let n = space.node_map.num_nodes;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0; n];
    let mut moments = vec![0.0; n];
    for (t, local) in locals.into_iter().enumerate() {
        let local = local?;
        let nodes = &space.node_map.element_nodes[t];
        for i in 0..nloc {
            let gi = nodes[i];
            rhs[gi] += local.rhs[i];
            moments[gi] += local.moments[i];
            for j in 0..nloc {
                triplets.push((gi, nodes[j], local.mat[i * nloc + j]));
            }
        }
    }
    let matrix = Csr::from_triplets(n, &mut triplets);

    let constraint = match space.mode {
        ConstraintMode::MeanZero => Constraint::MeanZero { moments },
        ConstraintMode::Dirichlet => {
            let mut values = vec![0.0; n];
            if let Some(exact) = &data.exact {
                for gid in 0..n {
                    if space.node_map.boundary[gid] {
                        let (t, local) = space.node_map.owner[gid];
                        let e = mesh.element(t);
                        let r = e.local_to_macro(space.basis.nodes[local], 2);
                        let (p, _) = ds.surface().chart_eval(e.macro_id(), r)?;
                        values[gid] = (exact.u)(p);
                    }
                }
            }
            Constraint::Dirichlet { values, flags: space.node_map.boundary.clone() }
        }
    };

    Ok(SparseSystem { matrix, rhs, constraint })
}

#[derive(Debug, Clone)]
pub struct FemSolution {
    /// Coefficients over all global nodes, boundary values included.
    pub coeffs: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl FemSolution {
    pub fn local_coeffs(&self, space: &FemSpace, t: usize) -> Vec<f64> {
        space.node_map.element_nodes[t]
            .iter()
            .map(|&g| self.coeffs[g])
            .collect()
    }
}

/// Jacobi-preconditioned conjugate gradients. In mean-zero mode the
/// iterates are projected onto the constant-free hyperplane each step and
/// the surface mean is subtracted at the end.
pub fn solve(sys: &SparseSystem, tol: f64) -> Result<FemSolution> {
    assert!(tol > 0.0);
    match &sys.constraint {
        Constraint::Dirichlet { values, flags } => {
            let n = sys.matrix.nrows;
            let free: Vec<usize> = (0..n).filter(|&i| !flags[i]).collect();
            let mut index_of = vec![usize::MAX; n];
            for (k, &i) in free.iter().enumerate() {
                index_of[i] = k;
            }
            // Reduced system A_ff x = b_f - A_fc g.
            let mut triplets = Vec::new();
            let mut rhs = vec![0.0; free.len()];
            for (k, &i) in free.iter().enumerate() {
                rhs[k] = sys.rhs[i];
                for idx in sys.matrix.row_ptr[i]..sys.matrix.row_ptr[i + 1] {
                    let c = sys.matrix.cols[idx];
                    let v = sys.matrix.vals[idx];
                    if index_of[c] != usize::MAX {
                        triplets.push((k, index_of[c], v));
                    } else {
                        rhs[k] -= v * values[c];
                    }
                }
            }
            let reduced = Csr::from_triplets(free.len(), &mut triplets);
            let (x, iterations, residual) = pcg(&reduced, &rhs, tol, false)?;
            let mut coeffs = values.clone();
            for (k, &i) in free.iter().enumerate() {
                coeffs[i] = x[k];
            }
            Ok(FemSolution { coeffs, iterations, residual })
        }
        Constraint::MeanZero { moments } => {
            let (mut coeffs, iterations, residual) = pcg(&sys.matrix, &sys.rhs, tol, true)?;
            // Shift to zero surface mean: ∫_Γ U = m · U.
            let m_dot_u: f64 = moments.iter().zip(&coeffs).map(|(m, u)| m * u).sum();
            let m_dot_one: f64 = moments.iter().sum();
            if m_dot_one != 0.0 {
                let shift = m_dot_u / m_dot_one;
                for u in &mut coeffs {
                    *u -= shift;
                }
            }
            Ok(FemSolution { coeffs, iterations, residual })
        }
    }
}

fn project_constants(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

fn pcg(a: &Csr, b: &[f64], tol: f64, mean_zero: bool) -> Result<(Vec<f64>, usize, f64)> {
    let n = a.nrows;
    if n == 0 {
        return Ok((Vec::new(), 0, 0.0));
    }
    let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0, 0.0));
    }
    let diag = a.diagonal();
    let precond: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let max_iter = 10 * n + 10;

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if mean_zero {
        project_constants(&mut r);
    }
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(ri, pi)| ri * pi).collect();
    if mean_zero {
        project_constants(&mut z);
    }
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let mut rnorm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut iterations = 0;
    while rnorm / bnorm > tol {
        if iterations >= max_iter {
            return Err(Error::SolverDiverged { residual: rnorm / bnorm, iterations });
        }
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::SolverDiverged { residual: rnorm / bnorm, iterations });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if mean_zero {
            project_constants(&mut x);
            project_constants(&mut r);
        }
        for i in 0..n {
            z[i] = r[i] * precond[i];
        }
        if mean_zero {
            project_constants(&mut z);
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        iterations += 1;
    }
    Ok((x, iterations, rnorm / bnorm))
}

/// Energy error of the lifted solution,
/// `‖∇_γ(u - U ∘ P_d⁻¹)‖_{L₂(γ)}`, computed on the reference elements
/// through the composite map `Φ = P_d ∘ X` and its area element `q_d`.
pub fn lifted_h1_error(
    sol: &FemSolution,
    space: &FemSpace,
    ds: &DiscreteSurface,
    data: &ProblemData,
) -> Result<f64> {
    let exact = data.exact.as_ref().ok_or(Error::MissingExactSolution)?;
    if !ds.surface().has_distance_oracle() {
        return Err(Error::MissingOracle);
    }
    let rule = ds.volume_rule(space.r);
    let grads_at: Vec<_> = rule.points.iter().map(|&p| space.basis.grad(p)).collect();
    let grad = exact.grad.clone();
    let terms: Vec<Result<f64>> = map_indexed(ds.mesh().num_elements(), |t| {
        let cache = ds.geometry_cache(t, &rule)?;
        let local = sol.local_coeffs(space, t);
        let mut acc = 0.0;
        for (qi, gp) in cache.points.iter().enumerate() {
            let j = gp.proj_cols.expect("oracle data present");
            let gj = j.transpose() * j;
            let det = gj.determinant();
            if det <= 0.0 {
                continue;
            }
            let gjinv = Matrix2::new(gj[(1, 1)], -gj[(0, 1)], -gj[(1, 0)], gj[(0, 0)]) / det;
            // Tangential gradient of U ∘ Φ⁻¹ at Φ(x̂): J gj⁻¹ ∇Û.
            let mut du_ref = nalgebra::Vector2::zeros();
            for (i, g) in grads_at[qi].iter().enumerate() {
                du_ref += g * local[i];
            }
            let grad_disc = j * (gjinv * du_ref);
            let dist = gp.dist.expect("oracle data present");
            let y = gp.x - dist.grad * dist.d;
            let grad_exact = grad(y);
            let diff = grad_exact - Point::from(grad_disc);
            acc += gp.weight * diff.norm_squared() * det.sqrt();
        }
        Ok(acc)
    });
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    Ok(total.sqrt())
}

/// Evaluate a finite element function at a reference point of an element.
pub fn eval_solution(sol: &FemSolution, space: &FemSpace, t: usize, x: crate::RefPoint) -> f64 {
    let vals = space.basis.eval(x);
    space.node_map.element_nodes[t]
        .iter()
        .enumerate()
        .map(|(i, &g)| sol.coeffs[g] * vals[i])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SurfaceDescription;
    use crate::mesh::SurfaceMesh;
    use approx::assert_relative_eq;

    fn flat_ds(generations: usize) -> DiscreteSurface {
        let s = SurfaceDescription::flat_patch();
        let mesh = SurfaceMesh::from_surface(&s).refine_uniform(generations, &s).unwrap();
        DiscreteSurface::build(Arc::new(mesh), Arc::new(s), 1).unwrap()
    }

    #[test]
    fn dof_counts() {
        let ds = flat_ds(0);
        let s1 = build_space(ds.mesh(), 1, ConstraintMode::Dirichlet);
        assert_eq!(s1.num_dofs, 0);
        // Nine degree-2 nodes, only the diagonal midpoint is interior.
        let s2 = build_space(ds.mesh(), 2, ConstraintMode::Dirichlet);
        assert_eq!(s2.num_dofs, 1);

        let sp = SurfaceDescription::sphere(1.0).unwrap();
        let mesh = SurfaceMesh::from_surface(&sp);
        let s = build_space(&mesh, 1, ConstraintMode::MeanZero);
        assert_eq!(s.num_dofs, 6);
    }

    #[test]
    fn local_stiffness_p1_on_reference_triangle() {
        let verts = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ];
        let surface = SurfaceDescription::polyhedral(verts, vec![[0, 1, 2]]).unwrap();
        let mesh = SurfaceMesh::from_surface(&surface);
        let ds = DiscreteSurface::build(Arc::new(mesh), Arc::new(surface), 1).unwrap();
        let space = build_space(ds.mesh(), 1, ConstraintMode::MeanZero);
        let sys = assemble(&ds, &space, &ProblemData::unit_load()).unwrap();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                let mut v = 0.0;
                for idx in sys.matrix.row_ptr[i]..sys.matrix.row_ptr[i + 1] {
                    if sys.matrix.cols[idx] == j {
                        v = sys.matrix.vals[idx];
                    }
                }
                assert!((v - expect[i][j]).abs() < 1e-12, "A[{i}][{j}] = {v}");
            }
        }
    }

    #[test]
    fn stiffness_symmetric_with_constant_kernel() {
        let sp = SurfaceDescription::sphere(1.0).unwrap();
        let mesh = SurfaceMesh::from_surface(&sp).refine_uniform(2, &sp).unwrap();
        let ds = DiscreteSurface::build(Arc::new(mesh), Arc::new(sp), 2).unwrap();
        let space = build_space(ds.mesh(), 2, ConstraintMode::MeanZero);
        let sys = assemble(&ds, &space, &ProblemData::sphere_harmonic()).unwrap();
        assert!(sys.matrix.symmetry_defect() < 1e-12);
        // Constants in the kernel: A · 1 = 0.
        let ones = vec![1.0; sys.matrix.nrows];
        let mut out = vec![0.0; sys.matrix.nrows];
        sys.matrix.matvec(&ones, &mut out);
        let scale = sys.matrix.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for v in &out {
            assert!(v.abs() < 1e-10 * scale);
        }
        // Compatibility: Σ b_i = ∫ f = 0.
        let total: f64 = sys.rhs.iter().sum();
        assert!(total.abs() < 1e-10);
    }

    #[test]
    fn trivial_solves() {
        let mut trip = vec![(0, 0, 2.0), (1, 1, 3.0)];
        let a = Csr::from_triplets(2, &mut trip);
        let sys = SparseSystem {
            matrix: a,
            rhs: vec![0.0, 0.0],
            constraint: Constraint::Dirichlet { values: vec![0.0, 0.0], flags: vec![false, false] },
        };
        let sol = solve(&sys, 1e-12).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.coeffs, vec![0.0, 0.0]);

        let mut trip = vec![(0, 0, 4.0)];
        let a = Csr::from_triplets(1, &mut trip);
        let sys = SparseSystem {
            matrix: a,
            rhs: vec![2.0],
            constraint: Constraint::Dirichlet { values: vec![0.0], flags: vec![false] },
        };
        let sol = solve(&sys, 1e-12).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_relative_eq!(sol.coeffs[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn galerkin_residual_below_tolerance() {
        let sp = SurfaceDescription::sphere(1.0).unwrap();
        let mesh = SurfaceMesh::from_surface(&sp).refine_uniform(3, &sp).unwrap();
        let ds = DiscreteSurface::build(Arc::new(mesh), Arc::new(sp), 1).unwrap();
        let space = build_space(ds.mesh(), 1, ConstraintMode::MeanZero);
        let data = ProblemData::sphere_harmonic();
        let sys = assemble(&ds, &space, &data).unwrap();
        let sol = solve(&sys, 1e-10).unwrap();
        let mut au = vec![0.0; sys.matrix.nrows];
        sys.matrix.matvec(&sol.coeffs, &mut au);
        let bscale = sys.rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..au.len() {
            assert!((au[i] - sys.rhs[i]).abs() < 1e-8 * bscale.max(1.0));
        }
    }

    #[test]
    fn lifted_error_zero_for_reproduced_polynomial() {
        let ds = flat_ds(2);
        let space = build_space(ds.mesh(), 2, ConstraintMode::Dirichlet);
        let u = |p: Point| 0.25 * p.x * p.x + 0.5 * p.y - 0.1 * p.x * p.y;
        let grad = |p: Point| Point::new(0.5 * p.x - 0.1 * p.y, 0.5 - 0.1 * p.x, 0.0);
        let mut coeffs = vec![0.0; space.node_map.num_nodes];
        for gid in 0..space.node_map.num_nodes {
            let (t, local) = space.node_map.owner[gid];
            let e = ds.mesh().element(t);
            let r = e.local_to_macro(space.basis.nodes[local], 2);
            let (p, _) = ds.surface().chart_eval(e.macro_id(), r).unwrap();
            coeffs[gid] = u(p);
        }
        let sol = FemSolution { coeffs, iterations: 0, residual: 0.0 };
        let data = ProblemData {
            f: Arc::new(|_| 0.0),
            exact: Some(ExactSolution { u: Arc::new(u), grad: Arc::new(grad) }),
        };
        let err = lifted_h1_error(&sol, &space, &ds, &data).unwrap();
        assert!(err < 1e-12, "polynomial not reproduced: {err}");
    }

    #[test]
    fn lifted_error_of_zero_solution_is_gradient_norm() {
        // U ≡ 0 against |∇u| = 1 on the unit square: error 1.
        let ds = flat_ds(2);
        let space = build_space(ds.mesh(), 1, ConstraintMode::Dirichlet);
        let sol = FemSolution {
            coeffs: vec![0.0; space.node_map.num_nodes],
            iterations: 0,
            residual: 0.0,
        };
        let data = ProblemData {
            f: Arc::new(|_| 0.0),
            exact: Some(ExactSolution {
                u: Arc::new(|p: Point| p.x),
                grad: Arc::new(|_| Point::new(1.0, 0.0, 0.0)),
            }),
        };
        let err = lifted_h1_error(&sol, &space, &ds, &data).unwrap();
        assert_relative_eq!(err, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn flat_poisson_h1_rate() {
        // H¹ error slope 1.0 ± 0.05 versus h under uniform refinement,
        // r = 1, for the manufactured sine solution.
        let s = SurfaceDescription::flat_patch();
        let data = ProblemData::flat_sine();
        let mut errors = Vec::new();
        let mut hs = Vec::new();
        for level in 2..=5 {
            let mesh = SurfaceMesh::from_surface(&s).refine_uniform(2 * level, &s).unwrap();
            let ds = DiscreteSurface::build(Arc::new(mesh), Arc::new(s.clone()), 1).unwrap();
            let space = build_space(ds.mesh(), 1, ConstraintMode::Dirichlet);
            let sys = assemble(&ds, &space, &data).unwrap();
            let sol = solve(&sys, 1e-12).unwrap();
            errors.push(lifted_h1_error(&sol, &space, &ds, &data).unwrap());
            hs.push(ds.mesh().element_size(0).unwrap());
        }
        let slope = crate::io::least_squares_slope(
            &hs.iter().map(|h| h.ln()).collect::<Vec<_>>(),
            &errors.iter().map(|e| e.ln()).collect::<Vec<_>>(),
        );
        assert!((slope - 1.0).abs() < 0.05, "H1 slope vs h: {slope}, errors {errors:?}");
    }
}

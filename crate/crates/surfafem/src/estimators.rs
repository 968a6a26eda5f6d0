//! A posteriori indicators.
//!
//! * `η_T` - residual PDE indicator: interior residual plus co-normal
//!   jumps, `η_T² = h_T² ‖F_Γ + Δ_Γ U‖²_{L₂(T)} + h_T ‖𝒥(U)‖²_{L₂(∂T)}`.
//! * `osc_T` - the residual mass not captured by polynomial projections.
//! * `λ_T`, `β_T` - sup-norm mismatch of the chart Jacobian and the chart
//!   values against their degree-k interpolants; `μ_T = β_T + λ_T²`.
//! * computable sufficient conditions for the geometric resolution
//!   assumptions, and distance-lift consistency diagnostics.
//!
//! Sup norms are approximated on a deterministic barycentric lattice of
//! order `max(4k, 12)` that includes the element vertices; doubling the
//! lattice density changes the values below the documented sampling
//! tolerance on smooth surfaces.

use crate::discrete::DiscreteSurface;
use crate::fem::{FemSolution, FemSpace, ProblemData};
use crate::mesh::SurfaceMesh;
use crate::quadrature::{segment_rule, triangle_lattice, triangle_rule};
use crate::{map_indexed, Error, Point, RefPoint, Result};
use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix3x2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Area-ratio bounds demanded of `q/q_Γ` and `q_d/q_Γ`.
pub const Q_RATIO_LOW: f64 = 0.5;
pub const Q_RATIO_HIGH: f64 = 2.0;

fn lattice_order(k: usize) -> usize {
    (4 * k).max(12)
}

/// Per-element geometric indicators.
#[derive(Debug, Clone)]
pub struct GeomIndicators {
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
}

impl GeomIndicators {
    pub fn lambda_max(&self) -> f64 {
        self.lambda.iter().fold(0.0f64, |m, &v| m.max(v))
    }
    pub fn beta_max(&self) -> f64 {
        self.beta.iter().fold(0.0f64, |m, &v| m.max(v))
    }
    pub fn mu_max(&self) -> f64 {
        self.mu.iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

/// λ, β, μ of a single element.
pub fn geometric_indicator_element(ds: &DiscreteSurface, t: usize) -> Result<(f64, f64, f64)> {
    let mesh = ds.mesh();
    let e = mesh.element(t);
    let verts = e.vertex_ids();
    let pts = [
        mesh.vertex(verts[0]),
        mesh.vertex(verts[1]),
        mesh.vertex(verts[2]),
    ];
    geometric_indicator_raw(
        ds.surface(),
        ds.geometry_basis(),
        e.macro_id(),
        &[e.ref_vertex(0), e.ref_vertex(1), e.ref_vertex(2)],
        &pts,
        lattice_order(ds.degree()),
    )
}

/// λ, β, μ from raw chart data: rebuilds the element's own interpolant
/// `X_T = I_k χ_T` from chart values at its Lagrange nodes and maximizes
/// the mismatch over the sampling lattice.
pub fn geometric_indicator_raw(
    surface: &crate::geometry::SurfaceDescription,
    basis: &crate::basis::LagrangeBasis,
    macro_id: usize,
    ref_verts: &[RefPoint; 3],
    verts: &[Point; 3],
    order: usize,
) -> Result<(f64, f64, f64)> {
    // Map element-local reference coordinates into the macro simplex.
    let a = Matrix2::from_columns(&[ref_verts[1] - ref_verts[0], ref_verts[2] - ref_verts[0]]);
    let to_macro = |p: RefPoint| ref_verts[0] + a * p;
    let mut coeffs = Vec::with_capacity(basis.len());
    for &node in &basis.nodes {
        let (p, _) = surface.chart_eval(macro_id, to_macro(node))?;
        coeffs.push(p);
    }
    // Pseudo-inverse of the affine vertex map normalizes the Jacobian
    // mismatch to the flat element, making λ dimensionless.
    let mut flat = Matrix3x2::zeros();
    flat.set_column(0, &(verts[1] - verts[0]));
    flat.set_column(1, &(verts[2] - verts[0]));
    let gram = flat.transpose() * flat;
    let pinv = gram
        .try_inverse()
        .ok_or(Error::DegenerateElement { element: macro_id, measure: gram.determinant() })?
        * flat.transpose();

    let mut beta = 0.0f64;
    let mut lambda = 0.0f64;
    for &p in &triangle_lattice(order) {
        let (chart, jac_macro) = surface.chart_eval(macro_id, to_macro(p))?;
        let chart_jac = jac_macro * a;
        let vals = basis.eval(p);
        let grads = basis.grad(p);
        let mut x = Point::zeros();
        let mut dx = Matrix3x2::zeros();
        for (i, c) in coeffs.iter().enumerate() {
            x += c * vals[i];
            for amb in 0..3 {
                dx[(amb, 0)] += c[amb] * grads[i].x;
                dx[(amb, 1)] += c[amb] * grads[i].y;
            }
        }
        beta = beta.max((chart - x).norm());
        let mismatch = (chart_jac - dx) * pinv;
        lambda = lambda.max(spectral_norm_3x3(&mismatch));
    }
    Ok((lambda, beta, beta + lambda * lambda))
}

fn spectral_norm_3x3(m: &Matrix3<f64>) -> f64 {
    let sym = m.transpose() * m;
    let eig = sym.symmetric_eigen();
    eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v)).max(0.0).sqrt()
}

/// λ_T, β_T, μ_T for every element.
pub fn geometric_indicators(ds: &DiscreteSurface) -> Result<GeomIndicators> {
    let results: Vec<Result<(f64, f64, f64)>> =
        map_indexed(ds.mesh().num_elements(), |t| geometric_indicator_element(ds, t));
    let mut lambda = Vec::with_capacity(results.len());
    let mut beta = Vec::with_capacity(results.len());
    let mut mu = Vec::with_capacity(results.len());
    for r in results {
        let (l, b, m) = r?;
        lambda.push(l);
        beta.push(b);
        mu.push(m);
    }
    Ok(GeomIndicators { lambda, beta, mu })
}

/// Basis value/derivative tables at the points of a rule, shared across
/// elements.
struct BasisTables {
    grads: Vec<Vec<RefPoint>>,
    hessians: Vec<Vec<Matrix2<f64>>>,
}

impl BasisTables {
    fn at(basis: &crate::basis::LagrangeBasis, rule: &crate::quadrature::QuadratureRule) -> Self {
        BasisTables {
            grads: rule.points.iter().map(|&p| basis.grad(p)).collect(),
            hessians: rule.points.iter().map(|&p| basis.hess(p)).collect(),
        }
    }
}

/// Interior residual `f q + div(q_Γ ∇Û g_Γ⁻¹)` at a reference point;
/// equals `q_Γ (F_Γ + Δ_Γ U)`.
fn scaled_residual(
    ds: &DiscreteSurface,
    tables: &BasisTables,
    qi: usize,
    local_coeffs: &[f64],
    data: &ProblemData,
    t: usize,
    x: RefPoint,
) -> Result<f64> {
    let (m, dm, _q) = ds.metric_derivatives(t, x);
    let grads = &tables.grads[qi];
    let hessians = &tables.hessians[qi];
    let mut du = Vector2::zeros();
    let mut d2u = Matrix2::zeros();
    for (i, &c) in local_coeffs.iter().enumerate() {
        du += grads[i] * c;
        d2u += hessians[i] * c;
    }
    // div(∇Û M) = Σ_c Σ_i ∂_c∂_i Û M_ic + ∂_i Û ∂_c M_ic.
    let mut div = 0.0;
    for c in 0..2 {
        for i in 0..2 {
            div += d2u[(c, i)] * m[(i, c)] + du[i] * dm[c][(i, c)];
        }
    }
    let (chart_point, chart_jac) = ds.chart(t, x)?;
    let gq = chart_jac.transpose() * chart_jac;
    let q_exact = gq.determinant().max(0.0).sqrt();
    Ok((data.f)(chart_point) * q_exact + div)
}

/// Co-normal derivative `∇_Γ U · n` of one side of a face at face
/// parameter `tpar` (stored face orientation).
fn conormal_derivative(
    ds: &DiscreteSurface,
    space: &FemSpace,
    sol: &FemSolution,
    t: usize,
    local_edge: usize,
    face_verts: [usize; 2],
    tpar: f64,
) -> Result<(f64, f64)> {
    let side = ds.face_side_at(t, local_edge, face_verts, tpar)?;
    let grads = space.basis.grad(side.xref);
    let nodes = &space.node_map.element_nodes[t];
    let mut du = Vector2::zeros();
    for (i, g) in grads.iter().enumerate() {
        du += g * sol.coeffs[nodes[i]];
    }
    // ∇_Γ U = ∇Û g⁻¹ Gᵀ; its co-normal component via the cached n.
    let surf_grad = side.g_cols * (side.ginv * du);
    Ok((Point::from(surf_grad).dot(&side.conormal), side.r_arc * side.ref_len))
}

/// Residual indicators `η_T` for all elements.
pub fn residual_indicators(
    sol: &FemSolution,
    space: &FemSpace,
    ds: &DiscreteSurface,
    data: &ProblemData,
) -> Result<Vec<f64>> {
    let mesh = ds.mesh();
    let volume_rule = triangle_rule(2 * space.r + 2 * ds.degree());
    let face_rule = segment_rule(2 * space.r + ds.degree());
    let tables = BasisTables::at(&space.basis, &volume_rule);

    // Interior parts.
    let interior: Vec<Result<f64>> = map_indexed(mesh.num_elements(), |t| {
        let local = sol.local_coeffs(space, t);
        let mut acc = 0.0;
        for (qi, (&x, &w)) in volume_rule.points.iter().zip(&volume_rule.weights).enumerate() {
            let rs = scaled_residual(ds, &tables, qi, &local, data, t, x)?;
            let gp = ds.geometry_at(t, x, w, false)?;
            // ∫ (F_Γ + Δ_Γ U)² q_Γ = ∫ rs² / q_Γ.
            acc += w * rs * rs / gp.q;
        }
        Ok(acc)
    });

    // Jump mass per interior face, in the face's own parametrization.
    let faces = mesh.faces();
    let jumps: Vec<Result<f64>> = map_indexed(faces.len(), |fi| {
        let f = &faces[fi];
        if f.is_boundary() {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for (&p, &w) in face_rule.points.iter().zip(&face_rule.weights) {
            let tpar = p.x;
            let mut jump = 0.0;
            let mut rlen = 0.0;
            for &(t, local) in &f.sides {
                let (dn, r) = conormal_derivative(ds, space, sol, t, local, f.verts, tpar)?;
                jump += dn;
                rlen = r;
            }
            acc += w * jump * jump * rlen;
        }
        Ok(acc)
    });
    let jumps: Vec<f64> = jumps.into_iter().collect::<Result<_>>()?;

    let mut eta = Vec::with_capacity(mesh.num_elements());
    for (t, it) in interior.into_iter().enumerate() {
        let h = mesh.element_size(t)?;
        let mut total = h * h * it?;
        for local in 0..3 {
            total += h * jumps[mesh.face_index(t, local)];
        }
        eta.push(total.sqrt());
    }
    Ok(eta)
}

/// Best-L² projection residual of samples on the reference triangle:
/// returns `Σ w_i (f_i - Πf_i)²` with `Π` onto polynomials of degree ≤ m.
fn triangle_projection_residual(
    rule: &crate::quadrature::QuadratureRule,
    samples: &[f64],
    m: usize,
) -> f64 {
    let monomials: Vec<(i32, i32)> = (0..=m as i32)
        .flat_map(|a| (0..=(m as i32 - a)).map(move |b| (a, b)))
        .collect();
    let nb = monomials.len();
    // Exact monomial Gram on the triangle: ∫ x^a y^b = a! b! / (a+b+2)!.
    let fact = |n: i32| (1..=n as i64).product::<i64>() as f64;
    let mut gram = DMatrix::zeros(nb, nb);
    for i in 0..nb {
        for j in 0..nb {
            let (a, b) = (monomials[i].0 + monomials[j].0, monomials[i].1 + monomials[j].1);
            gram[(i, j)] = fact(a) * fact(b) / fact(a + b + 2);
        }
    }
    let mut rhs = DVector::zeros(nb);
    for (qi, (&x, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        for (bi, &(a, b)) in monomials.iter().enumerate() {
            rhs[bi] += w * samples[qi] * x.x.powi(a) * x.y.powi(b);
        }
    }
    let coeff = gram
        .lu()
        .solve(&rhs)
        .expect("projection Gram matrix is nonsingular");
    let mut acc = 0.0;
    for (qi, (&x, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        let mut p = 0.0;
        for (bi, &(a, b)) in monomials.iter().enumerate() {
            p += coeff[bi] * x.x.powi(a) * x.y.powi(b);
        }
        let r = samples[qi] - p;
        acc += w * r * r;
    }
    acc
}

/// Same on `[0, 1]` with weights from a segment rule.
fn segment_projection_residual(
    rule: &crate::quadrature::QuadratureRule,
    samples: &[f64],
    m: usize,
) -> f64 {
    let nb = m + 1;
    let mut gram = DMatrix::zeros(nb, nb);
    for i in 0..nb {
        for j in 0..nb {
            gram[(i, j)] = 1.0 / (i + j + 1) as f64;
        }
    }
    let mut rhs = DVector::zeros(nb);
    for (qi, (&x, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        for bi in 0..nb {
            rhs[bi] += w * samples[qi] * x.x.powi(bi as i32);
        }
    }
    let coeff = gram
        .lu()
        .solve(&rhs)
        .expect("projection Gram matrix is nonsingular");
    let mut acc = 0.0;
    for (qi, (&x, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        let mut p = 0.0;
        for bi in 0..nb {
            p += coeff[bi] * x.x.powi(bi as i32);
        }
        let r = samples[qi] - p;
        acc += w * r * r;
    }
    acc
}

/// Oscillation indicators with projection degrees `m` (interior, ≥ 1) and
/// `m'` (faces, ≥ 0).
pub fn oscillation_indicators(
    sol: &FemSolution,
    space: &FemSpace,
    ds: &DiscreteSurface,
    data: &ProblemData,
    m: usize,
    m_face: usize,
) -> Result<Vec<f64>> {
    assert!(m >= 1);
    let mesh = ds.mesh();
    let k = ds.degree();
    // Enough quadrature to resolve both the residual and the projection.
    let volume_rule = triangle_rule((2 * space.r + 2 * k).max(2 * m + 2));
    let face_rule = segment_rule((2 * space.r + k).max(2 * m_face + 2));
    let tables = BasisTables::at(&space.basis, &volume_rule);

    let per_element: Vec<Result<f64>> = map_indexed(mesh.num_elements(), |t| {
        let h = mesh.element_size(t)?;
        let local = sol.local_coeffs(space, t);
        // Interior: h² ‖(id - Π_m)(f q + div(q_Γ ∇Û g_Γ⁻¹))‖²_{L₂(T̂)}.
        let mut samples = Vec::with_capacity(volume_rule.len());
        for (qi, &x) in volume_rule.points.iter().enumerate() {
            samples.push(scaled_residual(ds, &tables, qi, &local, data, t, x)?);
        }
        let mut osc2 = h * h * triangle_projection_residual(&volume_rule, &samples, m);

        // Faces: h ‖(id - Π_m')(Σ_sides q_Γ ∇V g_Γ⁻¹ n̂)‖²_{L₂(∂T̂)} in the
        // element's own edge parametrization.
        for local_edge in 0..3 {
            let fi = mesh.face_index(t, local_edge);
            let f = &mesh.faces()[fi];
            if f.is_boundary() {
                continue;
            }
            let mut samples = Vec::with_capacity(face_rule.len());
            let mut ref_len = 1.0;
            for &p in &face_rule.points {
                // Own parametrization tau along the local edge; convert to
                // the face's stored orientation for the neighbor.
                let tau = p.x;
                let own = ds.face_side_at(t, local_edge, f.verts, face_to_face(t, local_edge, f, tau, mesh))?;
                ref_len = own.ref_len;
                let mut total = side_flux(space, sol, ds, &own)?;
                for &(tn, ln) in &f.sides {
                    if tn == t && ln == local_edge {
                        continue;
                    }
                    let other =
                        ds.face_side_at(tn, ln, f.verts, face_to_face(t, local_edge, f, tau, mesh))?;
                    total += side_flux(space, sol, ds, &other)?;
                }
                samples.push(total);
            }
            osc2 += h * segment_projection_residual(&face_rule, &samples, m_face) * ref_len;
        }
        Ok(osc2.max(0.0).sqrt())
    });
    per_element.into_iter().collect()
}

/// Convert a parameter along the element's own edge traversal into the
/// face's stored orientation.
fn face_to_face(
    t: usize,
    local_edge: usize,
    f: &crate::mesh::FaceData,
    tau: f64,
    mesh: &SurfaceMesh,
) -> f64 {
    let fv = mesh.local_face_vertices(t, local_edge);
    if fv == f.verts {
        tau
    } else {
        1.0 - tau
    }
}

/// `q_Γ ∇Û g_Γ⁻¹ · n̂` of one side at a matched face point.
fn side_flux(
    space: &FemSpace,
    sol: &FemSolution,
    _ds: &DiscreteSurface,
    side: &crate::discrete::FaceSide,
) -> Result<f64> {
    let grads = space.basis.grad(side.xref);
    let nodes = &space.node_map.element_nodes[side.element];
    let mut du = Vector2::zeros();
    for (i, g) in grads.iter().enumerate() {
        du += g * sol.coeffs[nodes[i]];
    }
    let flux = side.ginv * du * side.q;
    Ok(flux.dot(&side.nhat))
}

/// Bundled per-element indicators with the global reductions: `η` and
/// `osc` reduce in `ℓ₂`, the geometric indicators by maximum.
#[derive(Debug, Clone)]
pub struct IndicatorField {
    pub eta: Vec<f64>,
    pub osc: Vec<f64>,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
}

impl IndicatorField {
    pub fn eta_total(&self) -> f64 {
        self.eta.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
    pub fn osc_total(&self) -> f64 {
        self.osc.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
    pub fn lambda_total(&self) -> f64 {
        self.lambda.iter().fold(0.0f64, |m, &v| m.max(v))
    }
    pub fn beta_total(&self) -> f64 {
        self.beta.iter().fold(0.0f64, |m, &v| m.max(v))
    }
    pub fn mu_total(&self) -> f64 {
        self.mu.iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

/// All indicators in one pass.
pub fn indicator_field(
    sol: &FemSolution,
    space: &FemSpace,
    ds: &DiscreteSurface,
    data: &ProblemData,
    m: usize,
    m_face: usize,
) -> Result<IndicatorField> {
    let eta = residual_indicators(sol, space, ds, data)?;
    let osc = oscillation_indicators(sol, space, ds, data, m, m_face)?;
    let geo = geometric_indicators(ds)?;
    Ok(IndicatorField {
        eta,
        osc,
        lambda: geo.lambda,
        beta: geo.beta,
        mu: geo.mu,
    })
}

/// Distance-lift consistency of one element: the sup over the sampling
/// lattice of `‖E_Γ^d‖`, `‖ν - ν_Γ‖` and `|1 - q_Γ/q_d|`, where
/// `E_Γ^d = (q_Γ/q_d) A_γ (I - dW) A_Γ (I - dW) A_γ - A_γ`.
pub fn consistency_diagnostics(ds: &DiscreteSurface, t: usize) -> Result<(f64, f64, f64)> {
    if !ds.surface().has_distance_oracle() {
        return Err(Error::MissingOracle);
    }
    let mut e_norm = 0.0f64;
    let mut nu_gap = 0.0f64;
    let mut q_gap = 0.0f64;
    for &p in &triangle_lattice(lattice_order(ds.degree())) {
        let gp = ds.geometry_at(t, p, 0.0, true)?;
        let dist = gp.dist.expect("oracle queried");
        let nu = dist.grad;
        let a_exact = Matrix3::identity() - nu * nu.transpose();
        let a_disc = Matrix3::identity() - gp.normal * gp.normal.transpose();
        let damp = Matrix3::identity() - dist.hess * dist.d;
        let q_ratio = gp.q / gp.q_dist.expect("oracle queried");
        let e = a_exact * damp * a_disc * damp * a_exact * q_ratio - a_exact;
        e_norm = e_norm.max(spectral_norm_3x3(&e));
        nu_gap = nu_gap.max((nu - gp.normal).norm());
        q_gap = q_gap.max((1.0 - q_ratio).abs());
    }
    Ok((e_norm, nu_gap, q_gap))
}

/// Assumption check result for one element.
#[derive(Debug, Clone)]
pub struct ElementCheck {
    pub element: usize,
    pub h: f64,
    pub beta: f64,
    /// `½ K⁻¹ - β_T`; infinite for flat surfaces.
    pub tube_margin: f64,
    /// `h_T L⁻¹ c_T̂ - 3 β_T`; infinite when the patch has no boundary.
    pub mismatch_margin: f64,
    /// Estimated per-patch bi-Lipschitz constant.
    pub lipschitz: f64,
    /// Distance from the reference element to the flattened patch
    /// boundary.
    pub separation: f64,
    pub q_ratio_min: f64,
    pub q_ratio_max: f64,
    pub qd_ratio_min: f64,
    pub qd_ratio_max: f64,
    /// Sup of `‖ν - ν_Γ‖` on the lattice; NaN without an oracle.
    pub normal_mismatch: f64,
    pub patch_convex: bool,
}

impl ElementCheck {
    pub fn tube_pass(&self) -> bool {
        self.tube_margin >= 0.0
    }
    pub fn mismatch_pass(&self) -> bool {
        self.mismatch_margin >= 0.0
    }
    pub fn q_ratio_pass(&self) -> bool {
        self.q_ratio_min >= Q_RATIO_LOW
            && self.q_ratio_max <= Q_RATIO_HIGH
            && self.qd_ratio_min >= Q_RATIO_LOW
            && self.qd_ratio_max <= Q_RATIO_HIGH
    }
}

#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub elements: Vec<ElementCheck>,
    pub curvature_bound: f64,
    /// Global verdicts are conjunctions over the elements.
    pub tube_pass: bool,
    pub mismatch_pass: bool,
    pub q_ratio_pass: bool,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.tube_pass && self.mismatch_pass && self.q_ratio_pass
    }

    /// Names of the failing checks, by what they verify.
    pub fn failing(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.tube_pass {
            out.push("tube-condition (beta <= K^-1 / 2)");
        }
        if !self.mismatch_pass {
            out.push("projection-mismatch (3 beta_T <= h_T c_T / L)");
        }
        if !self.q_ratio_pass {
            out.push("area-ratio bounds (q/q_G, q_d/q_G in [1/2, 2])");
        }
        out
    }
}

/// Run every computable geometric-resolution check. The per-patch
/// Lipschitz constant is estimated from chart Jacobians on the flattened
/// patch plus seeded random pair sampling, and is approximate by nature.
pub fn check_assumptions(ds: &DiscreteSurface, seed: u64) -> Result<AssumptionReport> {
    let mesh = ds.mesh();
    let surface = ds.surface();
    let geo = geometric_indicators(ds)?;
    let kbound = surface.curvature_bound();
    let with_oracle = surface.has_distance_oracle();
    let rule = ds.volume_rule(1);
    let order = lattice_order(ds.degree());

    let checks: Vec<Result<ElementCheck>> = map_indexed(mesh.num_elements(), |t| {
        let h = mesh.element_size(t)?;
        let beta = geo.beta[t];
        let tube_margin = if kbound > 0.0 {
            0.5 / kbound - beta
        } else {
            f64::INFINITY
        };

        let flat = mesh.flatten_patch(t)?;
        let separation = flat.separation().unwrap_or(f64::INFINITY);
        let patch_convex = flat.is_convex();
        let lipschitz = estimate_patch_lipschitz(ds, &flat, h, seed.wrapping_add(t as u64))?;
        let mismatch_margin = if separation.is_finite() {
            h * separation / lipschitz - 3.0 * beta
        } else {
            f64::INFINITY
        };

        let mut q_ratio_min = f64::INFINITY;
        let mut q_ratio_max = f64::NEG_INFINITY;
        let mut qd_ratio_min = f64::INFINITY;
        let mut qd_ratio_max = f64::NEG_INFINITY;
        let cache = ds.geometry_cache(t, &rule)?;
        for gp in &cache.points {
            let r = gp.q_exact / gp.q;
            q_ratio_min = q_ratio_min.min(r);
            q_ratio_max = q_ratio_max.max(r);
            if let Some(qd) = gp.q_dist {
                let r = qd / gp.q;
                qd_ratio_min = qd_ratio_min.min(r);
                qd_ratio_max = qd_ratio_max.max(r);
            }
        }
        if !with_oracle {
            qd_ratio_min = 1.0;
            qd_ratio_max = 1.0;
        }

        let normal_mismatch = if with_oracle {
            let mut gap = 0.0f64;
            for &p in &triangle_lattice(order) {
                let gp = ds.geometry_at(t, p, 0.0, true)?;
                let nu = gp.dist.expect("oracle queried").grad;
                gap = gap.max((nu - gp.normal).norm());
            }
            gap
        } else {
            f64::NAN
        };

        Ok(ElementCheck {
            element: t,
            h,
            beta,
            tube_margin,
            mismatch_margin,
            lipschitz,
            separation,
            q_ratio_min,
            q_ratio_max,
            qd_ratio_min,
            qd_ratio_max,
            normal_mismatch,
            patch_convex,
        })
    });
    let elements: Vec<ElementCheck> = checks.into_iter().collect::<Result<_>>()?;
    let tube_pass = elements.iter().all(|c| c.tube_pass());
    let mismatch_pass = elements.iter().all(|c| c.mismatch_pass());
    let q_ratio_pass = elements.iter().all(|c| c.q_ratio_pass());
    Ok(AssumptionReport {
        elements,
        curvature_bound: kbound,
        tube_pass,
        mismatch_pass,
        q_ratio_pass,
    })
}

/// Estimate the patch-local bi-Lipschitz constant `L` of the chart over
/// the flattened patch, scaled by `h_T`: Jacobian singular values on a
/// lattice give the local bound, random point pairs refine it.
pub fn estimate_patch_lipschitz(
    ds: &DiscreteSurface,
    flat: &crate::mesh::FlatPatch,
    h: f64,
    seed: u64,
) -> Result<f64> {
    if !flat.complete {
        return Ok(f64::INFINITY);
    }
    let mut l = 1.0f64;
    let lattice = triangle_lattice(6);
    // Chart Jacobian with respect to the flattened plane coordinates.
    let mut frames = Vec::with_capacity(flat.elements.len());
    for &(e, tri) in &flat.elements {
        let df = Matrix2::from_columns(&[tri[1] - tri[0], tri[2] - tri[0]]);
        let dfinv = df
            .try_inverse()
            .ok_or(Error::DegenerateElement { element: e, measure: df.determinant() })?;
        for &p in &lattice {
            let (_, jac) = ds.chart(e, p)?;
            let plane_jac = jac * dfinv;
            let svd = plane_jac.svd(false, false);
            let smax = svd.singular_values[0];
            let smin = svd.singular_values[1];
            if smax > 0.0 {
                l = l.max(smax / h);
            }
            if smin > 0.0 {
                l = l.max(h / smin);
            }
        }
        frames.push((e, tri, df));
    }
    // Deterministic corner-pair sweep: chord-shrinkage extremes sit at
    // patch corners.
    let mut corners: Vec<(Point, Vector2<f64>)> = Vec::new();
    for &(e, tri) in &flat.elements {
        for (i, &node) in [RefPoint::new(0.0, 0.0), RefPoint::new(1.0, 0.0), RefPoint::new(0.0, 1.0)]
            .iter()
            .enumerate()
        {
            let (x, _) = ds.chart(e, node)?;
            corners.push((x, tri[i]));
        }
    }
    // Only pairs whose plane segment stays inside the patch constrain the
    // bi-Lipschitz constant; chords across unfolding cuts do not.
    let segment_inside = |a: Vector2<f64>, b: Vector2<f64>| -> bool {
        (1..8).all(|i| flat.contains(a + (b - a) * (i as f64 / 8.0)))
    };
    for i in 0..corners.len() {
        for j in (i + 1)..corners.len() {
            let dplane = (corners[i].1 - corners[j].1).norm();
            if dplane < 1e-9 || !segment_inside(corners[i].1, corners[j].1) {
                continue;
            }
            let dsurf = (corners[i].0 - corners[j].0).norm();
            if dsurf < 1e-14 {
                continue;
            }
            let ratio = dsurf / (h * dplane);
            l = l.max(ratio).max(1.0 / ratio);
        }
    }

    // Random pair sampling across the patch interiors.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let npairs = 512;
    for _ in 0..npairs {
        let pick = |rng: &mut ChaCha8Rng| {
            let idx = rng.random_range(0..frames.len());
            let (e, tri, _) = frames[idx];
            let mut a: f64 = rng.random_range(0.0..1.0);
            let mut b: f64 = rng.random_range(0.0..1.0);
            if a + b > 1.0 {
                a = 1.0 - a;
                b = 1.0 - b;
            }
            let plane = tri[0] + (tri[1] - tri[0]) * a + (tri[2] - tri[0]) * b;
            (e, RefPoint::new(a, b), plane)
        };
        let (e1, r1, p1) = pick(&mut rng);
        let (e2, r2, p2) = pick(&mut rng);
        let dplane = (p1 - p2).norm();
        if dplane < 1e-9 || !segment_inside(p1, p2) {
            continue;
        }
        let (x1, _) = ds.chart(e1, r1)?;
        let (x2, _) = ds.chart(e2, r2)?;
        let dsurf = (x1 - x2).norm();
        if dsurf < 1e-14 {
            continue;
        }
        let ratio = dsurf / (h * dplane);
        l = l.max(ratio).max(1.0 / ratio);
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, build_space, solve, ConstraintMode};
    use crate::geometry::SurfaceDescription;
    use crate::mesh::SurfaceMesh;
    use std::sync::Arc;

    fn flat_ds(generations: usize, k: usize) -> DiscreteSurface {
        let s = SurfaceDescription::flat_patch();
        let mesh = SurfaceMesh::from_surface(&s).refine_uniform(generations, &s).unwrap();
        DiscreteSurface::build(Arc::new(mesh), Arc::new(s), k).unwrap()
    }

    fn interpolate(space: &FemSpace, ds: &DiscreteSurface, u: impl Fn(Point) -> f64) -> FemSolution {
        let mut coeffs = vec![0.0; space.node_map.num_nodes];
        for gid in 0..space.node_map.num_nodes {
            let (t, local) = space.node_map.owner[gid];
            let e = ds.mesh().element(t);
            let r = e.local_to_macro(space.basis.nodes[local], 2);
            let (p, _) = ds.surface().chart_eval(e.macro_id(), r).unwrap();
            coeffs[gid] = u(p);
        }
        FemSolution { coeffs, iterations: 0, residual: 0.0 }
    }

    #[test]
    fn residual_zero_for_consistent_discrete_solution() {
        // U = interpolant of x² + y² with F = -ΔU = -4: interior residual
        // and jumps vanish.
        let ds = flat_ds(2, 1);
        let space = build_space(ds.mesh(), 2, ConstraintMode::Dirichlet);
        let sol = interpolate(&space, &ds, |p| p.x * p.x + p.y * p.y);
        let data = ProblemData { f: Arc::new(|_| -4.0), exact: None };
        let eta = residual_indicators(&sol, &space, &ds, &data).unwrap();
        for (t, e) in eta.iter().enumerate() {
            assert!(*e < 1e-11, "eta[{t}] = {e}");
        }
    }

    #[test]
    fn residual_constant_load_zero_solution() {
        // U = 0, F = 1: η_T² = h_T² |T| exactly, no jumps.
        let ds = flat_ds(2, 1);
        let space = build_space(ds.mesh(), 1, ConstraintMode::Dirichlet);
        let sol = FemSolution {
            coeffs: vec![0.0; space.node_map.num_nodes],
            iterations: 0,
            residual: 0.0,
        };
        let data = ProblemData { f: Arc::new(|_| 1.0), exact: None };
        let eta = residual_indicators(&sol, &space, &ds, &data).unwrap();
        for t in 0..ds.mesh().num_elements() {
            let h = ds.mesh().element_size(t).unwrap();
            let area = ds.mesh().element_measure(t);
            let expect = (h * h * area).sqrt();
            assert!((eta[t] - expect).abs() < 1e-12, "eta[{t}] = {} vs {expect}", eta[t]);
        }
    }

    #[test]
    fn residual_hat_function_jump_hand_value() {
        // Two-triangle square, U the hat at corner (1,0), F = 0: the only
        // contribution is the diagonal jump. By hand: ∇U = (1,-1) on the
        // supporting triangle, co-normal (-1,1)/√2, jump -√2, face mass
        // ∫𝒥² = 2√2, and η² = h · 2√2 = 2 for both adjacent elements.
        let ds = flat_ds(0, 1);
        let space = build_space(ds.mesh(), 1, ConstraintMode::Dirichlet);
        let sol = interpolate(&space, &ds, |p| {
            if (p.x - 1.0).abs() < 1e-12 && p.y.abs() < 1e-12 {
                1.0
            } else {
                0.0
            }
        });
        let data = ProblemData { f: Arc::new(|_| 0.0), exact: None };
        let eta = residual_indicators(&sol, &space, &ds, &data).unwrap();
        for t in 0..2 {
            assert!(
                (eta[t] * eta[t] - 2.0).abs() < 1e-12,
                "eta²[{t}] = {}",
                eta[t] * eta[t]
            );
        }
    }

    #[test]
    fn oscillation_vanishes_for_polynomial_data() {
        // Constant f, linear U on a flat mesh: the interior integrand is
        // constant and any m ≥ 1 reproduces it; fluxes are constant along
        // edges so m' ≥ 0 reproduces them too.
        let ds = flat_ds(2, 1);
        let space = build_space(ds.mesh(), 1, ConstraintMode::Dirichlet);
        let sol = interpolate(&space, &ds, |p| 0.3 * p.x - 0.2 * p.y + 0.05);
        let data = ProblemData { f: Arc::new(|_| 2.5), exact: None };
        let osc = oscillation_indicators(&sol, &space, &ds, &data, 1, 0).unwrap();
        for v in &osc {
            assert!(*v < 1e-12, "osc = {v}");
        }
    }

    #[test]
    fn oscillation_matches_closed_form_projection() {
        // f(x̂) = x̂₁² on the unit reference triangle, U = 0, m = 1:
        // osc² = h² ‖x² - Π₁ x²‖²_{L₂(T̂)}, computed independently from the
        // exact monomial Gram system.
        let verts = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ];
        let surface = SurfaceDescription::polyhedral(verts, vec![[0, 1, 2]]).unwrap();
        let mesh = SurfaceMesh::from_surface(&surface);
        let ds = DiscreteSurface::build(Arc::new(mesh), Arc::new(surface), 1).unwrap();
        let space = build_space(ds.mesh(), 1, ConstraintMode::Dirichlet);
        let sol = FemSolution {
            coeffs: vec![0.0; space.node_map.num_nodes],
            iterations: 0,
            residual: 0.0,
        };
        // The identity chart makes x̂ the physical coordinate, q = 1.
        let data = ProblemData { f: Arc::new(|p: Point| p.x * p.x), exact: None };
        let osc = oscillation_indicators(&sol, &space, &ds, &data, 1, 0).unwrap();

        // Independent projection: minimize ‖x² - (a + bx + cy)‖² with the
        // exact rational moments of the unit triangle.
        let gram = nalgebra::Matrix3::new(
            1.0 / 2.0, 1.0 / 6.0, 1.0 / 6.0,
            1.0 / 6.0, 1.0 / 12.0, 1.0 / 24.0,
            1.0 / 6.0, 1.0 / 24.0, 1.0 / 12.0,
        );
        let rhs = nalgebra::Vector3::new(1.0 / 12.0, 1.0 / 20.0, 1.0 / 60.0);
        let coeff = gram.lu().solve(&rhs).unwrap();
        // ‖x² - p‖² = ∫x⁴ - coeffᵀ rhs by orthogonality of the residual.
        let norm2 = 1.0 / 30.0 - coeff.dot(&rhs);
        let h = ds.mesh().element_size(0).unwrap();
        let expect = (h * h * norm2).sqrt();
        assert!(
            (osc[0] - expect).abs() < 1e-12,
            "osc = {} vs closed form {expect}",
            osc[0]
        );
    }

    #[test]
    fn geometric_indicators_flat_zero_and_mu_arithmetic() {
        let ds = flat_ds(2, 2);
        let geo = geometric_indicators(&ds).unwrap();
        assert!(geo.lambda_max() < 1e-13);
        assert!(geo.beta_max() < 1e-13);
        assert!(geo.mu_max() < 1e-13);
        // μ = β + λ² arithmetic.
        let (lambda, beta) = (0.1f64, 0.01f64);
        assert!((beta + lambda * lambda - 0.02).abs() < 1e-15);
    }

    #[test]
    fn octahedron_beta_at_barycenter() {
        let surface = SurfaceDescription::sphere(1.0).unwrap();
        let mesh = SurfaceMesh::from_surface(&surface);
        let ds = DiscreteSurface::build(Arc::new(mesh), Arc::new(surface), 1).unwrap();
        let geo = geometric_indicators(&ds).unwrap();
        let expect = 1.0 - 1.0 / 3f64.sqrt();
        for t in 0..8 {
            assert!(
                (geo.beta[t] - expect).abs() < 1e-12,
                "beta[{t}] = {} vs {expect}",
                geo.beta[t]
            );
            assert!((geo.beta[t] - 0.42265).abs() < 1e-5);
            assert!((geo.mu[t] - (geo.beta[t] + geo.lambda[t] * geo.lambda[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn lattice_refinement_stability() {
        // Doubling the lattice density changes λ_T, β_T by under 1% on a
        // refined sphere.
        let surface = SurfaceDescription::sphere(1.0).unwrap();
        let mesh = SurfaceMesh::from_surface(&surface).refine_uniform(4, &surface).unwrap();
        let ds = DiscreteSurface::build(Arc::new(mesh), Arc::new(surface), 1).unwrap();
        let raw = |t: usize, order: usize| {
            let e = ds.mesh().element(t);
            let verts = e.vertex_ids();
            let pts = [
                ds.mesh().vertex(verts[0]),
                ds.mesh().vertex(verts[1]),
                ds.mesh().vertex(verts[2]),
            ];
            geometric_indicator_raw(
                ds.surface(),
                ds.geometry_basis(),
                e.macro_id(),
                &[e.ref_vertex(0), e.ref_vertex(1), e.ref_vertex(2)],
                &pts,
                order,
            )
            .unwrap()
        };
        for t in (0..ds.mesh().num_elements()).step_by(11) {
            let (l1, b1, _) = raw(t, 12);
            let (l2, b2, _) = raw(t, 24);
            assert!((l2 - l1).abs() <= 0.01 * l2.max(1e-15), "lambda {l1} vs {l2}");
            assert!((b2 - b1).abs() <= 0.01 * b2.max(1e-15), "beta {b1} vs {b2}");
        }
    }

    #[test]
    fn geometric_decay_rates_on_sphere() {
        // k = 1 uniform refinement: λ halves per refinement level (≈ h),
        // β and μ drop by 4 (≈ h²).
        let surface = SurfaceDescription::sphere(1.0).unwrap();
        let mut mesh = SurfaceMesh::from_surface(&surface).refine_uniform(4, &surface).unwrap();
        let mut lambdas = Vec::new();
        let mut mus = Vec::new();
        for _ in 0..3 {
            let ds =
                DiscreteSurface::build(Arc::new(mesh.clone()), Arc::new(surface.clone()), 1).unwrap();
            let geo = geometric_indicators(&ds).unwrap();
            lambdas.push(geo.lambda_max());
            mus.push(geo.mu_max());
            mesh = mesh.refine_uniform(2, &surface).unwrap();
        }
        for w in lambdas.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 2.0).abs() < 0.5, "lambda ratios: {lambdas:?}");
        }
        for w in mus.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 1.0, "mu ratios: {mus:?}");
        }
    }

    #[test]
    fn consistency_diagnostics_flat_zero() {
        let ds = flat_ds(2, 1);
        for t in 0..ds.mesh().num_elements() {
            let (e, nu, q) = consistency_diagnostics(&ds, t).unwrap();
            assert!(e < 1e-13, "E = {e}");
            assert!(nu < 1e-13);
            assert!(q < 1e-13);
        }
    }

    #[test]
    fn consistency_ratio_bounded_across_levels() {
        // ‖E‖ / (λ² + β) stays within a level-independent constant.
        let surface = SurfaceDescription::sphere(1.0).unwrap();
        let mut mesh = SurfaceMesh::from_surface(&surface).refine_uniform(2, &surface).unwrap();
        let mut ratios = Vec::new();
        for _ in 0..3 {
            let ds =
                DiscreteSurface::build(Arc::new(mesh.clone()), Arc::new(surface.clone()), 1).unwrap();
            let geo = geometric_indicators(&ds).unwrap();
            let mut worst: f64 = 0.0;
            for t in 0..ds.mesh().num_elements() {
                let (e, _, _) = consistency_diagnostics(&ds, t).unwrap();
                let denom = geo.lambda[t] * geo.lambda[t] + geo.beta[t];
                worst = worst.max(e / denom);
            }
            ratios.push(worst);
            mesh = mesh.refine_uniform(2, &surface).unwrap();
        }
        let spread = ratios.iter().fold(0.0f64, |m, &r| m.max(r))
            / ratios.iter().fold(f64::INFINITY, |m, &r| m.min(r));
        assert!(spread < 2.0, "ratio spread {spread}: {ratios:?}");
    }

    #[test]
    fn normal_mismatch_on_coarse_octahedron() {
        // The largest ν vs ν_Γ gap on a macro face sits at the vertices:
        // |e₁ - (1,1,1)/√3| = √(2 - 2/√3).
        let surface = SurfaceDescription::sphere(1.0).unwrap();
        let mesh = SurfaceMesh::from_surface(&surface);
        let ds = DiscreteSurface::build(Arc::new(mesh), Arc::new(surface), 1).unwrap();
        let report = check_assumptions(&ds, 7).unwrap();
        let expect = (2.0 - 2.0 / 3f64.sqrt()).sqrt();
        for c in &report.elements {
            assert!(
                (c.normal_mismatch - expect).abs() < 1e-10,
                "normal mismatch {} vs {expect}",
                c.normal_mismatch
            );
            assert!((c.normal_mismatch - 0.9194).abs() < 1e-4);
        }
    }

    #[test]
    fn assumptions_flat_all_pass_with_infinite_margins() {
        let ds = flat_ds(1, 1);
        let report = check_assumptions(&ds, 7).unwrap();
        assert!(report.all_pass());
        for c in &report.elements {
            assert!(c.tube_margin.is_infinite());
            assert!(c.beta < 1e-13);
        }
    }

    #[test]
    fn assumptions_sphere_tube_margin() {
        // β ≈ 0.42265 against ½ K⁻¹ = 0.5 leaves a margin near 0.077.
        let surface = SurfaceDescription::sphere(1.0).unwrap();
        let mesh = SurfaceMesh::from_surface(&surface);
        let ds = DiscreteSurface::build(Arc::new(mesh), Arc::new(surface), 1).unwrap();
        let report = check_assumptions(&ds, 7).unwrap();
        assert!(report.tube_pass);
        for c in &report.elements {
            assert!((c.tube_margin - 0.07735).abs() < 1e-4, "margin {}", c.tube_margin);
        }
    }

    #[test]
    fn assumptions_mismatch_improves_and_passes_under_refinement() {
        // β_T scales like h² while the bound scales like h, so the margin
        // grows monotonically; with the conservative patch-Lipschitz
        // estimate it turns positive at five uniform halvings.
        let surface = SurfaceDescription::sphere(1.0).unwrap();
        let mut margins = Vec::new();
        let mut mesh = SurfaceMesh::from_surface(&surface).refine_uniform(6, &surface).unwrap();
        for gens in [6usize, 8, 10] {
            let ds =
                DiscreteSurface::build(Arc::new(mesh.clone()), Arc::new(surface.clone()), 1).unwrap();
            let report = check_assumptions(&ds, 7).unwrap();
            let worst = report
                .elements
                .iter()
                .map(|c| c.mismatch_margin)
                .fold(f64::INFINITY, f64::min);
            margins.push(worst);
            assert!(report.q_ratio_pass, "area ratios out of range at {gens} generations");
            if gens == 10 {
                assert!(report.mismatch_pass, "failing: {:?}", report.failing());
            } else {
                mesh = mesh.refine_uniform(2, &surface).unwrap();
            }
        }
        assert!(
            margins.windows(2).all(|w| w[1] > w[0]),
            "margins not improving: {margins:?}"
        );
    }

    #[test]
    fn assumptions_fail_on_coarse_graph() {
        // The coarse graph macro mesh misses the tube condition: β exceeds
        // half the curvature radius.
        let surface = SurfaceDescription::graph(0.4).unwrap();
        let mesh = SurfaceMesh::from_surface(&surface);
        let ds = DiscreteSurface::build(Arc::new(mesh), Arc::new(surface), 1).unwrap();
        let report = check_assumptions(&ds, 7).unwrap();
        assert!(!report.tube_pass, "tube margin unexpectedly positive");
        assert!(report
            .failing()
            .iter()
            .any(|name| name.contains("tube-condition")));
    }

    #[test]
    fn bilipschitz_bound_verified_by_pair_sampling() {
        // Sampled chart pairs respect the estimated per-patch constant.
        let surface = SurfaceDescription::sphere(1.0).unwrap();
        let mesh = SurfaceMesh::from_surface(&surface).refine_uniform(2, &surface).unwrap();
        let ds = DiscreteSurface::build(Arc::new(mesh), Arc::new(surface), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in (0..ds.mesh().num_elements()).step_by(5) {
            let h = ds.mesh().element_size(t).unwrap();
            let flat = ds.mesh().flatten_patch(t).unwrap();
            let l = estimate_patch_lipschitz(&ds, &flat, h, 11).unwrap();
            assert!(l >= 1.0);
            for _ in 0..200 {
                let idx = rng.random_range(0..flat.elements.len());
                let (e, tri) = flat.elements[idx];
                let mut a: f64 = rng.random_range(0.0..1.0);
                let mut b: f64 = rng.random_range(0.0..1.0);
                if a + b > 1.0 {
                    a = 1.0 - a;
                    b = 1.0 - b;
                }
                let plane1 = tri[0] + (tri[1] - tri[0]) * a + (tri[2] - tri[0]) * b;
                let (x1, _) = ds.chart(e, RefPoint::new(a, b)).unwrap();
                let (e2, tri2) = flat.elements[rng.random_range(0..flat.elements.len())];
                let c: f64 = rng.random_range(0.0..0.5);
                let d: f64 = rng.random_range(0.0..0.5);
                let plane2 = tri2[0] + (tri2[1] - tri2[0]) * c + (tri2[2] - tri2[0]) * d;
                let (x2, _) = ds.chart(e2, RefPoint::new(c, d)).unwrap();
                let dp = (plane1 - plane2).norm();
                let inside = (1..8).all(|i| flat.contains(plane1 + (plane2 - plane1) * (i as f64 / 8.0)));
                if dp < 1e-9 || !inside {
                    continue;
                }
                let dx = (x1 - x2).norm();
                assert!(dx <= l * h * dp * 1.05, "upper bound violated: {dx} vs {}", l * h * dp);
                assert!(dx >= h * dp / l / 1.05, "lower bound violated: {dx} vs {}", h * dp / l);
            }
        }
    }

    #[test]
    fn efficiency_sanity_on_sphere_solution() {
        // Solve the manufactured sphere problem and check that the error
        // and the estimator live within a modest factor of each other.
        let surface = SurfaceDescription::sphere(1.0).unwrap();
        let mesh = SurfaceMesh::from_surface(&surface).refine_uniform(4, &surface).unwrap();
        let ds = DiscreteSurface::build(Arc::new(mesh), Arc::new(surface), 1).unwrap();
        let space = build_space(ds.mesh(), 1, ConstraintMode::MeanZero);
        let data = ProblemData::sphere_harmonic();
        let sys = assemble(&ds, &space, &data).unwrap();
        let sol = solve(&sys, 1e-10).unwrap();
        let eta = residual_indicators(&sol, &space, &ds, &data).unwrap();
        let eta_total = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = crate::fem::lifted_h1_error(&sol, &space, &ds, &data).unwrap();
        let ratio = err / eta_total;
        assert!(
            ratio > 0.02 && ratio < 50.0,
            "error {err} vs eta {eta_total} (ratio {ratio})"
        );
    }
}

//! Adaptive driver.
//!
//! The outer loop interleaves two adaptation passes under a geometric
//! tolerance schedule `ε_{k+1} = ρ ε_k`:
//!
//! 1. greedy geometric refinement until every element's chosen indicator
//!    (λ_T or μ_T) drops below `ω ε_k`, refining the worst element one at
//!    a time;
//! 2. a solve-estimate-mark-refine loop with Dörfler marking until the
//!    residual estimator satisfies `η ≤ ε_k`.

use crate::discrete::DiscreteSurface;
use crate::estimators::{
    geometric_indicator_raw, geometric_indicators, oscillation_indicators, residual_indicators,
};
use crate::fem::{assemble, build_space, lifted_h1_error, solve, ConstraintMode, FemSolution, FemSpace, ProblemData};
use crate::geometry::SurfaceDescription;
use crate::mesh::{MarkedSet, SurfaceMesh};
use crate::{map_indexed, now_seconds, Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeomIndicatorKind {
    Lambda,
    Mu,
}

impl GeomIndicatorKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(GeomIndicatorKind::Lambda),
            "mu" => Ok(GeomIndicatorKind::Mu),
            other => Err(Error::Config(format!("unknown geometric indicator `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GeomIndicatorKind::Lambda => "lambda",
            GeomIndicatorKind::Mu => "mu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementMode {
    Adaptive,
    /// Mark-everything refinement, two bisection generations per level.
    Uniform,
}

#[derive(Debug, Clone)]
pub struct AfemConfig {
    pub eps0: f64,
    pub rho: f64,
    pub omega: f64,
    pub geom_indicator: GeomIndicatorKind,
    pub theta: f64,
    pub r: usize,
    pub k: usize,
    pub final_eps: f64,
    pub max_outer: usize,
    pub solver_tol: f64,
    pub osc_m: usize,
    pub osc_m_face: usize,
    pub mode: RefinementMode,
    pub uniform_levels: usize,
    /// Cap on single-element geometric refinements per ADAPTSURF call.
    pub surf_loop_cap: usize,
    /// Cap on solve-estimate-mark-refine iterations per ADAPTPDE call.
    pub pde_loop_cap: usize,
}

impl AfemConfig {
    /// Oscillation exponents `m = max(1, 2r-2)`, `m' = 2r-1`: the advocated
    /// values, floored to the smallest admissible interior degree.
    pub fn default_osc(r: usize) -> (usize, usize) {
        ((2 * r).saturating_sub(2).max(1), 2 * r - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0) {
            return Err(Error::Config("eps0 must be positive".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config("rho must lie in (0, 1)".into()));
        }
        if !(self.omega > 0.0) {
            return Err(Error::Config("omega must be positive".into()));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config("theta must lie in (0, 1]".into()));
        }
        if self.r < 1 || self.k < 1 {
            return Err(Error::Config("polynomial degrees must be at least 1".into()));
        }
        if !(self.final_eps > 0.0) {
            return Err(Error::Config("final_eps must be positive".into()));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::Config("solver_tol must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the convergence history.
#[derive(Debug, Clone)]
pub struct ConvergenceRecord {
    pub iter: usize,
    pub eps: f64,
    pub dofs: usize,
    pub eta: f64,
    pub osc: f64,
    pub lambda: f64,
    pub beta: f64,
    pub mu: f64,
    /// Lifted H¹ error when an exact solution and a distance oracle
    /// exist; for `flat_reference` the sup-difference against the planar
    /// reference solver.
    pub h1_error: Option<f64>,
    pub surf_loops: usize,
    pub pde_loops: usize,
    pub seconds: f64,
}

pub const CSV_HEADER: [&str; 12] = [
    "iter", "eps", "dof", "eta", "osc", "lambda", "beta", "mu", "h1_error", "surf_loops",
    "pde_loops", "seconds",
];

impl ConvergenceRecord {
    pub fn csv_row(&self, timings: bool) -> Vec<String> {
        let num = |v: f64| format!("{v:.12e}");
        vec![
            self.iter.to_string(),
            num(self.eps),
            self.dofs.to_string(),
            num(self.eta),
            num(self.osc),
            num(self.lambda),
            num(self.beta),
            num(self.mu),
            self.h1_error.map(num).unwrap_or_else(|| "nan".into()),
            self.surf_loops.to_string(),
            self.pde_loops.to_string(),
            if timings { format!("{:.3}", self.seconds) } else { "0.000".into() },
        ]
    }
}

/// Dörfler marking: the smallest set (greedy by descending indicator)
/// whose squared mass reaches `θ` times the total.
pub fn dorfler_mark(indicators: &[f64], theta: f64) -> MarkedSet {
    assert!(theta > 0.0 && theta <= 1.0);
    let total: f64 = indicators.iter().map(|v| v * v).sum();
    if total <= 0.0 {
        return MarkedSet::new([]);
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| {
        indicators[b]
            .total_cmp(&indicators[a])
            .then(a.cmp(&b))
    });
    let target = theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for &t in &order {
        if acc >= target || indicators[t] == 0.0 {
            break;
        }
        acc += indicators[t] * indicators[t];
        marked.push(t);
    }
    MarkedSet::new(marked)
}

struct HeapItem {
    val: f64,
    id: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.val == other.val && self.id == other.id
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on value; ties broken toward the smaller id.
        self.val.total_cmp(&other.val).then(other.id.cmp(&self.id))
    }
}

/// Greedy geometric refinement: while any element's indicator exceeds
/// `tol`, bisect the worst offender. Returns the refined mesh and the
/// number of single-element refinement loops.
pub fn adapt_surf(
    mesh: &SurfaceMesh,
    surface: &Arc<SurfaceDescription>,
    k: usize,
    kind: GeomIndicatorKind,
    tol: f64,
    cap: usize,
) -> Result<(SurfaceMesh, usize)> {
    assert!(tol > 0.0);
    let basis = crate::basis::LagrangeBasis::new(k);
    let order = (4 * k).max(12);
    let mut session = mesh.refine_session(surface);
    let value_of = |session: &crate::mesh::RefineSession, id: usize| -> Result<f64> {
        let (macro_id, ref_verts, verts) = session.element_view(id);
        let (lambda, _, mu) =
            geometric_indicator_raw(surface, &basis, macro_id, &ref_verts, &verts, order)?;
        Ok(match kind {
            GeomIndicatorKind::Lambda => lambda,
            GeomIndicatorKind::Mu => mu,
        })
    };

    // Initial indicator sweep (index-parallel, deterministic order).
    let initial: Vec<Result<(usize, f64)>> = {
        let views: Vec<usize> = (0..session.num_slots()).collect();
        map_indexed(views.len(), |i| {
            let id = views[i];
            Ok((id, value_of(&session, id)?))
        })
    };
    let mut heap = BinaryHeap::new();
    let mut vals = vec![0.0; session.num_slots()];
    for item in initial {
        let (id, v) = item?;
        vals[id] = v;
        if v > tol {
            heap.push(HeapItem { val: v, id });
        }
    }

    let mut loops = 0usize;
    while let Some(HeapItem { val, id }) = heap.pop() {
        if !session.is_alive(id) || vals[id] != val || val <= tol {
            continue;
        }
        if loops >= cap {
            return Err(Error::IterationCap { cap, tol });
        }
        let before = session.num_slots();
        session.bisect(id)?;
        loops += 1;
        for new_id in before..session.num_slots() {
            if !session.is_alive(new_id) {
                vals.push(0.0);
                continue;
            }
            let v = value_of(&session, new_id)?;
            vals.push(v);
            if v > tol {
                heap.push(HeapItem { val: v, id: new_id });
            }
        }
        debug_assert_eq!(vals.len(), session.num_slots());
    }
    Ok((session.finish(), loops))
}

/// Result of one ADAPTPDE call.
pub struct PdeOutcome {
    pub mesh: SurfaceMesh,
    pub ds: DiscreteSurface,
    pub space: FemSpace,
    pub solution: FemSolution,
    pub eta: Vec<f64>,
    pub loops: usize,
}

/// Solve-estimate-mark-refine until `η ≤ tol`.
pub fn adapt_pde(
    mesh: SurfaceMesh,
    surface: &Arc<SurfaceDescription>,
    data: &ProblemData,
    constraint: ConstraintMode,
    config: &AfemConfig,
    tol: f64,
) -> Result<PdeOutcome> {
    assert!(tol > 0.0);
    let mut mesh = mesh;
    let mut loops = 0usize;
    loop {
        let ds = DiscreteSurface::build(Arc::new(mesh.clone()), surface.clone(), config.k)?;
        let space = build_space(ds.mesh(), config.r, constraint);
        let sys = assemble(&ds, &space, data)?;
        let solution = solve(&sys, config.solver_tol)?;
        let eta = residual_indicators(&solution, &space, &ds, data)?;
        let eta_total = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        loops += 1;
        if eta_total <= tol {
            return Ok(PdeOutcome { mesh, ds, space, solution, eta, loops });
        }
        if loops >= config.pde_loop_cap {
            return Err(Error::IterationCap { cap: config.pde_loop_cap, tol });
        }
        let marked = dorfler_mark(&eta, config.theta);
        mesh = mesh.refine(&marked, surface)?;
    }
}

/// Built-in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    HalfSphere,
    C2AlphaGraph,
    SphereManufactured,
    FlatReference,
}

impl Experiment {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "half_sphere" => Ok(Experiment::HalfSphere),
            "c2alpha_graph" => Ok(Experiment::C2AlphaGraph),
            "sphere_manufactured" => Ok(Experiment::SphereManufactured),
            "flat_reference" => Ok(Experiment::FlatReference),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::HalfSphere => "half_sphere",
            Experiment::C2AlphaGraph => "c2alpha_graph",
            Experiment::SphereManufactured => "sphere_manufactured",
            Experiment::FlatReference => "flat_reference",
        }
    }

    pub fn surface(&self) -> Result<SurfaceDescription> {
        match self {
            Experiment::HalfSphere => SurfaceDescription::half_sphere(1.0),
            Experiment::C2AlphaGraph => SurfaceDescription::graph(0.4),
            Experiment::SphereManufactured => SurfaceDescription::sphere(1.0),
            Experiment::FlatReference => Ok(SurfaceDescription::flat_patch()),
        }
    }

    pub fn data(&self) -> ProblemData {
        match self {
            Experiment::HalfSphere => ProblemData::half_sphere_singular(),
            Experiment::C2AlphaGraph => ProblemData::unit_load(),
            Experiment::SphereManufactured => ProblemData::sphere_harmonic(),
            Experiment::FlatReference => ProblemData::flat_sine(),
        }
    }

    pub fn constraint(&self) -> ConstraintMode {
        match self {
            Experiment::SphereManufactured => ConstraintMode::MeanZero,
            _ => ConstraintMode::Dirichlet,
        }
    }

    /// Per-experiment defaults; every field can be overridden from the
    /// run configuration.
    pub fn default_config(&self) -> AfemConfig {
        let base = |r: usize, k: usize| {
            let (m, mf) = AfemConfig::default_osc(r);
            AfemConfig {
                eps0: 1.0,
                rho: 0.5,
                omega: 1.0,
                geom_indicator: GeomIndicatorKind::Mu,
                theta: 0.5,
                r,
                k,
                final_eps: 1e-3,
                max_outer: 40,
                solver_tol: 1e-10,
                osc_m: m,
                osc_m_face: mf,
                mode: RefinementMode::Adaptive,
                uniform_levels: 4,
                surf_loop_cap: 2_000_000,
                pde_loop_cap: 80,
            }
        };
        match self {
            Experiment::HalfSphere => AfemConfig {
                eps0: 3.0,
                final_eps: 3.0 / 256.0,
                ..base(2, 1)
            },
            Experiment::C2AlphaGraph => AfemConfig {
                eps0: 0.25,
                final_eps: 4e-6,
                ..base(3, 2)
            },
            Experiment::SphereManufactured => AfemConfig {
                mode: RefinementMode::Uniform,
                uniform_levels: 4,
                ..base(1, 1)
            },
            Experiment::FlatReference => AfemConfig {
                mode: RefinementMode::Uniform,
                uniform_levels: 4,
                ..base(1, 1)
            },
        }
    }
}

/// Run an experiment. Each outer iteration records DOF counts, all
/// indicators, the exact error when measurable, loop counters and wall
/// time. Under uniform mode the schedule column still reports `ε₀ ρ^k`.
pub fn afem_run(config: &AfemConfig, experiment: Experiment) -> Result<Vec<ConvergenceRecord>> {
    config.validate()?;
    let surface = Arc::new(experiment.surface()?);
    let data = experiment.data();
    let constraint = experiment.constraint();
    let mut mesh = SurfaceMesh::from_surface(&surface);
    let mut records = Vec::new();

    match config.mode {
        RefinementMode::Uniform => {
            let mut eps = config.eps0;
            for level in 0..=config.uniform_levels {
                let start = now_seconds();
                let ds = DiscreteSurface::build(Arc::new(mesh.clone()), surface.clone(), config.k)?;
                let space = build_space(ds.mesh(), config.r, constraint);
                let sys = assemble(&ds, &space, &data)?;
                let solution = solve(&sys, config.solver_tol)?;
                let eta = residual_indicators(&solution, &space, &ds, &data)?;
                records.push(make_record(
                    level,
                    eps,
                    experiment,
                    config,
                    &ds,
                    &space,
                    &solution,
                    &eta,
                    &data,
                    0,
                    1,
                    start,
                )?);
                if level < config.uniform_levels {
                    mesh = mesh.refine_uniform(2, &surface)?;
                }
                eps *= config.rho;
            }
        }
        RefinementMode::Adaptive => {
            let mut eps = config.eps0;
            let mut iter = 0usize;
            while eps >= config.final_eps && iter < config.max_outer {
                let start = now_seconds();
                let (refined, surf_loops) = adapt_surf(
                    &mesh,
                    &surface,
                    config.k,
                    config.geom_indicator,
                    config.omega * eps,
                    config.surf_loop_cap,
                )?;
                let outcome = adapt_pde(refined, &surface, &data, constraint, config, eps)?;
                let eta_total: f64 = outcome.eta.iter().map(|v| v * v).sum::<f64>().sqrt();
                debug_assert!(eta_total <= eps);
                records.push(make_record(
                    iter,
                    eps,
                    experiment,
                    config,
                    &outcome.ds,
                    &outcome.space,
                    &outcome.solution,
                    &outcome.eta,
                    &data,
                    surf_loops,
                    outcome.loops,
                    start,
                )?);
                mesh = outcome.mesh;
                eps *= config.rho;
                iter += 1;
            }
        }
    }
    Ok(records)
}

#[allow(clippy::too_many_arguments)]
fn make_record(
    iter: usize,
    eps: f64,
    experiment: Experiment,
    config: &AfemConfig,
    ds: &DiscreteSurface,
    space: &FemSpace,
    solution: &FemSolution,
    eta: &[f64],
    data: &ProblemData,
    surf_loops: usize,
    pde_loops: usize,
    start: f64,
) -> Result<ConvergenceRecord> {
    let eta_total = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let osc = oscillation_indicators(solution, space, ds, data, config.osc_m, config.osc_m_face)?;
    let osc_total = osc.iter().map(|v| v * v).sum::<f64>().sqrt();
    let geo = geometric_indicators(ds)?;
    let h1_error = match experiment {
        Experiment::FlatReference => Some(planar_gap(ds, space, solution, data)?),
        _ => {
            if data.exact.is_some() && ds.surface().has_distance_oracle() {
                Some(lifted_h1_error(solution, space, ds, data)?)
            } else {
                None
            }
        }
    };
    Ok(ConvergenceRecord {
        iter,
        eps,
        dofs: space.num_dofs,
        eta: eta_total,
        osc: osc_total,
        lambda: geo.lambda_max(),
        beta: geo.beta_max(),
        mu: geo.mu_max(),
        h1_error,
        surf_loops,
        pde_loops,
        seconds: now_seconds() - start,
    })
}

/// Flat-equivalence metric: sup-difference between the surface-pipeline
/// coefficients and the independent planar solver on the same mesh.
fn planar_gap(
    ds: &DiscreteSurface,
    space: &FemSpace,
    solution: &FemSolution,
    data: &ProblemData,
) -> Result<f64> {
    let exact = data.exact.as_ref();
    let f = data.f.clone();
    let (planar, _) = crate::planar::solve_plane(
        ds.mesh(),
        space.r,
        move |x, y| f(crate::Point::new(x, y, 0.0)),
        move |x, y| {
            exact
                .map(|e| (e.u)(crate::Point::new(x, y, 0.0)))
                .unwrap_or(0.0)
        },
        1e-12,
    )?;
    Ok(solution
        .coeffs
        .iter()
        .zip(&planar.coeffs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max))
}

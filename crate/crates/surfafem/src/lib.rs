//! Adaptive surface finite element methods for the Laplace-Beltrami problem
//! `-Δ_γ u = f` on parametrically described C² surfaces.
//!
//! The surface `γ` is known through per-element charts only. A degree-`k`
//! interpolated surface `Γ` carries a degree-`r` Lagrange space. Alongside
//! the usual residual estimator `η` the crate computes the geometric
//! indicators
//!
//! * `λ_T` - chart Jacobian interpolation mismatch,
//! * `β_T` - chart value interpolation mismatch,
//! * `μ_T = β_T + λ_T²` - the sharper combination that drives geometric
//!   refinement without over-resolving smooth geometry,
//!
//! plus computable sufficient conditions for the geometric resolution
//! assumptions underlying the estimator theory, and an adaptive driver
//! (`afem`) that alternates greedy geometric refinement with a
//! solve-estimate-mark-refine loop.

pub mod afem;
pub mod dof;
pub mod basis;
pub mod config;
pub mod discrete;
pub mod estimators;
pub mod fem;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod planar;
pub mod quadrature;

pub use afem::{AfemConfig, ConvergenceRecord, Experiment, GeomIndicatorKind, RefinementMode};
pub use config::ExperimentConfig;
pub use discrete::DiscreteSurface;
pub use estimators::{AssumptionReport, IndicatorField};
pub use fem::{ConstraintMode, FemSolution, FemSpace, ProblemData};
pub use geometry::SurfaceDescription;
pub use mesh::{MarkedSet, SurfaceMesh};

use thiserror::Error;

/// Ambient coordinates. Curves (`n = 1`) live in the `z = 0` plane.
pub type Point = nalgebra::Vector3<f64>;
/// Coordinates on the reference simplex (second entry unused when `n = 1`).
pub type RefPoint = nalgebra::Vector2<f64>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown surface id `{0}`")]
    UnknownSurface(String),
    #[error("invalid surface parameter: {0}")]
    InvalidParameter(String),
    #[error("point outside chart validity: {0}")]
    OutsideChart(String),
    #[error("point outside the tubular neighborhood (|d| = {dist:.3e}, limit {limit:.3e})")]
    OutsideTube { dist: f64, limit: f64 },
    #[error("closest-point iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    ProjectionDiverged { iterations: usize, residual: f64 },
    #[error("no signed-distance oracle for this surface")]
    MissingOracle,
    #[error("no exact solution attached to this problem")]
    MissingExactSolution,
    #[error("element {element} is degenerate (measure {measure:.3e})")]
    DegenerateElement { element: usize, measure: f64 },
    #[error("element {element} violates the shape-regularity floor (singular value ratio {ratio:.3e})")]
    ShapeRegularity { element: usize, ratio: f64 },
    #[error("mesh format error: {0}")]
    MeshFormat(String),
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("refinement loop cap of {cap} exceeded (tolerance {tol:.3e})")]
    IterationCap { cap: usize, tol: f64 },
    #[error("unsupported for meshes of dimension n = {0}")]
    UnsupportedDimension(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("log-log slope needs positive values, found {0}")]
    NonPositiveInLog(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Map `f` over `0..len` in parallel when the `parallel` feature is active.
/// The output order is by index either way, so reductions downstream are
/// deterministic.
pub(crate) fn map_indexed<T: Send, F: Fn(usize) -> T + Sync + Send>(len: usize, f: F) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Wall-clock seconds; zero on targets without a monotonic clock.
pub(crate) fn now_seconds() -> f64 {
    #[cfg(not(target_arch = "wasm32"))]
    {
        use std::time::{SystemTime, UNIX_EPOCH};
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0)
    }
    #[cfg(target_arch = "wasm32")]
    {
        0.0
    }
}

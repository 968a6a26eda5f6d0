//! Command-line front end: run experiments, check geometric assumptions,
//! fit convergence slopes, export meshes.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use surfafem::afem::{afem_run, ConvergenceRecord, CSV_HEADER};
use surfafem::config::ExperimentConfig;
use surfafem::discrete::DiscreteSurface;
use surfafem::estimators::check_assumptions;
use surfafem::io::svg::Series;
use surfafem::io::{self, write_csv};
use surfafem::mesh::SurfaceMesh;

#[derive(Parser)]
#[command(name = "surfafem", about = "Adaptive surface FEM for the Laplace-Beltrami problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON configuration.
    Run { config: PathBuf },
    /// Evaluate the computable geometric-resolution checks.
    Check { config: PathBuf },
    /// Least-squares slope of log(column) vs log(dof) over the last rows.
    Slope {
        csv: PathBuf,
        column: String,
        window: usize,
    },
    /// Write the experiment mesh at a uniform refinement level (OFF + VTK).
    ExportMesh { config: PathBuf, level: usize },
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => load_config(&config).and_then(|cfg| run(&cfg).map_err(Failure::Runtime)),
        Command::Check { config } => load_config(&config).and_then(|cfg| check(&cfg).map_err(Failure::Runtime)),
        Command::Slope { csv, column, window } => slope(&csv, &column, window).map_err(Failure::Runtime),
        Command::ExportMesh { config, level } => {
            load_config(&config).and_then(|cfg| export_mesh(&cfg, level).map_err(Failure::Runtime))
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

enum Failure {
    Config(String),
    Runtime(surfafem::Error),
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = ExperimentConfig::from_json(&text).map_err(|e| Failure::Config(e.to_string()))?;
    // Resolve eagerly so invalid values exit with code 2 before any
    // artifact is written.
    cfg.resolve().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

/// Cap the worker pool from SURFAFEM_THREADS.
fn init_threads() {
    if let Ok(value) = std::env::var("SURFAFEM_THREADS") {
        if let Ok(n) = value.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cfg: &ExperimentConfig) -> surfafem::Result<()> {
    let (experiment, afem) = cfg.resolve()?;
    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let records = afem_run(&afem, experiment)?;

    if cfg.emit_csv {
        let rows: Vec<Vec<String>> = records.iter().map(|r| r.csv_row(cfg.timings)).collect();
        write_csv(&out_dir.join("convergence.csv"), &CSV_HEADER, &rows)?;
    }
    if cfg.emit_svg {
        let svg = convergence_svg(&records, experiment.name());
        std::fs::write(out_dir.join("convergence.svg"), svg)?;
    }
    if cfg.emit_vtk {
        write_final_mesh_vtk(&afem, experiment, &out_dir, records.len())?;
    }
    if cfg.emit_matrix {
        write_final_matrix(cfg, &out_dir)?;
    }
    for r in &records {
        println!(
            "iter {:>3}  eps {:>12.5e}  dof {:>8}  eta {:>12.5e}  mu {:>12.5e}{}",
            r.iter,
            r.eps,
            r.dofs,
            r.eta,
            r.mu,
            r.h1_error
                .map(|e| format!("  err {e:>12.5e}"))
                .unwrap_or_default()
        );
    }
    Ok(())
}

fn convergence_svg(records: &[ConvergenceRecord], title: &str) -> String {
    let dofs: Vec<f64> = records.iter().map(|r| r.dofs as f64).collect();
    let mut series = vec![
        Series::new("eta", dofs.clone(), records.iter().map(|r| r.eta).collect()),
        Series::new("mu", dofs.clone(), records.iter().map(|r| r.mu).collect()),
        Series::new("lambda", dofs.clone(), records.iter().map(|r| r.lambda).collect()),
    ];
    if records.iter().any(|r| r.h1_error.is_some()) {
        series.push(Series::new(
            "h1_error",
            dofs.clone(),
            records
                .iter()
                .map(|r| r.h1_error.unwrap_or(f64::NAN))
                .collect(),
        ));
    }
    io::plot_loglog(title, "degrees of freedom", &series, 5)
}

/// Final refinement state with indicator cell data. The adaptive mesh is
/// reproduced by rerunning the (deterministic) driver.
fn write_final_mesh_vtk(
    afem: &surfafem::AfemConfig,
    experiment: surfafem::Experiment,
    out_dir: &Path,
    iterations: usize,
) -> surfafem::Result<()> {
    let surface = Arc::new(experiment.surface()?);
    let mesh = match afem.mode {
        surfafem::RefinementMode::Uniform => {
            SurfaceMesh::from_surface(&surface).refine_uniform(2 * afem.uniform_levels, &surface)?
        }
        surfafem::RefinementMode::Adaptive => rerun_final_mesh(afem, experiment)?,
    };
    let ds = DiscreteSurface::build(Arc::new(mesh.clone()), surface, afem.k)?;
    let geo = surfafem::estimators::geometric_indicators(&ds)?;
    let h: Vec<f64> = (0..mesh.num_elements())
        .map(|t| mesh.element_size(t).unwrap_or(0.0))
        .collect();
    let levels: Vec<f64> = (0..mesh.num_elements())
        .map(|t| mesh.element(t).level() as f64)
        .collect();
    let name = format!("mesh_{:04}.vtk", iterations.saturating_sub(1));
    surfafem::io::write_vtk(
        &mesh,
        &[
            ("lambda", &geo.lambda),
            ("beta", &geo.beta),
            ("mu", &geo.mu),
            ("h", &h),
            ("level", &levels),
        ],
        &out_dir.join(name),
    )
}

fn rerun_final_mesh(
    afem: &surfafem::AfemConfig,
    experiment: surfafem::Experiment,
) -> surfafem::Result<SurfaceMesh> {
    let surface = Arc::new(experiment.surface()?);
    let data = experiment.data();
    let constraint = experiment.constraint();
    let mut mesh = SurfaceMesh::from_surface(&surface);
    let mut eps = afem.eps0;
    let mut iter = 0;
    while eps >= afem.final_eps && iter < afem.max_outer {
        let (refined, _) = surfafem::afem::adapt_surf(
            &mesh,
            &surface,
            afem.k,
            afem.geom_indicator,
            afem.omega * eps,
            afem.surf_loop_cap,
        )?;
        let outcome = surfafem::afem::adapt_pde(refined, &surface, &data, constraint, afem, eps)?;
        mesh = outcome.mesh;
        eps *= afem.rho;
        iter += 1;
    }
    Ok(mesh)
}

fn write_final_matrix(cfg: &ExperimentConfig, out_dir: &Path) -> surfafem::Result<()> {
    let (experiment, afem) = cfg.resolve()?;
    let surface = Arc::new(experiment.surface()?);
    let mesh = SurfaceMesh::from_surface(&surface).refine_uniform(2, &surface)?;
    let ds = DiscreteSurface::build(Arc::new(mesh), surface, afem.k)?;
    let space = surfafem::fem::build_space(ds.mesh(), afem.r, experiment.constraint());
    let sys = surfafem::fem::assemble(&ds, &space, &experiment.data())?;
    surfafem::io::mm::write_matrix_market(&sys.matrix, &out_dir.join("system.mtx"))
}

fn check(cfg: &ExperimentConfig) -> surfafem::Result<()> {
    let (experiment, afem) = cfg.resolve()?;
    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let surface = Arc::new(experiment.surface()?);
    let mesh = SurfaceMesh::from_surface(&surface);
    let ds = DiscreteSurface::build(Arc::new(mesh), surface, afem.k)?;
    let report = check_assumptions(&ds, cfg.seed)?;

    let header = [
        "element",
        "h",
        "beta",
        "tube_margin",
        "mismatch_margin",
        "lipschitz",
        "separation",
        "q_ratio_min",
        "q_ratio_max",
        "qd_ratio_min",
        "qd_ratio_max",
        "normal_mismatch",
        "patch_convex",
    ];
    let num = |v: f64| format!("{v:.12e}");
    let rows: Vec<Vec<String>> = report
        .elements
        .iter()
        .map(|c| {
            vec![
                c.element.to_string(),
                num(c.h),
                num(c.beta),
                num(c.tube_margin),
                num(c.mismatch_margin),
                num(c.lipschitz),
                num(c.separation),
                num(c.q_ratio_min),
                num(c.q_ratio_max),
                num(c.qd_ratio_min),
                num(c.qd_ratio_max),
                num(c.normal_mismatch),
                c.patch_convex.to_string(),
            ]
        })
        .collect();
    write_csv(&out_dir.join("assumptions.csv"), &header, &rows)?;
    if report.all_pass() {
        println!("PASS");
    } else {
        println!("FAIL: {}", report.failing().join("; "));
    }
    Ok(())
}

fn slope(csv: &Path, column: &str, window: usize) -> surfafem::Result<()> {
    let dofs = io::read_column(csv, "dof")?;
    let values = io::read_column(csv, column)?;
    let s = io::loglog_slope(&dofs, &values, window)?;
    println!("{s:.6}");
    Ok(())
}

fn export_mesh(cfg: &ExperimentConfig, level: usize) -> surfafem::Result<()> {
    let (experiment, afem) = cfg.resolve()?;
    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let surface = Arc::new(experiment.surface()?);
    let mesh = SurfaceMesh::from_surface(&surface).refine_uniform(2 * level, &surface)?;
    io::write_off(&mesh, &out_dir.join(format!("mesh_level{level}.off")))?;
    let ds = DiscreteSurface::build(Arc::new(mesh.clone()), surface, afem.k)?;
    let geo = surfafem::estimators::geometric_indicators(&ds)?;
    io::write_vtk(
        &mesh,
        &[("lambda", &geo.lambda), ("beta", &geo.beta), ("mu", &geo.mu)],
        &out_dir.join(format!("mesh_level{level}.vtk")),
    )?;
    println!(
        "level {level}: {} vertices, {} elements",
        mesh.num_vertices(),
        mesh.num_elements()
    );
    Ok(())
}

//! Browser demo bindings: render indicator fields, adaptive meshes and
//! convergence curves as SVG strings for a static page.

use std::sync::Arc;
use surfafem::afem::{adapt_pde, adapt_surf, afem_run, AfemConfig, Experiment, GeomIndicatorKind};
use surfafem::discrete::DiscreteSurface;
use surfafem::estimators::geometric_indicators;
use surfafem::geometry::SurfaceDescription;
use surfafem::io::svg::Series;
use surfafem::mesh::SurfaceMesh;
use surfafem::Point;
use wasm_bindgen::prelude::*;

fn err_to_js(e: surfafem::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn surface_by_name(name: &str) -> Result<SurfaceDescription, JsValue> {
    SurfaceDescription::from_id(name, &serde_json::json!({})).map_err(err_to_js)
}

/// Uniformly refine a surface and color its elements by a geometric
/// indicator (`"lambda"`, `"beta"` or `"mu"`).
#[wasm_bindgen]
pub fn indicator_map(surface: &str, k: u32, levels: u32, indicator: &str) -> Result<String, JsValue> {
    let k = k.clamp(1, 3) as usize;
    let levels = levels.min(5) as usize;
    let s = Arc::new(surface_by_name(surface)?);
    let mesh = SurfaceMesh::from_surface(&s)
        .refine_uniform(2 * levels, &s)
        .map_err(err_to_js)?;
    let ds = DiscreteSurface::build(Arc::new(mesh.clone()), s, k).map_err(err_to_js)?;
    let geo = geometric_indicators(&ds).map_err(err_to_js)?;
    let values = match indicator {
        "lambda" => geo.lambda,
        "beta" => geo.beta,
        _ => geo.mu,
    };
    let title = format!(
        "{surface}: {indicator} per element, k = {k}, {} elements",
        mesh.num_elements()
    );
    Ok(render_mesh(&mesh, &values, &title))
}

fn small_config(indicator: GeomIndicatorKind, outer: usize, experiment: Experiment) -> AfemConfig {
    let mut config = experiment.default_config();
    config.geom_indicator = indicator;
    config.max_outer = outer;
    // Keep the interactive runs bounded.
    config.final_eps = config.eps0 * config.rho.powi(outer as i32 - 1);
    config.surf_loop_cap = 400_000;
    config
}

/// Run the adaptive driver for a few outer iterations and draw the final
/// mesh colored by element refinement level.
#[wasm_bindgen]
pub fn adaptive_mesh(experiment: &str, indicator: &str, outer: u32) -> Result<String, JsValue> {
    let experiment = Experiment::parse(experiment).map_err(err_to_js)?;
    let kind = GeomIndicatorKind::parse(indicator).map_err(err_to_js)?;
    let outer = outer.clamp(1, 12) as usize;
    let config = small_config(kind, outer, experiment);
    let surface = Arc::new(experiment.surface().map_err(err_to_js)?);
    let data = experiment.data();
    let constraint = experiment.constraint();

    let mut mesh = SurfaceMesh::from_surface(&surface);
    let mut eps = config.eps0;
    let mut loops = 0;
    for _ in 0..outer {
        let (refined, surf_loops) = adapt_surf(
            &mesh,
            &surface,
            config.k,
            config.geom_indicator,
            config.omega * eps,
            config.surf_loop_cap,
        )
        .map_err(err_to_js)?;
        loops += surf_loops;
        let outcome =
            adapt_pde(refined, &surface, &data, constraint, &config, eps).map_err(err_to_js)?;
        mesh = outcome.mesh;
        eps *= config.rho;
    }
    let levels: Vec<f64> = (0..mesh.num_elements())
        .map(|t| mesh.element(t).level() as f64)
        .collect();
    let title = format!(
        "{} with {} indicator: {} elements, {} geometric loops",
        experiment.name(),
        kind.name(),
        mesh.num_elements(),
        loops
    );
    Ok(render_mesh(&mesh, &levels, &title))
}

/// Convergence curves (estimator, geometric indicators, error when
/// available) of a bounded adaptive run.
#[wasm_bindgen]
pub fn convergence_plot(experiment: &str, indicator: &str, outer: u32) -> Result<String, JsValue> {
    let experiment = Experiment::parse(experiment).map_err(err_to_js)?;
    let kind = GeomIndicatorKind::parse(indicator).map_err(err_to_js)?;
    let outer = outer.clamp(2, 12) as usize;
    let config = small_config(kind, outer, experiment);
    let records = afem_run(&config, experiment).map_err(err_to_js)?;
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
            records.iter().map(|r| r.h1_error.unwrap_or(f64::NAN)).collect(),
        ));
    }
    let title = format!("{} ({} indicator)", experiment.name(), kind.name());
    Ok(surfafem::io::plot_loglog(&title, "degrees of freedom", &series, 5))
}

/// Orthographic top-view rendering with painter's sorting and a
/// logarithmic color map.
fn render_mesh(mesh: &SurfaceMesh, values: &[f64], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 640.0;
    const M: f64 = 40.0;
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for v in mesh.vertices() {
        xmin = xmin.min(v.x);
        xmax = xmax.max(v.x);
        ymin = ymin.min(v.y);
        ymax = ymax.max(v.y);
    }
    let scale = ((W - 2.0 * M) / (xmax - xmin)).min((H - 2.0 * M) / (ymax - ymin));
    let px = |p: Point| {
        (
            M + (p.x - xmin) * scale,
            H - M - (p.y - ymin) * scale,
        )
    };

    let positive: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    let (lo, hi) = if positive.is_empty() {
        (1e-16, 1.0)
    } else {
        (
            positive.iter().fold(f64::INFINITY, |a, &b| a.min(b)),
            positive.iter().fold(0.0f64, |a, &b| a.max(b)),
        )
    };
    let color = |v: f64| -> String {
        let t = if hi > lo && v > 0.0 {
            ((v.ln() - lo.ln()) / (hi.ln() - lo.ln())).clamp(0.0, 1.0)
        } else if hi > lo {
            0.0
        } else {
            0.5
        };
        // Blue -> yellow -> red.
        let (r, g, b) = if t < 0.5 {
            let u = t * 2.0;
            (40.0 + 215.0 * u, 60.0 + 180.0 * u, 200.0 - 140.0 * u)
        } else {
            let u = (t - 0.5) * 2.0;
            (255.0 - 40.0 * u, 240.0 - 200.0 * u, 60.0 - 30.0 * u)
        };
        format!("rgb({},{},{})", r as u8, g as u8, b as u8)
    };

    // Painter's order: draw lower (mean z) elements first.
    let mut order: Vec<usize> = (0..mesh.num_elements()).collect();
    let mean_z = |t: usize| -> f64 {
        mesh.element(t)
            .vertex_ids()
            .iter()
            .map(|&v| mesh.vertex(v).z)
            .sum::<f64>()
            / 3.0
    };
    order.sort_by(|&a, &b| mean_z(a).total_cmp(&mean_z(b)).then(a.cmp(&b)));

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    out.push_str(&format!(
        "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        title.replace('&', "&amp;").replace('<', "&lt;")
    ));
    for &t in &order {
        let ids = mesh.element(t).vertex_ids();
        let pts: Vec<(f64, f64)> = ids.iter().take(3).map(|&v| px(mesh.vertex(v))).collect();
        out.push_str(&format!(
            "<polygon points=\"{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}\" fill=\"{}\" stroke=\"#333\" stroke-width=\"0.4\"/>\n",
            pts[0].0, pts[0].1, pts[1].0, pts[1].1, pts[2].0, pts[2].1,
            color(values[t])
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">range {:.3e} .. {:.3e}</text>\n",
        W / 2.0,
        H - 12.0,
        lo,
        hi
    ));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_map_renders() {
        let svg = indicator_map("sphere", 1, 1, "mu").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polygon"));
    }

    #[test]
    fn adaptive_mesh_renders() {
        let svg = adaptive_mesh("half_sphere", "mu", 3).unwrap();
        assert!(svg.contains("geometric loops"));
    }

    #[test]
    fn convergence_plot_renders() {
        let svg = convergence_plot("half_sphere", "mu", 4).unwrap();
        assert!(svg.contains("slope"));
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(surface_by_name("torus").is_err());
        assert!(adaptive_mesh("nope", "mu", 2).is_err());
    }
}

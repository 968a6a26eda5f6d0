//! Self-contained SVG log-log convergence plots.

use super::{least_squares_slope, loglog_slope};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 540.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Series {
    pub fn new(name: &str, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Series { name: name.to_string(), xs, ys }
    }
}

/// Render series on log-log axes with decade gridlines; each legend entry
/// carries the least-squares slope over the last `slope_window` points.
pub fn plot_loglog(
    title: &str,
    xlabel: &str,
    series: &[Series],
    slope_window: usize,
) -> String {
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for (&x, &y) in s.xs.iter().zip(&s.ys) {
            if x > 0.0 && y > 0.0 && y.is_finite() {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
    }
    if !xmin.is_finite() || xmin == xmax {
        xmin = 1.0;
        xmax = 10.0;
    }
    if !ymin.is_finite() || ymin == ymax {
        ymin = 0.1;
        ymax = 1.0;
    }
    let (lx0, lx1) = (xmin.log10().floor(), xmax.log10().ceil());
    let (ly0, ly1) = (ymin.log10().floor(), ymax.log10().ceil());
    let px = |x: f64| {
        MARGIN_L + (x.log10() - lx0) / (lx1 - lx0) * (WIDTH - MARGIN_L - MARGIN_R)
    };
    let py = |y: f64| {
        HEIGHT - MARGIN_B - (y.log10() - ly0) / (ly1 - ly0) * (HEIGHT - MARGIN_T - MARGIN_B)
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        xml_escape(title)
    ));

    // Decade gridlines.
    let mut d = lx0 as i64;
    while d <= lx1 as i64 {
        let x = px(10f64.powi(d as i32));
        out.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{MARGIN_T}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            HEIGHT - MARGIN_B
        ));
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">1e{d}</text>\n",
            HEIGHT - MARGIN_B + 16.0
        ));
        d += 1;
    }
    let mut d = ly0 as i64;
    while d <= ly1 as i64 {
        let y = py(10f64.powi(d as i32));
        out.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n",
            WIDTH - MARGIN_R
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">1e{d}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0
        ));
        d += 1;
    }
    out.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        HEIGHT - 12.0,
        xml_escape(xlabel)
    ));

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s
            .xs
            .iter()
            .zip(&s.ys)
            .filter(|(&x, &y)| x > 0.0 && y > 0.0 && y.is_finite())
            .map(|(&x, &y)| (px(x), py(y)))
            .collect();
        if pts.len() < 2 {
            continue;
        }
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for (x, y) in &pts {
            out.push_str(&format!(
                "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"2.6\" fill=\"{color}\"/>\n"
            ));
        }
        // Legend with the fitted slope.
        let slope_txt = {
            let clean: (Vec<f64>, Vec<f64>) = s
                .xs
                .iter()
                .zip(&s.ys)
                .filter(|(&x, &y)| x > 0.0 && y > 0.0 && y.is_finite())
                .map(|(&x, &y)| (x, y))
                .unzip();
            match loglog_slope(&clean.0, &clean.1, slope_window.max(2)) {
                Ok(sl) => format!("{} (slope {sl:.2})", s.name),
                Err(_) => s.name.clone(),
            }
        };
        let ly = MARGIN_T + 16.0 + 18.0 * si as f64;
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly:.1}\" x2=\"{}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            WIDTH - MARGIN_R + 8.0,
            WIDTH - MARGIN_R + 28.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            WIDTH - MARGIN_R + 33.0,
            ly + 4.0,
            xml_escape(&slope_txt)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Fit annotation helper shared with tests: slope over all points.
pub fn full_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    least_squares_slope(&lx, &ly)
}

//! File formats: OFF meshes, legacy VTK exports, CSV tables, SVG
//! convergence plots, MatrixMarket dumps.

pub mod csv;
pub mod mm;
pub mod off;
pub mod svg;
pub mod vtk;

pub use csv::{read_column, write_csv};
pub use off::{read_off, write_off};
pub use svg::{plot_loglog, Series};
pub use vtk::write_vtk;

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Least-squares slope of `log(column)` against `log(dof)` over the last
/// `window` rows.
pub fn loglog_slope(dofs: &[f64], values: &[f64], window: usize) -> crate::Result<f64> {
    assert_eq!(dofs.len(), values.len());
    let n = dofs.len();
    let w = window.min(n);
    if w < 2 {
        return Err(crate::Error::Config(format!(
            "slope needs at least 2 rows, window covers {w}"
        )));
    }
    let mut xs = Vec::with_capacity(w);
    let mut ys = Vec::with_capacity(w);
    for i in (n - w)..n {
        if !(dofs[i] > 0.0) {
            return Err(crate::Error::NonPositiveInLog(dofs[i]));
        }
        if !(values[i] > 0.0) {
            return Err(crate::Error::NonPositiveInLog(values[i]));
        }
        xs.push(dofs[i].ln());
        ys.push(values[i].ln());
    }
    Ok(least_squares_slope(&xs, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_laws() {
        let dofs: Vec<f64> = (1..=8).map(|k| 2f64.powi(k)).collect();
        let inv: Vec<f64> = dofs.iter().map(|n| 3.0 / n).collect();
        let s = loglog_slope(&dofs, &inv, 5).unwrap();
        assert!((s + 1.0).abs() < 1e-12);
        let p32: Vec<f64> = dofs.iter().map(|n| 0.7 * n.powf(-1.5)).collect();
        let s = loglog_slope(&dofs, &p32, 8).unwrap();
        assert!((s + 1.5).abs() < 1e-12);
    }

    #[test]
    fn slope_rejects_nonpositive() {
        let dofs = vec![1.0, 2.0, 4.0];
        let vals = vec![1.0, 0.0, 1.0];
        assert!(loglog_slope(&dofs, &vals, 3).is_err());
    }
}

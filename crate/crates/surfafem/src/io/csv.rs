//! Minimal CSV writing/reading for convergence tables.

use crate::{Error, Result};
use std::path::Path;

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read one named column as floats. Empty cells parse as NaN.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty csv file".into()))?;
    let idx = header
        .split(',')
        .position(|c| c.trim() == column)
        .ok_or_else(|| Error::Config(format!("column `{column}` not found in {header}")))?;
    let mut values = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cell = line
            .split(',')
            .nth(idx)
            .ok_or_else(|| Error::Config(format!("row {} lacks column {column}", ln + 2)))?;
        let v = if cell.trim().is_empty() {
            f64::NAN
        } else {
            cell.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad number `{cell}` in row {}", ln + 2)))?
        };
        values.push(v);
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = std::env::temp_dir().join("surfafem_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        write_csv(
            &path,
            &["iter", "dof", "eta"],
            &[
                vec!["0".into(), "10".into(), "1.5e0".into()],
                vec!["1".into(), "40".into(), "7.5e-1".into()],
            ],
        )
        .unwrap();
        let dof = read_column(&path, "dof").unwrap();
        assert_eq!(dof, vec![10.0, 40.0]);
        let eta = read_column(&path, "eta").unwrap();
        assert!((eta[1] - 0.75).abs() < 1e-15);
        assert!(read_column(&path, "missing").is_err());
    }
}

//! MatrixMarket coordinate dumps of assembled systems.

use crate::fem::Csr;
use crate::Result;
use std::path::Path;

pub fn write_matrix_market(matrix: &Csr, path: &Path) -> Result<()> {
    let mut entries = Vec::new();
    for r in 0..matrix.nrows {
        for idx in matrix.row_ptr[r]..matrix.row_ptr[r + 1] {
            let c = matrix.cols[idx];
            // Lower triangle suffices for a symmetric dump.
            if c <= r {
                entries.push((r, c, matrix.vals[idx]));
            }
        }
    }
    let mut out = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
    out.push_str(&format!("{} {} {}\n", matrix.nrows, matrix.nrows, entries.len()));
    for (r, c, v) in entries {
        out.push_str(&format!("{} {} {:.16e}\n", r + 1, c + 1, v));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_coordinate_format() {
        let mut trip = vec![(0, 0, 2.0), (1, 0, -1.0), (0, 1, -1.0), (1, 1, 2.0)];
        let a = Csr::from_triplets(2, &mut trip);
        let dir = std::env::temp_dir().join("surfafem_mm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.mtx");
        write_matrix_market(&a, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric"));
        assert!(text.contains("2 2 3"));
        assert!(text.contains("2 1 -1"));
    }
}

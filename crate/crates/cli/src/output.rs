//! Atomic CSV and JSON artifact writers.

use std::io::Write as _;
use std::path::Path;

use riccati_core::{Field1D, Kernel2D, C64};

use crate::error::CliError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// File-name tag for a time value.
pub fn time_tag(t: f64) -> String {
    format!("{t}")
}

/// A table of numeric columns rendered as CSV.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[f64]) {
        let mut first = true;
        for &c in cells {
            if !first {
                self.text.push(',');
            }
            first = false;
            self.text.push_str(&num(c));
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn field_csv(f: &Field1D) -> String {
    let mut t = Table::new(&["x", "re", "im"]);
    for (x, v) in f.grid.points().iter().zip(&f.values) {
        t.row(&[*x, v.re, v.im]);
    }
    t.into_string()
}

/// Row-major over `x`, then `y`.
pub fn kernel_csv(k: &Kernel2D) -> String {
    let pts = k.grid().points();
    let vals = k.values();
    let mut t = Table::new(&["x", "y", "re", "im"]);
    for (i, x) in pts.iter().enumerate() {
        for (j, y) in pts.iter().enumerate() {
            let v = vals[(i, j)];
            t.row(&[*x, *y, v.re, v.im]);
        }
    }
    t.into_string()
}

pub fn matrix_csv(m: &nalgebra::DMatrix<C64>) -> String {
    let mut t = Table::new(&["row", "col", "re", "im"]);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            t.row(&[i as f64, j as f64, v.re, v.im]);
        }
    }
    t.into_string()
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let target = dir.join(name);
    let io = |source| CliError::Io {
        path: target.display().to_string(),
        source,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(&target).map_err(|e| io(e.error))?;
    Ok(())
}

/// Writes every named artifact into `dir`, creating it if needed.
pub fn write_all(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    for (name, contents) in files {
        write_atomic(dir, name, contents)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn time_tags_are_short() {
        assert_eq!(time_tag(1.0), "1");
        assert_eq!(time_tag(0.25), "0.25");
    }
}

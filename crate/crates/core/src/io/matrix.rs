//! Dense matrices as plain text: one row per line, entries separated by whitespace,
//! `#` starts a comment.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn parse_matrix_str(src: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let mut row = Vec::new();
        let mut col = 1;
        for tok in line.split_inclusive(char::is_whitespace) {
            let t = tok.trim();
            if !t.is_empty() {
                row.push(t.parse::<f64>().map_err(|_| Error::Parse {
                    line: k + 1,
                    column: col,
                    message: format!("expected a number, found `{t}`"),
                })?);
            }
            col += tok.len();
        }
        if row.is_empty() {
            continue;
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: k + 1,
                    column: 1,
                    message: format!("row has {} entries, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::MissingSection("matrix rows".into()));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_matrix_str(&std::fs::read_to_string(path)?)
}

/// Row-major text with shortest round-trip decimal formatting.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, format_matrix(m))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -1.0 / 3.0, 2e-17, 5.0, 1e300, -0.0]);
        let back = parse_matrix_str(&format_matrix(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(parse_matrix_str("1 2\n3\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn comments_are_skipped() {
        let m = parse_matrix_str("# header\n1 2 # tail\n\n3 4\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }
}

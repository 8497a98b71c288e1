//! Plain-text complex matrix format shared by beam-set and sequence-map
//! files.
//!
//! Layout: one header line of whitespace-separated values, then one line
//! per matrix row with `re:im` entries. Floats are written with Rust's
//! shortest round-trip formatting, so save/load round trips are bit exact.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub(crate) fn format_matrix(header: &str, mat: &DMatrix<Complex64>) -> String {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for r in 0..mat.nrows() {
        for c in 0..mat.ncols() {
            if c > 0 {
                out.push(' ');
            }
            let v = mat[(r, c)];
            let _ = write!(out, "{}:{}", v.re, v.im);
        }
        out.push('\n');
    }
    out
}

/// Parse a matrix file whose header must contain `header_len` fields and
/// whose body must be `rows x cols` where (rows, cols) is derived from the
/// header by the caller.
pub(crate) fn parse_matrix(
    path: &Path,
    contents: &str,
    header_len: usize,
    dims: impl FnOnce(&[String]) -> Result<(usize, usize)>,
) -> Result<DMatrix<Complex64>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = contents.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| err(1, "empty file".to_string()))?;
    let header: Vec<String> = header_line.split_whitespace().map(String::from).collect();
    if header.len() != header_len {
        return Err(err(
            1,
            format!("expected {header_len} header fields, found {}", header.len()),
        ));
    }
    let (rows, cols) = dims(&header)?;
    let mut matrix = DMatrix::from_element(rows, cols, Complex64::new(0.0, 0.0));
    let mut filled = 0;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if filled >= rows {
            return Err(err(idx + 1, format!("more than {rows} data rows")));
        }
        let entries: Vec<&str> = line.split_whitespace().collect();
        if entries.len() != cols {
            return Err(err(
                idx + 1,
                format!("expected {cols} entries, found {}", entries.len()),
            ));
        }
        for (c, entry) in entries.iter().enumerate() {
            let (re, im) = entry
                .split_once(':')
                .ok_or_else(|| err(idx + 1, format!("entry {entry:?} is not re:im")))?;
            let re: f64 = re
                .parse()
                .map_err(|_| err(idx + 1, format!("bad real part {re:?}")))?;
            let im: f64 = im
                .parse()
                .map_err(|_| err(idx + 1, format!("bad imaginary part {im:?}")))?;
            matrix[(filled, c)] = Complex64::new(re, im);
        }
        filled += 1;
    }
    if filled != rows {
        return Err(err(0, format!("expected {rows} data rows, found {filled}")));
    }
    Ok(matrix)
}

pub(crate) fn parse_header_field<T: std::str::FromStr>(
    path: &Path,
    header: &[String],
    idx: usize,
    name: &str,
) -> Result<T> {
    header[idx].parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: format!("bad {name} field {:?}", header[idx]),
    })
}

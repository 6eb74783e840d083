//! Matrix Market (`.mtx`) reader and writer for real matrices.
//!
//! Supports the `coordinate` and `array` layouts with `real`, `double` or
//! `integer` fields and `general`, `symmetric` or `skew-symmetric`
//! symmetry. Duplicate coordinate entries are summed and explicit zeros
//! are dropped.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::SparseRowMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

struct Header {
    layout: Layout,
    symmetry: Symmetry,
}

fn parse_banner(path: &Path, line: &str) -> Result<Header> {
    let lower = line.to_ascii_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::format(
            path,
            1,
            "expected `%%MatrixMarket matrix <layout> <field> <symmetry>`",
        ));
    }
    let layout = match tokens[2] {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                what: other.into(),
            })
        }
    };
    match tokens[3] {
        "real" | "double" | "integer" => {}
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                what: other.into(),
            })
        }
    }
    let symmetry = match tokens[4] {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                what: other.into(),
            })
        }
    };
    Ok(Header { layout, symmetry })
}

fn parse_value(path: &Path, lineno: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::format(path, lineno, format!("cannot parse value `{tok}`")))?;
    if !v.is_finite() {
        return Err(Error::format(path, lineno, format!("non-finite value `{tok}`")));
    }
    Ok(v)
}

fn parse_index(path: &Path, lineno: usize, tok: &str, bound: usize) -> Result<usize> {
    let i: usize = tok
        .parse()
        .map_err(|_| Error::format(path, lineno, format!("cannot parse index `{tok}`")))?;
    if i == 0 || i > bound {
        return Err(Error::format(
            path,
            lineno,
            format!("index {i} outside 1..={bound}"),
        ));
    }
    Ok(i - 1)
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseRowMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let header = match lines.next() {
        Some((_, l)) => parse_banner(path, &l.map_err(|e| Error::io(path, e))?)?,
        None => return Err(Error::format(path, 1, "empty file")),
    };

    let mut size: Option<Vec<usize>> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut expected = 0usize;
    let mut seen = 0usize;
    let mut dims = (0usize, 0usize);

    for (k, line) in lines {
        let lineno = k + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        if size.is_none() {
            let want = if header.layout == Layout::Coordinate { 3 } else { 2 };
            if toks.len() != want {
                return Err(Error::format(
                    path,
                    lineno,
                    format!("size line needs {want} fields"),
                ));
            }
            let parsed = toks
                .iter()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(path, lineno, format!("bad size line: {e}")))?;
            dims = (parsed[0], parsed[1]);
            if header.symmetry != Symmetry::General && dims.0 != dims.1 {
                return Err(Error::format(path, lineno, "symmetric matrix must be square"));
            }
            expected = match header.layout {
                Layout::Coordinate => parsed[2],
                Layout::Array => match header.symmetry {
                    Symmetry::General => dims.0 * dims.1,
                    Symmetry::Symmetric => dims.0 * (dims.0 + 1) / 2,
                    Symmetry::Skew => dims.0 * dims.0.saturating_sub(1) / 2,
                },
            };
            size = Some(parsed);
            continue;
        }
        if seen >= expected {
            return Err(Error::format(path, lineno, "more entries than declared"));
        }
        let (i, j, v) = match header.layout {
            Layout::Coordinate => {
                if toks.len() != 3 {
                    return Err(Error::format(path, lineno, "coordinate entry needs 3 fields"));
                }
                (
                    parse_index(path, lineno, toks[0], dims.0)?,
                    parse_index(path, lineno, toks[1], dims.1)?,
                    parse_value(path, lineno, toks[2])?,
                )
            }
            Layout::Array => {
                if toks.len() != 1 {
                    return Err(Error::format(path, lineno, "array entry needs 1 field"));
                }
                let (i, j) = array_position(seen, dims, header.symmetry);
                (i, j, parse_value(path, lineno, toks[0])?)
            }
        };
        seen += 1;
        match header.symmetry {
            Symmetry::General => triplets.push((i, j, v)),
            Symmetry::Symmetric => {
                triplets.push((i, j, v));
                if i != j {
                    triplets.push((j, i, v));
                }
            }
            Symmetry::Skew => {
                if i == j {
                    return Err(Error::format(path, lineno, "skew-symmetric diagonal entry"));
                }
                triplets.push((i, j, v));
                triplets.push((j, i, -v));
            }
        }
    }
    if size.is_none() {
        return Err(Error::format(path, 1, "missing size line"));
    }
    if seen != expected {
        return Err(Error::format(
            path,
            0,
            format!("declared {expected} entries, found {seen}"),
        ));
    }
    SparseRowMatrix::from_triplets(dims.0, dims.1, triplets)
        .map_err(|e| Error::format(path, 0, e.to_string()))
}

/// Position of the `k`-th stored value in column-major array layout.
fn array_position(k: usize, dims: (usize, usize), symmetry: Symmetry) -> (usize, usize) {
    match symmetry {
        Symmetry::General => (k % dims.0, k / dims.0),
        _ => {
            // lower triangle by columns, strictly lower for skew
            let skip = usize::from(symmetry == Symmetry::Skew);
            let mut col = 0;
            let mut rem = k;
            loop {
                let len = dims.0 - col - skip;
                if rem < len {
                    return (col + skip + rem, col);
                }
                rem -= len;
                col += 1;
            }
        }
    }
}

/// Writes `coordinate real general` with round-trip exact values.
pub fn write_matrix_market(path: impl AsRef<Path>, a: &SparseRowMatrix) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "%%MatrixMarket matrix coordinate real general").map_err(io)?;
    writeln!(w, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz()).map_err(io)?;
    for (i, r) in a.rows().enumerate() {
        for (j, v) in r.iter() {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

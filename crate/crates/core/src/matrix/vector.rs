use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Dense real vector (right-hand sides, solutions).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseVector(pub Vec<f64>);

impl DenseVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

const VECTOR_HEADER: &str = "index\tvalue";

/// Writes `index\tvalue` TSV with 17 significant digits.
pub fn write_vector(path: impl AsRef<Path>, v: &DenseVector) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{VECTOR_HEADER}").map_err(io)?;
    for (i, x) in v.0.iter().enumerate() {
        writeln!(w, "{i}\t{x:.16e}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads `index\tvalue` TSV; indices must be `0..len` in order.
pub fn read_vector(path: impl AsRef<Path>) -> Result<DenseVector> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut header_seen = false;
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != VECTOR_HEADER {
                return Err(Error::format(
                    path,
                    lineno,
                    format!("expected header `{VECTOR_HEADER}`"),
                ));
            }
            header_seen = true;
            continue;
        }
        let (i, x) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, lineno, "expected two tab-separated fields"))?;
        let i: usize = i
            .parse()
            .map_err(|e| Error::format(path, lineno, format!("bad index: {e}")))?;
        if i != out.len() {
            return Err(Error::format(
                path,
                lineno,
                format!("expected index {}", out.len()),
            ));
        }
        let x: f64 = x
            .parse()
            .map_err(|e| Error::format(path, lineno, format!("bad value: {e}")))?;
        if !x.is_finite() {
            return Err(Error::format(path, lineno, "non-finite value"));
        }
        out.push(x);
    }
    if !header_seen {
        return Err(Error::format(path, 0, "missing header"));
    }
    Ok(DenseVector(out))
}

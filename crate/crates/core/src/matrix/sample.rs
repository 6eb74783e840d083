use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Diagonal sampling operator stored as `(row_index, weight)` pairs.
///
/// Rows absent from `entries` have weight zero. Entry order is preserved
/// and determines the row order of the materialized matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedRowSample {
    parent_rows: usize,
    entries: Vec<(usize, f64)>,
}

impl WeightedRowSample {
    pub fn new(parent_rows: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut seen = vec![false; parent_rows];
        for &(i, w) in &entries {
            if i >= parent_rows {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: parent_rows,
                });
            }
            if seen[i] {
                return Err(Error::Contract(format!("row {i} appears twice in sample")));
            }
            seen[i] = true;
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Contract(format!("row {i} has weight {w}")));
            }
        }
        Ok(WeightedRowSample { parent_rows, entries })
    }

    /// Every row at weight one.
    pub fn all_rows(parent_rows: usize) -> Self {
        WeightedRowSample {
            parent_rows,
            entries: (0..parent_rows).map(|i| (i, 1.0)).collect(),
        }
    }

    pub fn empty(parent_rows: usize) -> Self {
        WeightedRowSample {
            parent_rows,
            entries: Vec::new(),
        }
    }

    pub fn parent_rows(&self) -> usize {
        self.parent_rows
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn contains(&self, row: usize) -> bool {
        self.entries.iter().any(|e| e.0 == row)
    }

    /// Membership mask over the parent rows.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.parent_rows];
        for &(i, _) in &self.entries {
            m[i] = true;
        }
        m
    }

    /// Same rows, every weight multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.parent_rows,
            self.entries.iter().map(|&(i, w)| (i, w * factor)).collect(),
        )
    }

    /// Composes with an outer sample taken over the rows of this one:
    /// entry `k` of `outer` refers to entry `k` of `self`.
    pub fn compose(&self, outer: &WeightedRowSample) -> Result<Self> {
        if outer.parent_rows != self.entries.len() {
            return Err(Error::Contract(format!(
                "outer sample over {} rows composed with a {}-row sample",
                outer.parent_rows,
                self.entries.len()
            )));
        }
        Self::new(
            self.parent_rows,
            outer
                .entries
                .iter()
                .map(|&(k, w)| {
                    let (i, wi) = self.entries[k];
                    (i, wi * w)
                })
                .collect(),
        )
    }

    /// Entries ordered by row index.
    pub fn sorted(&self) -> Self {
        let mut entries = self.entries.clone();
        entries.sort_by_key(|e| e.0);
        WeightedRowSample {
            parent_rows: self.parent_rows,
            entries,
        }
    }
}

const SAMPLE_HEADER: &str = "row_index\tweight";

/// Writes `S` as TSV: a `# parent_rows=N` line, the `row_index\tweight`
/// header, then one entry per line with 17 significant digits.
pub fn write_sample(path: impl AsRef<Path>, s: &WeightedRowSample) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "# parent_rows={}", s.parent_rows).map_err(io)?;
    writeln!(w, "{SAMPLE_HEADER}").map_err(io)?;
    for &(i, wt) in &s.entries {
        writeln!(w, "{i}\t{wt:.16e}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_sample(path: impl AsRef<Path>) -> Result<WeightedRowSample> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut parent_rows = None;
    let mut header_seen = false;
    let mut entries = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("parent_rows=") {
                let n = v
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::format(path, lineno, format!("bad parent_rows: {e}")))?;
                parent_rows = Some(n);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if !header_seen {
            if line != SAMPLE_HEADER {
                return Err(Error::format(
                    path,
                    lineno,
                    format!("expected header `{SAMPLE_HEADER}`"),
                ));
            }
            header_seen = true;
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(i), Some(w), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::format(path, lineno, "expected two tab-separated fields"));
        };
        let i = i
            .parse::<usize>()
            .map_err(|e| Error::format(path, lineno, format!("bad row index: {e}")))?;
        let w = w
            .parse::<f64>()
            .map_err(|e| Error::format(path, lineno, format!("bad weight: {e}")))?;
        entries.push((i, w));
    }
    if !header_seen {
        return Err(Error::format(path, 0, "missing header"));
    }
    let parent_rows = parent_rows.unwrap_or_else(|| entries.iter().map(|e| e.0 + 1).max().unwrap_or(0));
    WeightedRowSample::new(parent_rows, entries).map_err(|e| Error::format(path, 0, e.to_string()))
}

//! LIBSVM-format parsing and the column-compressed sparse kernels used by
//! every solver.
//!
//! The design matrix is stored column-major because all hot operations
//! (restricted matrix-vector products, the projection step, the Jacobi
//! preconditioner diagonal) touch column subsets. Kernels accumulate in a
//! fixed sequential order so repeated runs are bit-identical.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Immutable m-by-n sparse matrix in compressed-column form.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl DesignMatrix {
    /// Builds a matrix from raw compressed-column arrays, validating the
    /// storage invariants: `col_ptr` nondecreasing with `col_ptr[0] = 0` and
    /// `col_ptr[n] = nnz`, row indices strictly increasing within each column
    /// and `< rows`, all values finite.
    pub fn new(
        rows: usize,
        cols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if col_ptr.len() != cols + 1 || col_ptr[0] != 0 || col_ptr[cols] != row_idx.len() {
            return Err(Error::Config("malformed column pointer array".into()));
        }
        if row_idx.len() != values.len() {
            return Err(Error::Config("row index and value arrays differ in length".into()));
        }
        for j in 0..cols {
            if col_ptr[j] > col_ptr[j + 1] {
                return Err(Error::Config("column pointers must be nondecreasing".into()));
            }
            let rows_j = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            for (k, &r) in rows_j.iter().enumerate() {
                if r >= rows {
                    return Err(Error::Config(format!("row index {r} out of range")));
                }
                if k > 0 && rows_j[k - 1] >= r {
                    return Err(Error::Config(format!(
                        "row indices in column {j} must be strictly increasing"
                    )));
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("matrix values must be finite".into()));
        }
        Ok(Self { rows, cols, col_ptr, row_idx, values })
    }

    /// Builds a matrix from (row, col, value) triplets in arbitrary order.
    /// Duplicate (row, col) pairs are rejected.
    pub fn from_triplets(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; cols + 1];
        for &(r, c, _) in entries {
            if r >= rows || c >= cols {
                return Err(Error::Config(format!("entry ({r}, {c}) out of range")));
            }
            counts[c + 1] += 1;
        }
        for j in 0..cols {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts;
        let nnz = entries.len();
        let mut sorted: Vec<&(usize, usize, f64)> = entries.iter().collect();
        sorted.sort_by_key(|&&(r, c, _)| (c, r));
        let mut row_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (k, &&(r, c, v)) in sorted.iter().enumerate() {
            if k > 0 {
                let &&(pr, pc, _) = &sorted[k - 1];
                if pr == r && pc == c {
                    return Err(Error::Config(format!("duplicate entry at ({r}, {c})")));
                }
            }
            row_idx.push(r);
            values.push(v);
        }
        Self::new(rows, cols, col_ptr, row_idx, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row indices and values of column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[span.clone()], &self.values[span])
    }

    /// Extends the column dimension to `cols` without adding nonzeros.
    pub fn widen_to(&mut self, cols: usize) {
        assert!(cols >= self.cols, "widen_to cannot shrink the matrix");
        let nnz = self.nnz();
        self.col_ptr.resize(cols + 1, nnz);
        self.cols = cols;
    }
}

/// Learning task, which also fixes the label normalization applied while
/// parsing: classification maps raw labels to +1 (positive) or -1
/// (nonpositive); regression passes labels through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

/// A design matrix together with its label vector.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    pub task: Task,
}

impl Dataset {
    pub fn new(x: DesignMatrix, y: Vec<f64>, task: Task) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::Config(format!(
                "label vector length {} does not match row count {}",
                y.len(),
                x.rows()
            )));
        }
        if task == Task::Classification && y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::Config("classification labels must be +1 or -1".into()));
        }
        Ok(Self { x, y, task })
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn cols(&self) -> usize {
        self.x.cols()
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Parses LIBSVM text: one instance per line, an optional leading label
/// token, then whitespace-separated `index:value` pairs with 1-based indices.
/// Lines beginning with `#` are skipped and `\r\n` endings are accepted.
///
/// The column count is the largest feature index seen, or `min_width` if
/// that is larger (used to keep train/test widths in agreement). Duplicate
/// feature indices on one line, indices below 1, and non-finite values are
/// rejected. A line with no label token (first token contains `:`) gets the
/// raw label 0.
pub fn parse_libsvm<R: BufRead>(reader: R, task: Task, min_width: usize) -> Result<Dataset> {
    let mut y = Vec::new();
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut width = min_width;
    let mut row = 0usize;

    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line?;
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }

        let mut tokens = line.split_whitespace().peekable();
        let raw_label = match tokens.peek() {
            Some(tok) if !tok.contains(':') => {
                let tok = tokens.next().unwrap();
                tok.parse::<f64>()
                    .map_err(|_| parse_err(line_no, format!("malformed label `{tok}`")))?
            }
            _ => 0.0,
        };
        if !raw_label.is_finite() {
            return Err(parse_err(line_no, "label must be finite"));
        }
        let label = match task {
            Task::Regression => raw_label,
            Task::Classification => {
                if raw_label > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };

        let mut line_cols: Vec<usize> = Vec::new();
        for tok in tokens {
            let (idx_str, val_str) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line_no, format!("malformed token `{tok}`")))?;
            let idx = idx_str
                .parse::<i64>()
                .map_err(|_| parse_err(line_no, format!("malformed index `{idx_str}`")))?;
            if idx < 1 {
                return Err(parse_err(line_no, format!("feature index {idx} must be >= 1")));
            }
            let val = val_str
                .parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("malformed value `{val_str}`")))?;
            if !val.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value `{val_str}`")));
            }
            let col = (idx - 1) as usize;
            if line_cols.contains(&col) {
                return Err(parse_err(line_no, format!("duplicate feature index {idx}")));
            }
            line_cols.push(col);
            width = width.max(col + 1);
            entries.push((row, col, val));
        }

        y.push(label);
        row += 1;
    }

    let x = DesignMatrix::from_triplets(row, width, &entries)?;
    Dataset::new(x, y, task)
}

/// Writes a dataset back out as LIBSVM text with 1-based indices. Values use
/// the shortest decimal form that round-trips, so parsing the output yields
/// an identical dataset.
pub fn write_libsvm<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    let x = &dataset.x;
    // Gather per-row entries from the column-major storage.
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); x.rows()];
    for j in 0..x.cols() {
        let (idx, vals) = x.column(j);
        for (&r, &v) in idx.iter().zip(vals) {
            rows[r].push((j, v));
        }
    }
    for (r, feats) in rows.iter().enumerate() {
        write!(out, "{}", dataset.y[r])?;
        for &(j, v) in feats {
            write!(out, " {}:{}", j + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Restricted product `X[:, J] v`: touches only the columns listed in `cols`.
///
/// `cols` must be sorted with entries below the column count and
/// `v.len() == cols.len()`.
pub fn matvec_cols(x: &DesignMatrix, cols: &[usize], v: &[f64]) -> Vec<f64> {
    assert_eq!(cols.len(), v.len(), "coefficient length must match column list");
    debug_assert!(cols.windows(2).all(|w| w[0] < w[1]), "column list must be sorted");
    let mut out = vec![0.0; x.rows()];
    for (k, &j) in cols.iter().enumerate() {
        let (idx, vals) = x.column(j);
        let vk = v[k];
        for (&r, &xv) in idx.iter().zip(vals) {
            out[r] += xv * vk;
        }
    }
    out
}

/// Restricted adjoint `(X^T u)_J`: the dot product of each listed column
/// with `u`.
pub fn transpose_matvec_cols(x: &DesignMatrix, cols: &[usize], u: &[f64]) -> Vec<f64> {
    assert_eq!(u.len(), x.rows(), "vector length must match row count");
    debug_assert!(cols.windows(2).all(|w| w[0] < w[1]), "column list must be sorted");
    cols.iter()
        .map(|&j| {
            let (idx, vals) = x.column(j);
            idx.iter().zip(vals).map(|(&r, &xv)| xv * u[r]).sum()
        })
        .collect()
}

/// Weighted squared column norms `sum_i wts[i] * X[i, j]^2` for each listed
/// column; the diagonal of the restricted generalized Hessian.
pub fn col_weighted_sqnorms(x: &DesignMatrix, cols: &[usize], wts: &[f64]) -> Vec<f64> {
    assert_eq!(wts.len(), x.rows(), "weight length must match row count");
    cols.iter()
        .map(|&j| {
            let (idx, vals) = x.column(j);
            idx.iter().zip(vals).map(|(&r, &xv)| wts[r] * xv * xv).sum()
        })
        .collect()
}

/// Deterministic shuffled split: the first part receives `ceil(fraction * m)`
/// rows. The same seed always produces the same split; column structure is
/// rebuilt for each part.
pub fn split_train_test(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction {fraction} must lie in (0, 1)")));
    }
    let m = dataset.rows();
    if m < 2 {
        return Err(Error::Config("need at least two rows to split".into()));
    }
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let head = (fraction * m as f64).ceil() as usize;
    let take_rows = |picked: &[usize]| -> Result<Dataset> {
        // new_row[old] = position within the part, usize::MAX if dropped
        let mut new_row = vec![usize::MAX; m];
        for (new, &old) in picked.iter().enumerate() {
            new_row[old] = new;
        }
        let x = &dataset.x;
        let mut entries = Vec::new();
        for j in 0..x.cols() {
            let (idx, vals) = x.column(j);
            for (&r, &v) in idx.iter().zip(vals) {
                if new_row[r] != usize::MAX {
                    entries.push((new_row[r], j, v));
                }
            }
        }
        let part = DesignMatrix::from_triplets(picked.len(), x.cols(), &entries)?;
        let y = picked.iter().map(|&r| dataset.y[r]).collect();
        Dataset::new(part, y, dataset.task)
    };
    Ok((take_rows(&order[..head])?, take_rows(&order[head..])?))
}

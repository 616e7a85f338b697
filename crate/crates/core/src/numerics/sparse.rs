use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::{Error, Result};

/// Compressed-sparse-row matrix.
///
/// Column indices are strictly increasing within a row and `row_offsets`
/// has `rows + 1` nondecreasing entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Validates raw CSR arrays.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return Err(Error::invalid(
                "row offsets must have rows+1 entries starting at 0",
            ));
        }
        if row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("row offsets must be nondecreasing"));
        }
        let nnz = *row_offsets.last().unwrap();
        if col_indices.len() != nnz || values.len() != nnz {
            return Err(Error::invalid(format!(
                "expected {nnz} stored entries, got {} indices and {} values",
                col_indices.len(),
                values.len()
            )));
        }
        for r in 0..rows {
            let idx = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "column indices of row {r} are not strictly increasing"
                )));
            }
            if idx.last().is_some_and(|&c| c >= cols) {
                return Err(Error::invalid(format!(
                    "column index out of range in row {r}"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sparse values must be finite"));
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::invalid(format!(
                "triplet ({r}, {c}) outside a {rows}x{cols} matrix"
            )));
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self::from_csr(rows, cols, row_offsets, col_indices, values)
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let triplets = (0..m.rows())
            .flat_map(|r| (0..m.cols()).map(move |c| (r, c)))
            .map(|(r, c)| (r, c, m[(r, c)]))
            .filter(|&(_, _, v)| v != 0.0);
        Self::from_triplets(m.rows(), m.cols(), triplets).expect("dense entries are in range")
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(col, value)` pairs stored in row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_offsets[r + 1] - self.row_offsets[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[(r, c)] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let triplets = (0..self.rows).flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)));
        Self::from_triplets(self.cols, self.rows, triplets).expect("transpose stays in range")
    }

    pub fn spmm(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        spmm(self, b)
    }
}

/// Sparse × dense product.
///
/// Each output row is accumulated in stored-column order, so the result does
/// not depend on how rows are scheduled.
pub fn spmm(a: &SparseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows() {
        return Err(Error::shape(
            "spmm",
            format!("dense operand with {} rows", a.cols),
            b.rows(),
        ));
    }
    let d = b.cols();
    let mut out = DenseMatrix::zeros(a.rows, d);
    for r in 0..a.rows {
        let out_row = out.row_mut(r);
        for (c, v) in a.row(r) {
            for (o, x) in out_row.iter_mut().zip(b.row(c)) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}

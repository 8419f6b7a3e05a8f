//! Compressed sparse row matrices with sorted column indices.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= rows || c >= cols {
                return Err(Error::Validation(format!(
                    "triplet ({r},{c}) outside {rows}x{cols}"
                )));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds from per-row `(col, value)` lists; each row is sorted here.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut row in rows.iter().cloned() {
            row.sort_by_key(|e| e.0);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Validation(format!("duplicate column {}", w[0].0)));
                }
            }
            for (c, v) in row {
                if c >= cols {
                    return Err(Error::Validation(format!("column {c} outside width {cols}")));
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            row_ptr,
            col_idx,
            values,
        })
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// Row index of every stored entry, aligned with `col_idx`.
    pub fn entry_rows(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            out.extend(std::iter::repeat_n(r, self.row_nnz(r)));
        }
        out
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                next[c] += 1;
                col_idx[slot] = r;
                values[slot] = v;
            }
        }
        Csr {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Same sparsity pattern, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Csr> {
        if values.len() != self.nnz() {
            return Err(Error::dim("with_values", &[self.nnz()], &[values.len()]));
        }
        Ok(Csr {
            values,
            ..self.clone()
        })
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Csr {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &r in rows {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            col_idx.extend_from_slice(&self.col_idx[span.clone()]);
            values.extend_from_slice(&self.values[span]);
            row_ptr.push(col_idx.len());
        }
        Csr {
            rows: rows.len(),
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Drops every entry in rows where `keep[r]` is false.
    pub fn zero_rows(&self, keep: &[bool]) -> Csr {
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (r, &k) in keep.iter().enumerate().take(self.rows) {
            if k {
                let span = self.row_ptr[r]..self.row_ptr[r + 1];
                col_idx.extend_from_slice(&self.col_idx[span.clone()]);
                values.extend_from_slice(&self.values[span]);
            }
            row_ptr.push(col_idx.len());
        }
        Csr {
            rows: self.rows,
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| self.row(r).all(|(c, v)| (self.get(c, r) - v).abs() <= tol))
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.rows.max(1), self.cols.max(1));
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                t.set(r, c, v);
            }
        }
        t
    }

    /// `self · x` accumulated into `out` (`x` is `cols × n`, `out` is `rows × n`).
    pub fn spmm_acc(&self, x: &[f64], n: usize, out: &mut [f64]) {
        for r in 0..self.rows {
            let out_row = &mut out[r * n..(r + 1) * n];
            for (c, v) in self.row(r) {
                let x_row = &x[c * n..(c + 1) * n];
                if v == 1.0 {
                    for (o, &xv) in out_row.iter_mut().zip(x_row) {
                        *o += xv;
                    }
                } else {
                    for (o, &xv) in out_row.iter_mut().zip(x_row) {
                        *o += v * xv;
                    }
                }
            }
        }
    }

    pub fn spmm(&self, x: &Tensor) -> Result<Tensor> {
        let (xr, n) = x.dims2();
        if xr != self.cols {
            return Err(Error::dim("spmm", &[self.rows, self.cols], x.shape()));
        }
        let mut out = vec![0.0; self.rows * n];
        self.spmm_acc(x.data(), n, &mut out);
        Tensor::matrix(self.rows, n, out)
    }

    /// Per-row L2 norms.
    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).map(|(_, v)| v * v).sum::<f64>().sqrt())
            .collect()
    }
}

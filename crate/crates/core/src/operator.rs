//! Compressed-row storage for the symmetric stencil operators used throughout
//! the crate.

use serde::{Deserialize, Serialize};

/// Finite-difference stencil the operator was assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stencil {
    ThreePoint,
    FivePoint,
}

/// Sparse square matrix over the interior nodes of a grid.
///
/// Column indices within a row are sorted, and the diagonal entry is always
/// stored explicitly, so [`SparseOperator::diagonal`] never has to search.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag_pos: Vec<usize>,
    stencil: Stencil,
}

impl SparseOperator {
    /// Builds an operator from per-row `(column, value)` lists. Rows are sorted
    /// and duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, stencil: Stencil) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag_pos = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            if !row.iter().any(|&(j, _)| j == i) {
                row.push((i, 0.0));
            }
            row.sort_by_key(|&(j, _)| j);
            let start = cols.len();
            for (j, v) in row {
                assert!(j < n, "column {j} out of range for {n}x{n} operator");
                if cols.len() > start && *cols.last().unwrap() == j {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                }
            }
            let d = start + cols[start..].iter().position(|&j| j == i).unwrap();
            diag_pos.push(d);
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals, diag_pos, stencil }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    /// `(column, value)` pairs of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.diag_pos.iter().map(|&k| self.vals[k]).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    /// `⟨A x, x⟩`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Copy with `extra[i]` added to each diagonal entry.
    pub fn with_added_diagonal(&self, extra: &[f64]) -> Self {
        assert_eq!(extra.len(), self.n);
        let mut out = self.clone();
        for (i, &k) in self.diag_pos.iter().enumerate() {
            out.vals[k] += extra[i];
        }
        out
    }

    /// Largest absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_diagonal(&self) -> f64 {
        self.diagonal().into_iter().fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| {
            self.row(i).all(|(j, v)| {
                let w = self.get(j, i);
                (v - w).abs() <= tol * v.abs().max(w.abs()).max(f64::MIN_POSITIVE)
            })
        })
    }

    /// Positive diagonal, non-positive off-diagonal entries, weak row
    /// diagonal dominance with at least one strictly dominant row.
    ///
    /// Irreducibility is not checked separately: every operator built here
    /// comes from a connected stencil.
    pub fn is_m_matrix(&self) -> bool {
        let mut strict = false;
        for i in 0..self.n {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (j, v) in self.row(i) {
                if i == j {
                    diag = v;
                } else if v > 0.0 {
                    return false;
                } else {
                    off -= v;
                }
            }
            if diag <= 0.0 {
                return false;
            }
            let slack = diag - off;
            if slack < -1e-12 * diag {
                return false;
            }
            if slack > 1e-12 * diag {
                strict = true;
            }
        }
        strict
    }

    /// Row-major dense copy; intended for small oracle problems only.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> SparseOperator {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        SparseOperator::from_rows(rows, Stencil::ThreePoint)
    }

    #[test]
    fn duplicates_are_summed_and_rows_sorted() {
        let a = SparseOperator::from_rows(
            vec![vec![(1, -1.0), (0, 1.0), (0, 1.0)], vec![(0, -1.0), (1, 2.0)]],
            Stencil::ThreePoint,
        );
        assert_eq!(a.get(0, 0), 2.0);
        assert_eq!(a.row(0).collect::<Vec<_>>(), vec![(0, 2.0), (1, -1.0)]);
        assert_eq!(a.nnz(), 4);
    }

    #[test]
    fn missing_diagonal_is_stored_as_zero() {
        let a = SparseOperator::from_rows(vec![vec![(1, 1.0)], vec![(0, 1.0)]], Stencil::ThreePoint);
        assert_eq!(a.diagonal(), vec![0.0, 0.0]);
        assert!(!a.is_m_matrix());
    }

    #[test]
    fn tridiagonal_is_symmetric_m_matrix() {
        let a = tridiag(5);
        assert!(a.is_symmetric(0.0));
        assert!(a.is_m_matrix());
        assert_eq!(a.inf_norm(), 4.0);
        assert_eq!(a.apply(&[1.0; 5]), vec![1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn added_diagonal_keeps_pattern() {
        let a = tridiag(3).with_added_diagonal(&[1.0, 2.0, 3.0]);
        assert_eq!(a.diagonal(), vec![3.0, 4.0, 5.0]);
        assert_eq!(a.nnz(), 7);
    }
}

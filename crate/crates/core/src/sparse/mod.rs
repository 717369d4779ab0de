//! Sparse symmetric matrices and the solvers built on them.
//!
//! Matrices are stored in compressed-row form with both triangles present.
//! Factorizations are immutable once built, so one factor may serve any
//! number of concurrent right-hand sides.

mod eigen;
mod ldl;
mod minres;
mod ordering;

pub use eigen::{lowest_eigenpairs, EigenOptions, EigenPairs};
pub use ldl::{solve_refined, LdlFactor, Symbolic};
pub use minres::{minres, MinresOutcome};
pub use ordering::{nested_dissection, reverse_cuthill_mckee};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrices do not share a sparsity pattern")]
    PatternMismatch,
    #[error("index ({0}, {1}) out of range")]
    OutOfRange(usize, usize),
    #[error("zero pivot at step {index} (|d| = {value:e}); the matrix is singular to working precision")]
    ZeroPivot { index: usize, value: f64 },
    #[error("solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
    #[error("eigensolver did not converge after {iterations} iterations (max change {change:e})")]
    EigenNotConverged { iterations: usize, change: f64 },
    #[error("invalid request: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, SparseError>;

/// Square sparse matrix in compressed-row storage with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from coordinate triplets; duplicates are summed in input order.
    pub fn from_triplets(n: usize, rows: &[usize], cols: &[usize], vals: &[f64]) -> Result<Self> {
        if rows.len() != cols.len() || rows.len() != vals.len() {
            return Err(SparseError::DimensionMismatch {
                expected: rows.len(),
                got: cols.len().min(vals.len()),
            });
        }
        let mut counts = vec![0usize; n + 1];
        for (&r, &c) in rows.iter().zip(cols) {
            if r >= n || c >= n {
                return Err(SparseError::OutOfRange(r, c));
            }
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut order = vec![0usize; rows.len()];
        for (t, &r) in rows.iter().enumerate() {
            order[next[r]] = t;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        indptr.push(0);
        let mut row_buf: Vec<(usize, usize)> = Vec::new();
        for r in 0..n {
            row_buf.clear();
            row_buf.extend(order[counts[r]..counts[r + 1]].iter().map(|&t| (cols[t], t)));
            row_buf.sort_by_key(|&(c, t)| (c, t));
            let mut last = usize::MAX;
            for &(c, t) in &row_buf {
                if c == last {
                    *values.last_mut().unwrap() += vals[t];
                } else {
                    indices.push(c);
                    values.push(vals[t]);
                    last = c;
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            n,
            indptr,
            indices,
            values,
        })
    }

    /// A structural pattern with all values zero.
    pub fn from_pattern(n: usize, indptr: Vec<usize>, indices: Vec<usize>) -> Result<Self> {
        if indptr.len() != n + 1 || *indptr.last().unwrap_or(&0) != indices.len() {
            return Err(SparseError::Invalid("malformed row pointer".into()));
        }
        let values = vec![0.0; indices.len()];
        Ok(Self {
            n,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    /// Storage position of entry `(i, j)`, if structurally present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (cols, _) = self.row(i);
        cols.binary_search(&j).ok().map(|k| self.indptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n {
            Ok(())
        } else {
            Err(SparseError::DimensionMismatch {
                expected: self.n,
                got: len,
            })
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[p] * x[self.indices[p]];
            }
            *yi = s;
        }
    }

    /// `u^T A v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_len(u.len())?;
        let av = self.matvec(v)?;
        Ok(dot(u, &av))
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.n == other.n && self.indptr == other.indptr && self.indices == other.indices
    }

    /// `a A + b B`. Matrices sharing one pattern keep it; otherwise the
    /// patterns are merged.
    pub fn lin_comb(a: f64, ma: &CsrMatrix, b: f64, mb: &CsrMatrix) -> Result<CsrMatrix> {
        if ma.n != mb.n {
            return Err(SparseError::DimensionMismatch {
                expected: ma.n,
                got: mb.n,
            });
        }
        if ma.same_pattern(mb) {
            let values = ma
                .values
                .iter()
                .zip(&mb.values)
                .map(|(x, y)| a * x + b * y)
                .collect();
            return Ok(CsrMatrix {
                values,
                ..ma.clone()
            });
        }
        let (mut r, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for (scale, m) in [(a, ma), (b, mb)] {
            for i in 0..m.n {
                for p in m.indptr[i]..m.indptr[i + 1] {
                    r.push(i);
                    c.push(m.indices[p]);
                    v.push(scale * m.values[p]);
                }
            }
        }
        CsrMatrix::from_triplets(ma.n, &r, &c, &v)
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[p];
                worst = worst.max((self.values[p] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Restriction to the rows and columns in `keep` (in that order).
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut indptr = Vec::with_capacity(keep.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for &i in keep {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = map[self.indices[p]];
                if j != usize::MAX {
                    row.push((j, self.values[p]));
                }
            }
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            n: keep.len(),
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                d[(i, self.indices[p])] += self.values[p];
            }
        }
        d
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::CsrMatrix;

    /// Periodic 5-point Laplacian on an `m x m` grid plus `shift * I`.
    pub fn periodic_laplacian(m: usize, shift: f64) -> CsrMatrix {
        let n = m * m;
        let (mut r, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..m {
            for j in 0..m {
                let k = i * m + j;
                r.push(k);
                c.push(k);
                v.push(4.0 + shift);
                for (di, dj) in [(1, 0), (m - 1, 0), (0, 1), (0, m - 1)] {
                    let q = ((i + di) % m) * m + (j + dj) % m;
                    r.push(k);
                    c.push(q);
                    v.push(-1.0);
                }
            }
        }
        CsrMatrix::from_triplets(n, &r, &c, &v).unwrap()
    }
}

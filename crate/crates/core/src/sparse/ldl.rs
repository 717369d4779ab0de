//! Up-looking sparse `L D L^T` factorization without pivoting.
//!
//! The symbolic phase (ordering, elimination tree, column counts) depends only
//! on the pattern and is shared by every matrix with that pattern, e.g. all
//! shifts `K - lambda M`.

use std::sync::Arc;

use super::{norm2, ordering::nested_dissection, CsrMatrix, Result, SparseError};

const NONE: usize = usize::MAX;

/// Pivot magnitudes below this fraction of the largest diagonal entry are
/// treated as zero.
const PIVOT_TOL: f64 = 1e-13;

/// Pattern analysis reusable across numeric factorizations.
#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    parent: Vec<usize>,
    lp: Vec<usize>,
}

impl Symbolic {
    pub fn analyse(a: &CsrMatrix) -> Self {
        let perm = nested_dissection(a);
        Self::with_ordering(a, perm)
    }

    pub fn with_ordering(a: &CsrMatrix, perm: Vec<usize>) -> Self {
        let n = a.nrows();
        let mut pinv = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            pinv[i] = k;
        }
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            let kk = perm[k];
            for &col in a.row(kk).0 {
                let mut i = pinv[col];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        Self {
            n,
            indptr: a.indptr().to_vec(),
            indices: a.indices().to_vec(),
            perm,
            pinv,
            parent,
            lp,
        }
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    fn matches(&self, a: &CsrMatrix) -> bool {
        a.nrows() == self.n && a.indptr() == self.indptr && a.indices() == self.indices
    }
}

/// Numeric factor `P A P^T = L D L^T`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    symbolic: Arc<Symbolic>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl LdlFactor {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        Self::factor_with(Arc::new(Symbolic::analyse(a)), a)
    }

    pub fn factor_with(symbolic: Arc<Symbolic>, a: &CsrMatrix) -> Result<Self> {
        if !symbolic.matches(a) {
            return Err(SparseError::PatternMismatch);
        }
        let s = &*symbolic;
        let n = s.n;
        let nnz = s.factor_nnz();
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            y[k] = 0.0;
            let mut top = n;
            flag[k] = k;
            let kk = s.perm[k];
            let (cols, vals) = a.row(kk);
            for (&col, &v) in cols.iter().zip(vals) {
                let mut i = s.pinv[col];
                if i <= k {
                    y[i] += v;
                    let mut len = 0;
                    while flag[i] != k {
                        pattern[len] = i;
                        len += 1;
                        flag[i] = k;
                        i = s.parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        pattern[top] = pattern[len];
                    }
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let start = s.lp[i];
                let end = start + lnz[i];
                for p in start..end {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[end] = k;
                lx[end] = l_ki;
                lnz[i] += 1;
            }
            if !(d[k].abs() > PIVOT_TOL * scale) {
                return Err(SparseError::ZeroPivot {
                    index: k,
                    value: d[k].abs(),
                });
            }
        }
        Ok(Self {
            symbolic,
            li,
            lx,
            d,
        })
    }

    pub fn symbolic(&self) -> &Arc<Symbolic> {
        &self.symbolic
    }

    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    /// Number of negative pivots, which by Sylvester's law of inertia equals
    /// the number of negative eigenvalues of `A`.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    /// One forward/diagonal/backward sweep. Reentrant.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let s = &*self.symbolic;
        if b.len() != s.n {
            return Err(SparseError::DimensionMismatch {
                expected: s.n,
                got: b.len(),
            });
        }
        let mut x: Vec<f64> = s.perm.iter().map(|&i| b[i]).collect();
        for j in 0..s.n {
            let xj = x[j];
            for p in s.lp[j]..s.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for (xj, dj) in x.iter_mut().zip(&self.d) {
            *xj /= dj;
        }
        for j in (0..s.n).rev() {
            let mut xj = x[j];
            for p in s.lp[j]..s.lp[j + 1] {
                xj -= self.lx[p] * x[self.li[p]];
            }
            x[j] = xj;
        }
        let mut out = vec![0.0; s.n];
        for (k, &i) in s.perm.iter().enumerate() {
            out[i] = x[k];
        }
        Ok(out)
    }
}

/// Solves `A x = b` with the factor and iterative refinement until the
/// relative residual `|b - A x| / |b|` is at most `tol`. Returns the solution
/// and the achieved relative residual.
pub fn solve_refined(a: &CsrMatrix, factor: &LdlFactor, b: &[f64], tol: f64) -> Result<(Vec<f64>, f64)> {
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; b.len()], 0.0));
    }
    let mut x = factor.solve(b)?;
    let mut r = vec![0.0; b.len()];
    let mut residual = f64::INFINITY;
    for it in 0..12 {
        a.matvec_into(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let rel = norm2(&r) / bnorm;
        if rel <= tol {
            return Ok((x, rel));
        }
        if rel >= residual && it > 2 {
            break;
        }
        residual = rel;
        let dx = factor.solve(&r)?;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
    a.matvec_into(&x, &mut r);
    let rel = norm2(
        &r.iter().zip(b).map(|(ri, bi)| bi - ri).collect::<Vec<_>>(),
    ) / bnorm;
    if rel <= tol {
        Ok((x, rel))
    } else {
        Err(SparseError::NotConverged {
            residual: rel,
            iterations: 12,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::test_util::periodic_laplacian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_dense_solution() {
        let a = periodic_laplacian(12, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: Vec<f64> = (0..144).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = LdlFactor::factor(&a).unwrap();
        let x = f.solve(&b).unwrap();
        let dense = a.to_dense().lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        for (u, v) in x.iter().zip(dense.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
        assert_eq!(f.negative_pivots(), 0);
    }

    #[test]
    fn inertia_counts_negative_eigenvalues() {
        // eigenvalues of the periodic grid Laplacian are 4 - 2cos(a) - 2cos(b)
        let m = 10;
        let shift = -1.5;
        let a = periodic_laplacian(m, shift);
        let mut below = 0;
        for p in 0..m {
            for q in 0..m {
                let t = 2.0 * std::f64::consts::PI / m as f64;
                let lam = 4.0 - 2.0 * (t * p as f64).cos() - 2.0 * (t * q as f64).cos();
                if lam + shift < 0.0 {
                    below += 1;
                }
            }
        }
        let f = LdlFactor::factor(&a).unwrap();
        assert_eq!(f.negative_pivots(), below);
        let b = vec![1.0; m * m];
        let (x, res) = solve_refined(&a, &f, &b, 1e-12).unwrap();
        assert!(res <= 1e-12);
        assert!((x[0] - 1.0 / shift).abs() < 1e-10);
    }

    #[test]
    fn singular_matrix_reports_zero_pivot() {
        let a = periodic_laplacian(8, 0.0);
        assert!(matches!(LdlFactor::factor(&a), Err(SparseError::ZeroPivot { .. })));
    }

    #[test]
    fn symbolic_reuse_and_pattern_check() {
        let a = periodic_laplacian(20, 0.5);
        let f = LdlFactor::factor(&a).unwrap();
        let b2 = periodic_laplacian(20, 2.0);
        let f2 = LdlFactor::factor_with(f.symbolic().clone(), &b2).unwrap();
        let x = f2.solve(&vec![1.0; 400]).unwrap();
        assert!((x[7] - 0.5).abs() < 1e-12);
        assert!(matches!(
            LdlFactor::factor_with(f.symbolic().clone(), &CsrMatrix::identity(400)),
            Err(SparseError::PatternMismatch)
        ));
        // nested dissection keeps fill well below the dense bound
        assert!(f.symbolic().factor_nnz() < 400 * 60);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = periodic_laplacian(5, 1.0);
        let f = LdlFactor::factor(&a).unwrap();
        let (x, r) = solve_refined(&a, &f, &[0.0; 25], 1e-10).unwrap();
        assert!(x.iter().all(|&v| v == 0.0) && r == 0.0);
    }
}

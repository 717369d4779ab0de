//! Lowest eigenpairs of `K v = lambda M v` by shift-invert block subspace
//! iteration with Rayleigh–Ritz projection.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CsrMatrix, LdlFactor, Result, SparseError, Symbolic};

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOptions {
    /// Shift `sigma`; `K - sigma M` must be nonsingular.
    pub shift: f64,
    /// Relative change of the wanted Ritz values that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            shift: -1.0,
            tol: 1e-10,
            max_iter: 1000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// M-orthonormal eigenvectors, one per value.
    pub vectors: Vec<Vec<f64>>,
    /// `|K v - lambda M v| / ((1 + |lambda|) |M v|)` per pair.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// `n` eigenpairs of `K v = lambda M v` by shift-invert subspace iteration,
/// sorted ascending. The block converges to the eigenvalues nearest the
/// shift, so a shift below the spectrum yields the lowest ones.
pub fn lowest_eigenpairs(
    k: &CsrMatrix,
    m: &CsrMatrix,
    n: usize,
    opts: &EigenOptions,
) -> Result<EigenPairs> {
    let dim = k.nrows();
    if n == 0 || n > 50 || n >= dim {
        return Err(SparseError::Invalid(format!("cannot compute {n} eigenpairs of a {dim}-dimensional problem")));
    }
    let block = (n + (n / 2).max(4)).min(dim);
    let shifted = CsrMatrix::lin_comb(1.0, k, -opts.shift, m)?;
    let factor = LdlFactor::factor_with(Arc::new(Symbolic::analyse(&shifted)), &shifted)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut prev: Option<Vec<f64>> = None;
    let mut last_change = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        // Y = (K - sigma M)^{-1} M X
        let y: Vec<Vec<f64>> = x
            .par_iter()
            .map(|xi| m.matvec(xi).and_then(|mx| factor.solve(&mx)))
            .collect::<Result<_>>()?;
        let (values, vectors) = rayleigh_ritz(k, m, &y)?;
        x = vectors;
        if let Some(p) = &prev {
            last_change = (0..n)
                .map(|i| (values[i] - p[i]).abs() / (1.0 + values[i].abs()))
                .fold(0.0, f64::max);
            if last_change <= opts.tol && iter >= 3 {
                let residuals = (0..n).map(|i| residual(k, m, values[i], &x[i])).collect();
                x.truncate(n);
                return Ok(EigenPairs {
                    values: values[..n].to_vec(),
                    vectors: x,
                    residuals,
                    iterations: iter,
                });
            }
        }
        prev = Some(values);
    }
    Err(SparseError::EigenNotConverged {
        iterations: opts.max_iter,
        change: last_change,
    })
}

/// Projects onto `span(y)` and returns ascending Ritz values with
/// M-orthonormal Ritz vectors.
fn rayleigh_ritz(k: &CsrMatrix, m: &CsrMatrix, y: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = y.len();
    let ky: Vec<Vec<f64>> = y.par_iter().map(|v| k.matvec(v)).collect::<Result<_>>()?;
    let my: Vec<Vec<f64>> = y.par_iter().map(|v| m.matvec(v)).collect::<Result<_>>()?;
    let kp = DMatrix::from_fn(p, p, |i, j| super::dot(&y[i], &ky[j]));
    let mp = DMatrix::from_fn(p, p, |i, j| super::dot(&y[i], &my[j]));
    let kp = (&kp + kp.transpose()) * 0.5;
    let mp = (&mp + mp.transpose()) * 0.5;
    let chol = mp
        .cholesky()
        .ok_or_else(|| SparseError::Invalid("subspace basis lost rank".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| SparseError::Invalid("subspace basis lost rank".into()))?;
    let c = &linv * kp * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // coefficients of the Ritz vectors in the y basis: L^{-T} Z
    let coeffs = linv.transpose() * &eig.eigenvectors;
    let dim = y[0].len();
    let vectors: Vec<Vec<f64>> = order
        .par_iter()
        .map(|&col| {
            let mut v = vec![0.0; dim];
            for (i, yi) in y.iter().enumerate() {
                let c = coeffs[(i, col)];
                for (vj, yj) in v.iter_mut().zip(yi) {
                    *vj += c * yj;
                }
            }
            v
        })
        .collect();
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok((values, vectors))
}

fn residual(k: &CsrMatrix, m: &CsrMatrix, lambda: f64, v: &[f64]) -> f64 {
    let kv = k.matvec(v).unwrap_or_default();
    let mv = m.matvec(v).unwrap_or_default();
    let r: Vec<f64> = kv.iter().zip(&mv).map(|(a, b)| a - lambda * b).collect();
    super::norm2(&r) / ((1.0 + lambda.abs()) * super::norm2(&mv)).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::test_util::periodic_laplacian;

    #[test]
    fn grid_laplacian_spectrum() {
        let mm = 16;
        let k = periodic_laplacian(mm, 0.0);
        let m = CsrMatrix::identity(mm * mm);
        let res = lowest_eigenpairs(&k, &m, 6, &EigenOptions::default()).unwrap();
        let t = 2.0 * std::f64::consts::PI / mm as f64;
        let l1 = 2.0 - 2.0 * t.cos();
        let l2 = 2.0 * l1;
        let want = [0.0, l1, l1, l1, l1, l2];
        for (got, w) in res.values.iter().zip(want) {
            assert!((got - w).abs() < 1e-9, "{got} vs {w}");
        }
        assert!(res.residuals.iter().all(|&r| r < 1e-5));
        // deterministic
        let again = lowest_eigenpairs(&k, &m, 6, &EigenOptions::default()).unwrap();
        assert_eq!(res.values, again.values);
    }

    #[test]
    fn rejects_bad_requests() {
        let k = periodic_laplacian(4, 0.0);
        let m = CsrMatrix::identity(16);
        assert!(lowest_eigenpairs(&k, &m, 0, &EigenOptions::default()).is_err());
        assert!(lowest_eigenpairs(&k, &m, 51, &EigenOptions::default()).is_err());
    }
}

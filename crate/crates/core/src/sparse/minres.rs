//! MINRES for symmetric, possibly indefinite systems, preconditioned with the
//! absolute diagonal.

use super::{dot, norm2, CsrMatrix, Result, SparseError};

#[derive(Debug, Clone, PartialEq)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `A x = b` to relative residual `tol` (measured in the 2-norm).
pub fn minres(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<MinresOutcome> {
    let n = a.nrows();
    if b.len() != n {
        return Err(SparseError::DimensionMismatch { expected: n, got: b.len() });
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(MinresOutcome { x: vec![0.0; n], residual: 0.0, iterations: 0 });
    }
    let minv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|d| if d.abs() > 0.0 { 1.0 / d.abs() } else { 1.0 })
        .collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&minv).map(|(x, m)| x * m).collect() };

    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut y = precond(&r1);
    let mut beta1 = dot(&r1, &y);
    if beta1 <= 0.0 {
        return Err(SparseError::Invalid("preconditioner is not positive definite".into()));
    }
    beta1 = beta1.sqrt();
    let mut r2 = r1.clone();
    let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut av = vec![0.0; n];
    let mut outcome_res = 1.0;
    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        let v: Vec<f64> = y.iter().map(|yi| s * yi).collect();
        a.matvec_into(&v, &mut av);
        if itn >= 2 {
            let c = beta / oldb;
            for (yi, ri) in av.iter_mut().zip(&r1) {
                *yi -= c * ri;
            }
        }
        let alfa = dot(&v, &av);
        let c = alfa / beta;
        for (yi, ri) in av.iter_mut().zip(&r2) {
            *yi -= c * ri;
        }
        r1 = std::mem::replace(&mut r2, av.clone());
        y = precond(&r2);
        oldb = beta;
        beta = dot(&r2, &y);
        if beta < 0.0 {
            return Err(SparseError::Invalid("preconditioner is not positive definite".into()));
        }
        beta = beta.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        let w1 = std::mem::replace(&mut w2, w.clone());
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        // the recurrence estimates the preconditioned residual; confirm with
        // the true residual before stopping
        if phibar / beta1 <= tol || itn % 50 == 0 || itn == max_iter {
            a.matvec_into(&x, &mut av);
            let res = norm2(&av.iter().zip(b).map(|(ax, bi)| bi - ax).collect::<Vec<_>>()) / bnorm;
            outcome_res = res;
            if res <= tol {
                return Ok(MinresOutcome { x, residual: res, iterations: itn });
            }
        }
    }
    Err(SparseError::NotConverged { residual: outcome_res, iterations: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::test_util::periodic_laplacian;

    #[test]
    fn solves_definite_and_indefinite_systems() {
        for shift in [0.5, -0.7] {
            let a = periodic_laplacian(30, shift);
            let b: Vec<f64> = (0..900).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
            let out = minres(&a, &b, 1e-10, 5000).unwrap();
            assert!(out.residual <= 1e-10);
            let ax = a.matvec(&out.x).unwrap();
            let r: f64 = ax.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            assert!(r <= 1e-10 * norm2(&b) * 1.0001);
        }
    }

    #[test]
    fn zero_rhs() {
        let a = periodic_laplacian(4, 1.0);
        assert_eq!(minres(&a, &[0.0; 16], 1e-10, 10).unwrap().iterations, 0);
    }
}

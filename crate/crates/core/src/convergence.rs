//! Experiment harness: sweeps over the hole radius comparing `u_eps |_V` with
//! the full-torus reference, resolvent sweeps over real spectral parameters,
//! and the `a / ln(1/eps) + b` fit.
//!
//! Cases for different `eps` run concurrently; reports are assembled in
//! `eps` order.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Link, ManifoldModel};
use crate::helmholtz::{Discretization, HelmholtzError, HelmholtzProblem, Source, SpectrumReport};
use crate::mesh::{build_mesh, restrict, Mesh, MeshError, PointLocator, RegionWindow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvergenceError {
    #[error("eps list must be non-empty, strictly decreasing and below R")]
    BadEpsList,
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("need at least 3 points for a fit, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate design matrix")]
    Degenerate,
    #[error("solve failed at eps = {eps}: {source}")]
    Case { eps: f64, source: HelmholtzError },
    #[error("reference point {0:?} not found in the reference mesh")]
    Unlocated([f64; 2]),
    #[error(transparent)]
    Helmholtz(#[from] HelmholtzError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

pub type Result<T> = std::result::Result<T, ConvergenceError>;

/// Allowed relative increase between consecutive errors that still counts as
/// decreasing.
pub const JITTER: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub model: ManifoldModel,
    pub link: Link,
    pub eps_list: Vec<f64>,
    pub h: f64,
    pub k2: f64,
    pub source: Source,
    pub window: RegionWindow,
    /// Second background size for the reference-stability check.
    pub reference_check_h: Option<f64>,
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        let e = &self.eps_list;
        if e.is_empty()
            || e.windows(2).any(|w| w[1] >= w[0])
            || e[0] >= self.link.radius_bound()
            || e.iter().any(|&x| !(x > 0.0))
        {
            return Err(ConvergenceError::BadEpsList);
        }
        self.window.validate(&self.link)?;
        Ok(())
    }

    fn discretize(&self, eps: f64, h: f64) -> std::result::Result<Discretization, HelmholtzError> {
        Discretization::new(build_mesh(&self.model, &self.link, eps, h)?, &self.model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub h: f64,
    pub l2_error: f64,
    pub sup_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFit {
    pub a: f64,
    pub b: f64,
    /// `|e - (a x + b)| / |e|` with `x = 1 / ln(1/eps)`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<SweepRow>,
    pub reference_l2_norm: f64,
    pub fit: Option<LogFit>,
    pub l2_decreasing: bool,
    pub final_below_half: bool,
    pub sup_decreasing: bool,
    /// `L^2(V)` difference of references at two resolutions, when computed.
    pub reference_difference: Option<f64>,
    pub reference_limited: bool,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,h,l2_error,sup_error\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.epsilon, r.h, r.l2_error, r.sup_error);
        }
        s
    }
}

/// `e[i+1] <= (1 + JITTER) e[i]` for all `i`.
pub fn decreasing_with_jitter(errors: &[f64]) -> bool {
    errors.windows(2).all(|w| w[1] <= (1.0 + JITTER) * w[0])
}

/// Least squares of `errors` against `a / ln(1/eps) + b`.
pub fn fit_log_rate(errors: &[f64], eps_list: &[f64]) -> Result<LogFit> {
    let n = errors.len();
    if n < 3 || eps_list.len() != n {
        return Err(ConvergenceError::TooFewPoints(n.min(eps_list.len())));
    }
    if eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(ConvergenceError::Degenerate);
    }
    let x: Vec<f64> = eps_list.iter().map(|e| 1.0 / (1.0 / e).ln()).collect();
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = errors.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 1e-300 || sxx <= 1e-24 * x.iter().map(|v| v * v).sum::<f64>() {
        return Err(ConvergenceError::Degenerate);
    }
    let sxy: f64 = x.iter().zip(errors).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let en = errors.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rn = x
        .iter()
        .zip(errors)
        .map(|(xi, e)| (e - a * xi - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let residual = if en == 0.0 { 0.0 } else { rn / en };
    Ok(LogFit { a, b, residual })
}

/// Errors of `u` (on `mesh`) against the reference `u_ref` (on `ref_mesh`)
/// over the window triangles of `mesh`, by barycentric interpolation of the
/// reference.
pub fn window_errors(
    mesh: &Mesh,
    u: &[f64],
    ref_mesh: &Mesh,
    locator: &PointLocator,
    u_ref: &[f64],
    triangles: &[usize],
) -> Result<(f64, f64)> {
    let mut diff = vec![0.0; mesh.num_vertices()];
    let mut seen = vec![false; mesh.num_vertices()];
    for &t in triangles {
        for v in mesh.triangles()[t] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            let x = mesh.vertices()[v];
            let (rt, bary) = locator.locate(ref_mesh, x).ok_or(ConvergenceError::Unlocated(x))?;
            let tri = ref_mesh.triangles()[rt];
            let interp = bary[0] * u_ref[tri[0]] + bary[1] * u_ref[tri[1]] + bary[2] * u_ref[tri[2]];
            diff[v] = u[v] - interp;
        }
    }
    Ok((
        crate::forms::l2_norm_on(mesh, triangles, &diff),
        crate::forms::sup_norm_on(mesh, triangles, &diff),
    ))
}

/// Source-to-solution sweep over `eps_list`.
pub fn eps_sweep(cfg: &SweepConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let problem = HelmholtzProblem {
        k2: cfg.k2,
        source: cfg.source.clone(),
    };
    let reference = cfg.discretize(0.0, cfg.h).map_err(|e| ConvergenceError::Case { eps: 0.0, source: e })?;
    let u_ref = reference
        .solve(&cfg.model, &problem)
        .map_err(|e| ConvergenceError::Case { eps: 0.0, source: e })?;
    let locator = PointLocator::new(reference.mesh());
    let ref_tris = restrict(reference.mesh(), &cfg.link, &cfg.window)?;
    let reference_l2_norm = crate::forms::l2_norm_on(reference.mesh(), &ref_tris, &u_ref);

    let rows: Vec<SweepRow> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| {
            let case = |e: HelmholtzError| ConvergenceError::Case { eps, source: e };
            let disc = cfg.discretize(eps, cfg.h).map_err(case)?;
            let u = disc.solve(&cfg.model, &problem).map_err(case)?;
            let tris = restrict(disc.mesh(), &cfg.link, &cfg.window)?;
            let (l2, sup) = window_errors(disc.mesh(), &u, reference.mesh(), &locator, &u_ref, &tris)?;
            Ok(SweepRow {
                epsilon: eps,
                h: disc.mesh().h(),
                l2_error: l2,
                sup_error: sup,
            })
        })
        .collect::<Result<_>>()?;

    let reference_difference = match cfg.reference_check_h {
        Some(h2) => {
            let other = cfg.discretize(0.0, h2).map_err(|e| ConvergenceError::Case { eps: 0.0, source: e })?;
            let u2 = other
                .solve(&cfg.model, &problem)
                .map_err(|e| ConvergenceError::Case { eps: 0.0, source: e })?;
            let tris = restrict(other.mesh(), &cfg.link, &cfg.window)?;
            Some(window_errors(other.mesh(), &u2, reference.mesh(), &locator, &u_ref, &tris)?.0)
        }
        None => None,
    };
    Ok(summarize(rows, reference_l2_norm, reference_difference))
}

fn summarize(rows: Vec<SweepRow>, reference_l2_norm: f64, reference_difference: Option<f64>) -> ConvergenceReport {
    let l2: Vec<f64> = rows.iter().map(|r| r.l2_error).collect();
    let sup: Vec<f64> = rows.iter().map(|r| r.sup_error).collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let fit = fit_log_rate(&l2, &eps).ok();
    let smallest = l2.iter().copied().fold(f64::INFINITY, f64::min);
    ConvergenceReport {
        l2_decreasing: decreasing_with_jitter(&l2),
        final_below_half: l2.len() >= 2 && l2[l2.len() - 1] < 0.5 * l2[0],
        sup_decreasing: decreasing_with_jitter(&sup),
        reference_limited: reference_difference.is_some_and(|d| d >= 0.1 * smallest),
        reference_difference,
        reference_l2_norm,
        fit,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventReport {
    pub lambdas: Vec<f64>,
    pub eps_list: Vec<f64>,
    /// `errors[i][j]`: `|R_eps_i(lambda_j) f - R_0(lambda_j) f|_{L^2(V)}`.
    pub errors: Vec<Vec<f64>>,
    pub max_over_grid: Vec<f64>,
    pub decreasing: bool,
}

impl ResolventReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,lambda,l2_error\n");
        for (e, row) in self.eps_list.iter().zip(&self.errors) {
            for (l, v) in self.lambdas.iter().zip(row) {
                let _ = writeln!(s, "{e},{l},{v}");
            }
        }
        s
    }
}

/// `R_eps(lambda) f` against `R_0(lambda) f` on the window, for every
/// `lambda` in the grid. `cfg.k2` is ignored.
pub fn resolvent_sweep(cfg: &SweepConfig, lambdas: &[f64]) -> Result<ResolventReport> {
    if lambdas.is_empty() {
        return Err(ConvergenceError::EmptyGrid);
    }
    cfg.validate()?;
    let reference = cfg.discretize(0.0, cfg.h).map_err(|e| ConvergenceError::Case { eps: 0.0, source: e })?;
    let f_ref = reference.nodal(&cfg.model, &cfg.source)?;
    let refs: Vec<Vec<f64>> = lambdas
        .par_iter()
        .map(|&l| reference.resolvent(l, &f_ref).map_err(|e| ConvergenceError::Case { eps: 0.0, source: e }))
        .collect::<Result<_>>()?;
    let locator = PointLocator::new(reference.mesh());
    let errors: Vec<Vec<f64>> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| {
            let case = |e: HelmholtzError| ConvergenceError::Case { eps, source: e };
            let disc = cfg.discretize(eps, cfg.h).map_err(case)?;
            let f = disc.nodal(&cfg.model, &cfg.source).map_err(case)?;
            let tris = restrict(disc.mesh(), &cfg.link, &cfg.window)?;
            lambdas
                .iter()
                .zip(&refs)
                .map(|(&l, r0)| {
                    let u = disc.resolvent(l, &f).map_err(case)?;
                    Ok(window_errors(disc.mesh(), &u, reference.mesh(), &locator, r0, &tris)?.0)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let max_over_grid: Vec<f64> = errors.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
    Ok(ResolventReport {
        lambdas: lambdas.to_vec(),
        eps_list: cfg.eps_list.clone(),
        decreasing: decreasing_with_jitter(&max_over_grid),
        max_over_grid,
        errors,
    })
}

/// Lowest `n` eigenvalues on the full torus and at every `eps`.
pub fn spectrum_sweep(cfg: &SweepConfig, n: usize) -> Result<Vec<SpectrumReport>> {
    cfg.validate()?;
    let mut eps = vec![0.0];
    eps.extend_from_slice(&cfg.eps_list);
    eps.par_iter()
        .map(|&e| {
            let case = |err: HelmholtzError| ConvergenceError::Case { eps: e, source: err };
            cfg.discretize(e, cfg.h).and_then(|d| d.spectrum(n)).map_err(case)
        })
        .collect()
}

/// CSV `epsilon,index,eigenvalue` for a list of spectra.
pub fn spectrum_csv(reports: &[SpectrumReport]) -> String {
    let mut s = String::from("epsilon,index,eigenvalue\n");
    for r in reports {
        for (i, v) in r.eigenvalues.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", r.epsilon, i, v);
        }
    }
    s
}

//! Piecewise-linear Galerkin matrices of the forms `q_eps` (stiffness) and the
//! `L^2` product (mass), annulus capacities, and sampled checks of the
//! monotone convergence `q_eps -> q_0`.
//!
//! Element matrices are computed in parallel and then summed serially in
//! triangle order, so assembled values are bitwise identical for every thread
//! count.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{GeometryError, Link, LinkComponent, ManifoldModel};
use crate::mesh::{Mesh, MeshError};
use crate::quadrature::gauss_legendre_on;
use crate::sparse::{solve_refined, CsrMatrix, LdlFactor, SparseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormsError {
    #[error("degenerate triangle {triangle} (area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mesh resolution insufficient: h = {h} > eps/4 = {limit}")]
    TooCoarse { h: f64, limit: f64 },
    #[error("need 0 < eps < r0 <= R, got eps = {eps}, r0 = {r0}, R = {r_bound}")]
    BadRadii { eps: f64, r0: f64, r_bound: f64 },
    #[error("eps list must be non-empty and strictly decreasing")]
    BadEpsList,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

pub type Result<T> = std::result::Result<T, FormsError>;

/// Local `3 x 3` stiffness and mass blocks of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMatrices {
    pub stiffness: [[f64; 3]; 3],
    pub mass: [[f64; 3]; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledForms {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub epsilon: f64,
}

impl AssembledForms {
    pub fn dim(&self) -> usize {
        self.stiffness.nrows()
    }

    pub fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(FormsError::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `q^1_eps[u] = u^T K u`.
    pub fn eval_q1(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        Ok(self.stiffness.bilinear(u, u)?)
    }

    /// `lambda u^T M u`.
    pub fn eval_q2(&self, u: &[f64], lambda: f64) -> Result<f64> {
        self.check_len(u)?;
        Ok(lambda * self.mass.bilinear(u, u)?)
    }

    /// `M u`.
    pub fn load(&self, f_nodal: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f_nodal)?;
        Ok(self.mass.matvec(f_nodal)?)
    }
}

/// Gradients of the three barycentric coordinates and the signed area.
pub fn p1_gradients(c: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area = 0.5 * ((c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]));
    let inv = 1.0 / (2.0 * area);
    let grads = std::array::from_fn(|i| {
        let a = c[(i + 1) % 3];
        let b = c[(i + 2) % 3];
        [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv]
    });
    (grads, area)
}

/// Assembles global matrices from per-triangle blocks.
pub fn assemble_elements<F, E>(mesh: &Mesh, epsilon: f64, element: F) -> std::result::Result<AssembledForms, E>
where
    F: Fn(usize) -> std::result::Result<ElementMatrices, E> + Sync,
    E: From<SparseError> + Send,
{
    let nt = mesh.num_triangles();
    let blocks: Vec<ElementMatrices> = (0..nt)
        .into_par_iter()
        .map(&element)
        .collect::<std::result::Result<_, E>>()?;
    let mut rows = Vec::with_capacity(9 * nt);
    let mut cols = Vec::with_capacity(9 * nt);
    let mut kv = Vec::with_capacity(9 * nt);
    let mut mv = Vec::with_capacity(9 * nt);
    for (tri, blk) in mesh.triangles().iter().zip(&blocks) {
        for a in 0..3 {
            for b in 0..3 {
                rows.push(tri[a]);
                cols.push(tri[b]);
                kv.push(blk.stiffness[a][b]);
                mv.push(blk.mass[a][b]);
            }
        }
    }
    let n = mesh.num_vertices();
    Ok(AssembledForms {
        stiffness: CsrMatrix::from_triplets(n, &rows, &cols, &kv).map_err(E::from)?,
        mass: CsrMatrix::from_triplets(n, &rows, &cols, &mv).map_err(E::from)?,
        epsilon,
    })
}

/// P1 element blocks for a constant conductivity `sigma` and volume density
/// `density`.
pub fn p1_element(c: &[[f64; 2]; 3], sigma: &DMatrix<f64>, density: f64, triangle: usize) -> Result<ElementMatrices> {
    let (g, area) = p1_gradients(c);
    let scale = (c[1][0] - c[0][0]).hypot(c[1][1] - c[0][1]).powi(2);
    if !(area > 1e-14 * scale) {
        return Err(FormsError::DegenerateTriangle { triangle, area });
    }
    let mut stiffness = [[0.0; 3]; 3];
    let mut mass = [[0.0; 3]; 3];
    for a in 0..3 {
        let sg = [
            sigma[(0, 0)] * g[a][0] + sigma[(0, 1)] * g[a][1],
            sigma[(1, 0)] * g[a][0] + sigma[(1, 1)] * g[a][1],
        ];
        for b in 0..3 {
            stiffness[a][b] = area * (sg[0] * g[b][0] + sg[1] * g[b][1]);
            mass[a][b] = density * area / 12.0 * if a == b { 2.0 } else { 1.0 };
        }
    }
    Ok(ElementMatrices { stiffness, mass })
}

/// Stiffness and mass of `model` on the mesh.
pub fn assemble(mesh: &Mesh, model: &ManifoldModel) -> Result<AssembledForms> {
    if model.dimension() != 2 {
        return Err(MeshError::NotPlanar.into());
    }
    assemble_elements(mesh, mesh.epsilon(), |t| {
        let c = mesh.corners(t);
        let b = mesh.barycenter(t);
        let metric = model.metric_at(&b)?;
        p1_element(&c, &metric.conductivity(), metric.sqrt_det(), t)
    })
}

/// `sqrt(sum_T u_T^T M_T u_T)` over the listed triangles.
pub fn l2_norm_on(mesh: &Mesh, triangles: &[usize], u: &[f64]) -> f64 {
    triangles
        .iter()
        .map(|&t| {
            let tri = mesh.triangles()[t];
            let area = mesh.area(t);
            let v = [u[tri[0]], u[tri[1]], u[tri[2]]];
            let s: f64 = v.iter().sum();
            let sq: f64 = v.iter().map(|x| x * x).sum();
            area / 12.0 * (sq + s * s)
        })
        .sum::<f64>()
        .sqrt()
}

/// Largest nodal magnitude over the vertices of the listed triangles.
pub fn sup_norm_on(mesh: &Mesh, triangles: &[usize], u: &[f64]) -> f64 {
    triangles
        .iter()
        .flat_map(|&t| mesh.triangles()[t])
        .map(|v| u[v].abs())
        .fold(0.0, f64::max)
}

/// Dirichlet energy of the discrete capacitary potential of `T(eps)` inside
/// `T(r0)`: `u = 1` on `|x| = eps`, `u = 0` on `|x| = r0`. For a circle
/// component in 3-D the planar value is multiplied by the axial period.
pub fn capacity(model: &ManifoldModel, link: &Link, eps: f64, r0: f64, h: f64) -> Result<f64> {
    if !(eps > 0.0 && r0 > eps && r0 <= link.radius_bound()) {
        return Err(FormsError::BadRadii {
            eps,
            r0,
            r_bound: link.radius_bound(),
        });
    }
    if !(h > 0.0 && h <= eps / 4.0) {
        return Err(FormsError::TooCoarse { h, limit: eps / 4.0 });
    }
    let factor = match link.components()[0] {
        LinkComponent::Point { .. } => 1.0,
        LinkComponent::Circle { axis, .. } => model.periods()[axis],
    };
    let mesh = Mesh::annulus([0.0, 0.0], eps, r0, h)?;
    let identity = DMatrix::identity(2, 2);
    let forms = assemble_elements(&mesh, eps, |t| p1_element(&mesh.corners(t), &identity, 1.0, t))?;
    let loops = mesh.boundary_loops();
    let mut fixed = vec![None; mesh.num_vertices()];
    for &v in &loops[0].vertices {
        fixed[v] = Some(1.0);
    }
    for &v in &loops[1].vertices {
        fixed[v] = Some(0.0);
    }
    let free: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| fixed[v].is_none()).collect();
    let ub: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    let kub = forms.stiffness.matvec(&ub)?;
    let rhs: Vec<f64> = free.iter().map(|&v| -kub[v]).collect();
    let kii = forms.stiffness.submatrix(&free);
    let factor_ii = LdlFactor::factor(&kii)?;
    let (ui, _) = solve_refined(&kii, &factor_ii, &rhs, 1e-12)?;
    let mut u = ub;
    for (&v, x) in free.iter().zip(ui) {
        u[v] = x;
    }
    Ok(factor * forms.eval_q1(&u)?)
}

/// Planar capacity of a disk of radius `eps` in a disk of radius `r0`.
pub fn analytic_capacity(eps: f64, r0: f64) -> f64 {
    2.0 * PI / (r0 / eps).ln()
}

/// Least-squares `a` in `cap ~ a / ln(r0 / eps)` and the relative residual.
pub fn capacity_fit(caps: &[f64], eps_list: &[f64], r0: f64) -> Result<(f64, f64)> {
    if caps.len() != eps_list.len() || caps.len() < 2 || eps_list.iter().any(|&e| !(e > 0.0 && e < r0)) {
        return Err(FormsError::BadEpsList);
    }
    let x: Vec<f64> = eps_list.iter().map(|e| 1.0 / (r0 / e).ln()).collect();
    Ok(fit_power(caps, &x))
}

/// Exact `int_{T cap D(center, rho)} g` for a polynomial `g` of degree at most
/// two, by Green's theorem on the clipped boundary. Straight pieces use exact
/// Gauss rules; circular arcs use a 24-point rule on a trigonometric
/// polynomial of degree four, accurate to rounding.
pub fn clipped_integral<G: Fn([f64; 2]) -> f64>(tri: &[[f64; 2]; 3], center: [f64; 2], rho: f64, g: G) -> f64 {
    let p: [[f64; 2]; 3] = std::array::from_fn(|k| [tri[k][0] - center[0], tri[k][1] - center[1]]);
    let (xi, wi) = gauss_legendre_on(3, 0.0, 1.0);
    // G(q) = int_0^{q.x} g(center + (s, q.y)) ds, so that dG/dx = g
    let big_g = |q: [f64; 2]| -> f64 {
        q[0] * xi
            .iter()
            .zip(&wi)
            .map(|(&s, &w)| w * g([center[0] + s * q[0], center[1] + q[1]]))
            .sum::<f64>()
    };
    let mut total = 0.0;
    let mut crossings: Vec<f64> = Vec::new();
    for k in 0..3 {
        let a = p[k];
        let b = p[(k + 1) % 3];
        let d = [b[0] - a[0], b[1] - a[1]];
        let dd = d[0] * d[0] + d[1] * d[1];
        let ad = a[0] * d[0] + a[1] * d[1];
        let c0 = a[0] * a[0] + a[1] * a[1] - rho * rho;
        let disc = ad * ad - dd * c0;
        if disc <= 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        let t_lo = (-ad - sq) / dd;
        let t_hi = (-ad + sq) / dd;
        for t in [t_lo, t_hi] {
            if (0.0..=1.0).contains(&t) {
                crossings.push((a[1] + t * d[1]).atan2(a[0] + t * d[0]));
            }
        }
        let (t0, t1) = (t_lo.max(0.0), t_hi.min(1.0));
        if t1 > t0 {
            let (ts, ws) = gauss_legendre_on(4, t0, t1);
            total += ts
                .iter()
                .zip(&ws)
                .map(|(&t, &w)| w * big_g([a[0] + t * d[0], a[1] + t * d[1]]) * d[1])
                .sum::<f64>();
        }
    }
    let inside = |q: [f64; 2]| -> bool {
        (0..3).all(|k| {
            let a = p[k];
            let b = p[(k + 1) % 3];
            (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]) >= 0.0
        })
    };
    let arc = |t0: f64, t1: f64| -> f64 {
        let (ts, ws) = gauss_legendre_on(24, t0, t1);
        ts.iter()
            .zip(&ws)
            .map(|(&t, &w)| w * big_g([rho * t.cos(), rho * t.sin()]) * rho * t.cos())
            .sum()
    };
    crossings.sort_by(f64::total_cmp);
    crossings.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    if crossings.is_empty() {
        if inside([rho, 0.0]) {
            total += arc(0.0, 2.0 * PI);
        }
    } else {
        let n = crossings.len();
        for i in 0..n {
            let t0 = crossings[i];
            let t1 = if i + 1 < n { crossings[i + 1] } else { crossings[0] + 2.0 * PI };
            let mid = 0.5 * (t0 + t1);
            if t1 - t0 > 1e-15 && inside([rho * mid.cos(), rho * mid.sin()]) {
                total += arc(t0, t1);
            }
        }
    }
    total
}

/// Per-sample values of the forms on a common `eps = 0` mesh, restricted to
/// `M \ T(eps)` by exact clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaReport {
    pub eps_list: Vec<f64>,
    pub lambda: f64,
    /// `q1[sample][i]` at `eps_list[i]`.
    pub q1: Vec<Vec<f64>>,
    pub q1_limit: Vec<f64>,
    pub q2: Vec<Vec<f64>>,
    pub q2_limit: Vec<f64>,
    /// Fitted `C` in `q1_0 - q1_eps ~ C eps^2` and its relative residual.
    pub fit_constant: Vec<f64>,
    pub fit_residual: Vec<f64>,
    pub q1_monotone: bool,
    /// For `lambda < 0`: `q2` decreases as `eps` decreases.
    pub q2_monotone: bool,
    /// `|lambda (|M| - J pi eps^2) - q2_eps[1]|` maximised over `eps`.
    pub area_formula_error: f64,
}

impl GammaReport {
    pub fn max_fit_residual(&self) -> f64 {
        self.fit_residual.iter().copied().fold(0.0, f64::max)
    }
}

/// Runs the monotonicity and limit checks for nodal samples on an `eps = 0`
/// mesh.
pub fn gamma_checks(
    mesh: &Mesh,
    model: &ManifoldModel,
    link: &Link,
    samples: &[Vec<f64>],
    eps_list: &[f64],
    lambda: f64,
) -> Result<GammaReport> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) || eps_list[0] >= link.radius_bound() {
        return Err(FormsError::BadEpsList);
    }
    let forms = assemble(mesh, model)?;
    for s in samples {
        forms.check_len(s)?;
    }
    let periods = [model.periods()[0], model.periods()[1]];
    let centers: Vec<[f64; 2]> = link
        .components()
        .iter()
        .map(|c| match *c {
            LinkComponent::Point { position } => Ok(position),
            LinkComponent::Circle { .. } => Err(FormsError::Mesh(MeshError::NotPlanar)),
        })
        .collect::<Result<_>>()?;
    let eps_max = eps_list[0];
    // triangles that can meet some disk, with the nearest image of its centre
    let mut near: Vec<(usize, [f64; 2])> = Vec::new();
    for t in 0..mesh.num_triangles() {
        let c = mesh.corners(t);
        let cen = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
        let reach = c
            .iter()
            .map(|x| (x[0] - cen[0]).hypot(x[1] - cen[1]))
            .fold(0.0, f64::max);
        for z in &centers {
            let zi = [
                z[0] + periods[0] * ((cen[0] - z[0]) / periods[0]).round(),
                z[1] + periods[1] * ((cen[1] - z[1]) / periods[1]).round(),
            ];
            if (cen[0] - zi[0]).hypot(cen[1] - zi[1]) < eps_max + reach {
                near.push((t, zi));
            }
        }
    }
    let full_area = forms.mass.bilinear(&vec![1.0; forms.dim()], &vec![1.0; forms.dim()])?;
    let removed = |u: &[f64], eps: f64| -> (f64, f64, f64) {
        let (mut grad, mut sq, mut area) = (0.0, 0.0, 0.0);
        for &(t, z) in &near {
            let c = mesh.corners(t);
            let tri = mesh.triangles()[t];
            let (g, _) = p1_gradients(&c);
            let v = [u[tri[0]], u[tri[1]], u[tri[2]]];
            let du = [
                v[0] * g[0][0] + v[1] * g[1][0] + v[2] * g[2][0],
                v[0] * g[0][1] + v[1] * g[1][1] + v[2] * g[2][1],
            ];
            let value = |x: [f64; 2]| v[0] + du[0] * (x[0] - c[0][0]) + du[1] * (x[1] - c[0][1]);
            let a = clipped_integral(&c, z, eps, |_| 1.0);
            grad += (du[0] * du[0] + du[1] * du[1]) * a;
            sq += clipped_integral(&c, z, eps, |x| value(x).powi(2));
            area += a;
        }
        (grad, sq, area)
    };

    let results: Vec<(Vec<f64>, f64, Vec<f64>, f64)> = samples
        .par_iter()
        .map(|u| {
            let q1_0 = forms.eval_q1(u)?;
            let q2_0 = forms.eval_q2(u, lambda)?;
            let mut q1 = Vec::with_capacity(eps_list.len());
            let mut q2 = Vec::with_capacity(eps_list.len());
            for &eps in eps_list {
                let (g, s, _) = removed(u, eps);
                q1.push(q1_0 - g);
                q2.push(q2_0 - lambda * s);
            }
            Ok((q1, q1_0, q2, q2_0))
        })
        .collect::<Result<_>>()?;

    let eps2: Vec<f64> = eps_list.iter().map(|e| e * e).collect();
    let mut report = GammaReport {
        eps_list: eps_list.to_vec(),
        lambda,
        q1: Vec::new(),
        q1_limit: Vec::new(),
        q2: Vec::new(),
        q2_limit: Vec::new(),
        fit_constant: Vec::new(),
        fit_residual: Vec::new(),
        q1_monotone: true,
        q2_monotone: true,
        area_formula_error: 0.0,
    };
    for (q1, q1_0, q2, q2_0) in results {
        let scale = q1_0.abs().max(f64::MIN_POSITIVE);
        // q1 nondecreasing as eps decreases, up to rounding
        report.q1_monotone &= q1.windows(2).all(|w| w[1] >= w[0] - 1e-13 * scale);
        report.q1_monotone &= q1.last().is_none_or(|&v| v <= q1_0 + 1e-13 * scale);
        if lambda < 0.0 {
            let s2 = q2_0.abs().max(f64::MIN_POSITIVE);
            report.q2_monotone &= q2.windows(2).all(|w| w[1] <= w[0] + 1e-13 * s2);
        }
        let d: Vec<f64> = q1.iter().map(|v| q1_0 - v).collect();
        let (c, res) = fit_power(&d, &eps2);
        report.fit_constant.push(c);
        report.fit_residual.push(res);
        report.q1.push(q1);
        report.q1_limit.push(q1_0);
        report.q2.push(q2);
        report.q2_limit.push(q2_0);
    }
    let ones = vec![1.0; forms.dim()];
    for &eps in eps_list {
        let (_, s, _) = removed(&ones, eps);
        let q2 = lambda * (full_area - s);
        let analytic = lambda * (full_area - centers.len() as f64 * PI * eps * eps);
        report.area_formula_error = report.area_formula_error.max((q2 - analytic).abs());
    }
    Ok(report)
}

/// Least-squares `d ~ c x` and the relative residual `|d - c x| / |d|`.
fn fit_power(d: &[f64], x: &[f64]) -> (f64, f64) {
    let xx: f64 = x.iter().map(|v| v * v).sum();
    let c = d.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / xx;
    let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if dn == 0.0 {
        return (0.0, 0.0);
    }
    let r = d
        .iter()
        .zip(x)
        .map(|(a, b)| (a - c * b).powi(2))
        .sum::<f64>()
        .sqrt();
    (c, r / dn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, build_mesh_with, MeshOptions};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t2() -> ManifoldModel {
        ManifoldModel::standard(2).unwrap()
    }

    fn link() -> Link {
        Link::single_point(&t2(), [PI, PI]).unwrap()
    }

    #[test]
    fn constants_and_areas() {
        let mesh = build_mesh(&t2(), &link(), 0.0, 0.1).unwrap();
        let f = assemble(&mesh, &t2()).unwrap();
        let one = vec![1.0; f.dim()];
        assert!(f.eval_q1(&one).unwrap().abs() < 1e-10);
        assert!((f.mass.bilinear(&one, &one).unwrap() - 4.0 * PI * PI).abs() < 1e-6);
        assert!((f.eval_q2(&one, -1.0).unwrap() + 4.0 * PI * PI).abs() < 1e-6);
        assert_eq!(f.eval_q2(&one, 0.0).unwrap(), 0.0);
        assert!(f.stiffness.asymmetry() < 1e-12 && f.mass.asymmetry() < 1e-12);
        let kc = f.stiffness.matvec(&one).unwrap();
        assert!(kc.iter().all(|v| v.abs() < 1e-10 * f.stiffness.max_abs()));
        assert!(matches!(f.eval_q1(&[1.0]), Err(FormsError::DimensionMismatch { .. })));
    }

    #[test]
    fn cosine_energy_converges() {
        let want = 2.0 * PI * PI;
        let mut errs = Vec::new();
        for h in [0.2, 0.1, 0.05] {
            let mesh = build_mesh(&t2(), &link(), 0.0, h).unwrap();
            let f = assemble(&mesh, &t2()).unwrap();
            let u: Vec<f64> = mesh.vertices().iter().map(|x| x[0].cos()).collect();
            errs.push((f.eval_q1(&u).unwrap() - want).abs());
        }
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }

    #[test]
    fn holes_stay_symmetric_semidefinite() {
        let mesh = build_mesh(&t2(), &link(), 0.3, 0.2).unwrap();
        let f = assemble(&mesh, &t2()).unwrap();
        assert!(f.stiffness.asymmetry() < 1e-12);
        let eig = nalgebra::SymmetricEigen::new(f.stiffness.to_dense());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-10 * f.stiffness.max_abs());
        let area = f.mass.bilinear(&vec![1.0; f.dim()], &vec![1.0; f.dim()]).unwrap();
        assert!((area - mesh.total_area()).abs() < 1e-10);
    }

    #[test]
    fn bitwise_reproducible_across_thread_counts() {
        let mesh = build_mesh(&t2(), &link(), 0.2, 0.1).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| assemble(&mesh, &t2()).unwrap());
        let b = four.install(|| assemble(&mesh, &t2()).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn capacity_matches_annulus_formula() {
        let l = link();
        for eps in [0.05, 0.005] {
            let c = capacity(&t2(), &l, eps, 0.5, eps / 8.0).unwrap();
            let want = analytic_capacity(eps, 0.5);
            assert!((c - want).abs() < 0.05 * want, "{eps}: {c} vs {want}");
        }
        let a = capacity(&t2(), &l, 0.02, 0.5, 0.004).unwrap();
        let b = capacity(&t2(), &l, 0.04, 0.5, 0.004).unwrap();
        assert!(a < b);
        assert!(matches!(capacity(&t2(), &l, 0.05, 0.5, 0.02), Err(FormsError::TooCoarse { .. })));
        assert!(matches!(capacity(&t2(), &l, 0.5, 0.4, 0.01), Err(FormsError::BadRadii { .. })));
    }

    #[test]
    fn capacity_fit_recovers_two_pi() {
        let eps = [0.1, 0.05, 0.025];
        let caps: Vec<f64> = eps.iter().map(|&e| analytic_capacity(e, 0.5)).collect();
        let (a, res) = capacity_fit(&caps, &eps, 0.5).unwrap();
        assert!((a - 2.0 * PI).abs() < 1e-12 && res < 1e-14);
        assert!(capacity_fit(&caps, &[0.1, 0.05, 0.6], 0.5).is_err());
    }

    #[test]
    fn capacity_of_a_straight_circle() {
        let t3 = ManifoldModel::standard(3).unwrap();
        let l = Link::new(&t3, vec![LinkComponent::Circle { axis: 2, base: [PI, PI] }], None).unwrap();
        let c = capacity(&t3, &l, 0.05, 0.5, 0.05 / 8.0).unwrap();
        let want = 2.0 * PI * analytic_capacity(0.05, 0.5);
        assert!((c - want).abs() < 0.05 * want);
    }

    #[test]
    fn clipped_integrals_are_exact() {
        // disk inside the triangle
        let tri = [[-1.0, -1.0], [2.0, -1.0], [-1.0, 2.0]];
        let a = clipped_integral(&tri, [0.0, 0.0], 0.3, |_| 1.0);
        assert!((a - PI * 0.09).abs() < 1e-14);
        let m2 = clipped_integral(&tri, [0.0, 0.0], 0.3, |x| x[0] * x[0]);
        assert!((m2 - PI * 0.3f64.powi(4) / 4.0).abs() < 1e-14);
        // triangle inside the disk
        let small = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]];
        assert!((clipped_integral(&small, [0.0, 0.0], 1.0, |_| 1.0) - 0.005).abs() < 1e-15);
        // quarter disk cut by two legs
        let big = [[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]];
        let q = clipped_integral(&big, [0.0, 0.0], 1.0, |_| 1.0);
        assert!((q - PI / 4.0).abs() < 1e-14);
        // disjoint
        assert_eq!(clipped_integral(&small, [3.0, 3.0], 0.5, |_| 1.0), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn clipped_pieces_tile_a_square(cx in -0.4f64..0.4, cy in -0.4f64..0.4, r in 0.05f64..0.6) {
            let g = |x: [f64; 2]| 1.0 + x[0] - 2.0 * x[1] + x[0] * x[1];
            let (p00, p10, p11, p01) = ([-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]);
            let split_a = clipped_integral(&[p00, p10, p11], [cx, cy], r, g)
                + clipped_integral(&[p00, p11, p01], [cx, cy], r, g);
            let split_b = clipped_integral(&[p00, p10, p01], [cx, cy], r, g)
                + clipped_integral(&[p10, p11, p01], [cx, cy], r, g);
            prop_assert!((split_a - split_b).abs() < 1e-12);
            if cx.abs() + r < 0.5 && cy.abs() + r < 0.5 {
                // odd moments vanish over the disk
                let want = PI * r * r * (1.0 + cx - 2.0 * cy + cx * cy);
                prop_assert!((split_a - want).abs() < 1e-12);
            }
        }

        #[test]
        fn stiffness_is_positive(seed in 0u64..1000) {
            let mesh = build_mesh(&t2(), &link(), 0.2, 0.3).unwrap();
            let f = assemble(&mesh, &t2()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..f.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            prop_assert!(f.eval_q1(&u).unwrap() >= 0.0);
        }
    }

    #[test]
    fn gamma_checks_on_smooth_fields() {
        let l = link();
        let opts = MeshOptions {
            core_spacing: Some(0.002),
            ..MeshOptions::default()
        };
        let mesh = build_mesh_with(&t2(), &l, 0.0, 0.05, &opts).unwrap();
        let sinx: Vec<f64> = mesh.vertices().iter().map(|x| x[0].sin()).collect();
        // supported away from the link: sin^2 bump in y vanishing near y = pi
        let far: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|x| if (x[1] - PI).abs() > 0.5 { (x[1] - PI).sin().powi(4) } else { 0.0 })
            .collect();
        let eps = [0.1, 0.05, 0.025, 0.0125];
        let r = gamma_checks(&mesh, &t2(), &l, &[sinx, far], &eps, -1.0).unwrap();
        assert!(r.q1_monotone && r.q2_monotone);
        assert!(r.fit_residual[0] < 0.1, "{:?}", r.fit_residual);
        // |grad sin x|^2 = 1 at the link, so the removed energy is close to pi eps^2
        assert!((r.fit_constant[0] - PI).abs() < 0.05 * PI, "{:?}", r.fit_constant);
        assert!(r.q1[1].iter().all(|&q| q == r.q1_limit[1]));
        assert!(r.area_formula_error < 1e-6);
    }

    #[test]
    fn gamma_rejects_bad_eps_lists() {
        let l = link();
        let mesh = build_mesh(&t2(), &l, 0.0, 0.2).unwrap();
        assert_eq!(gamma_checks(&mesh, &t2(), &l, &[], &[0.1, 0.2], -1.0), Err(FormsError::BadEpsList));
        assert_eq!(gamma_checks(&mesh, &t2(), &l, &[], &[], -1.0), Err(FormsError::BadEpsList));
    }
}

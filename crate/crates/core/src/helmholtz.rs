//! Helmholtz problems `Delta_g u + k^2 u = f` on `M \ T(eps)` with natural
//! Neumann conditions, in virtual and physical space.
//!
//! With `Q` the positive operator of the form `q_eps` (so `Delta_g = -Q`) the
//! discrete system is `(K - k^2 M) u = -M f`, and the resolvent is
//! `R(lambda) f = (K - lambda M)^{-1} M f`. Hence `R(lambda) f = -solve(k^2 =
//! lambda)`.
//!
//! Factorizations are immutable and their solves reentrant, so one factor may
//! serve concurrent right-hand sides.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::forms::{self, assemble, p1_gradients, AssembledForms, ElementMatrices, FormsError};
use crate::geometry::{transverse_axes, GeometryError, Link, ManifoldModel};
use crate::mesh::{build_mesh, restrict, Mesh, MeshError, RegionWindow};
use crate::quadrature::TriangleRule;
use crate::sparse::{
    lowest_eigenpairs, minres, solve_refined, EigenOptions, LdlFactor, SparseError, Symbolic,
};
use crate::transform::{MapKind, TransformError, TransformationMap, SINGULAR_CUTOFF};

/// Minimum distance between a spectral parameter and the discrete spectrum.
pub const DELTA_SPEC: f64 = 0.05;
/// Largest system solved by direct factorization.
pub const DIRECT_LIMIT: usize = 300_000;
/// Relative residual required of every linear solve.
pub const SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HelmholtzError {
    #[error("spectral parameter {parameter} is within {distance:e} of the discrete eigenvalue {eigenvalue}")]
    NearSpectrum {
        parameter: f64,
        eigenvalue: f64,
        distance: f64,
    },
    #[error("linear solve did not converge (relative residual {residual:e})")]
    NotConverged { residual: f64 },
    #[error("resonant mode: k^2 = {k2} equals |m|^2 for wave vector {wave:?}")]
    Resonant { k2: f64, wave: Vec<i64> },
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("cannot compute {0} eigenvalues")]
    BadEigenCount(usize),
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Sparse(SparseError),
}

impl From<SparseError> for HelmholtzError {
    fn from(e: SparseError) -> Self {
        match e {
            SparseError::NotConverged { residual, .. } => HelmholtzError::NotConverged { residual },
            other => HelmholtzError::Sparse(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, HelmholtzError>;

/// One real Fourier term `cos_coeff cos(kappa.x) + sin_coeff sin(kappa.x)` with
/// `kappa_i = 2 pi wave_i / P_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMode {
    pub wave: Vec<i64>,
    pub cos_coeff: f64,
    pub sin_coeff: f64,
}

impl FourierMode {
    pub fn cos(wave: &[i64], coeff: f64) -> Self {
        Self {
            wave: wave.to_vec(),
            cos_coeff: coeff,
            sin_coeff: 0.0,
        }
    }

    pub fn sin(wave: &[i64], coeff: f64) -> Self {
        Self {
            wave: wave.to_vec(),
            cos_coeff: 0.0,
            sin_coeff: coeff,
        }
    }

    fn kappa(&self, periods: &[f64]) -> Vec<f64> {
        self.wave
            .iter()
            .zip(periods)
            .map(|(&m, &p)| 2.0 * PI * m as f64 / p)
            .collect()
    }

    pub fn kappa_sq(&self, periods: &[f64]) -> f64 {
        self.kappa(periods).iter().map(|k| k * k).sum()
    }

    pub fn eval(&self, periods: &[f64], x: &[f64]) -> f64 {
        let phase: f64 = self.kappa(periods).iter().zip(x).map(|(k, xi)| k * xi).sum();
        self.cos_coeff * phase.cos() + self.sin_coeff * phase.sin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Zero,
    Fourier(Vec<FourierMode>),
    /// `amplitude * exp(1 - 1 / (1 - (d / radius)^2))` for periodic distance
    /// `d < radius`, zero outside.
    Bump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    },
}

impl Source {
    pub fn validate(&self, model: &ManifoldModel) -> Result<()> {
        let d = model.dimension();
        match self {
            Source::Zero => Ok(()),
            Source::Fourier(modes) => {
                if let Some(m) = modes.iter().find(|m| m.wave.len() != d) {
                    return Err(HelmholtzError::InvalidSource(format!(
                        "wave vector {:?} has the wrong dimension",
                        m.wave
                    )));
                }
                Ok(())
            }
            Source::Bump { center, radius, .. } => {
                if center.len() != d {
                    return Err(HelmholtzError::InvalidSource("bump centre has the wrong dimension".into()));
                }
                let max = model.periods().iter().copied().fold(f64::INFINITY, f64::min) / 2.0;
                if !(*radius > 0.0 && *radius < max) {
                    return Err(HelmholtzError::InvalidSource(format!("bump radius {radius} not in (0, {max})")));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, model: &ManifoldModel, x: &[f64]) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::Fourier(modes) => modes.iter().map(|m| m.eval(model.periods(), x)).sum(),
            Source::Bump {
                center,
                radius,
                amplitude,
            } => {
                let d2: f64 = x
                    .iter()
                    .zip(center)
                    .zip(model.periods())
                    .map(|((&a, &b), &p)| crate::geometry::min_image(a - b, p).powi(2))
                    .sum();
                let t = d2 / (radius * radius);
                if t < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - t)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Distance from the support of `f` to the link, when the support is
    /// compact.
    pub fn distance_to_link(&self, link: &Link) -> Option<f64> {
        match self {
            Source::Zero => Some(f64::INFINITY),
            Source::Fourier(_) => None,
            Source::Bump { center, radius, .. } => Some(link.distance(center) - radius),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HelmholtzProblem {
    pub k2: f64,
    pub source: Source,
}

/// Exact solution on the full torus for a Fourier source.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSolution {
    periods: Vec<f64>,
    modes: Vec<FourierMode>,
}

impl FourierSolution {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.modes.iter().map(|m| m.eval(&self.periods, x)).sum()
    }

    pub fn modes(&self) -> &[FourierMode] {
        &self.modes
    }
}

/// `u = sum f_m e^{i kappa_m x} / (k^2 - |kappa_m|^2)`.
pub fn fourier_oracle(model: &ManifoldModel, modes: &[FourierMode], k2: f64) -> Result<FourierSolution> {
    Source::Fourier(modes.to_vec()).validate(model)?;
    let periods = model.periods().to_vec();
    let modes = modes
        .iter()
        .map(|m| {
            let denom = k2 - m.kappa_sq(&periods);
            if denom.abs() <= 1e-12 * k2.abs().max(1.0) {
                return Err(HelmholtzError::Resonant {
                    k2,
                    wave: m.wave.clone(),
                });
            }
            Ok(FourierMode {
                wave: m.wave.clone(),
                cos_coeff: m.cos_coeff / denom,
                sin_coeff: m.sin_coeff / denom,
            })
        })
        .collect::<Result<_>>()?;
    Ok(FourierSolution { periods, modes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub epsilon: f64,
    pub h: f64,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Nodal restriction of a solution to a window, with its `L^2(V)` norm.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSolution {
    pub triangles: Vec<usize>,
    pub vertices: Vec<usize>,
    pub values: Vec<f64>,
    pub l2_norm: f64,
}

/// A mesh with its assembled forms and a lazily computed fill-reducing
/// analysis shared by every shifted system `K - mu M`.
#[derive(Debug)]
pub struct Discretization {
    mesh: Mesh,
    forms: AssembledForms,
    symbolic: OnceLock<Arc<Symbolic>>,
}

impl Discretization {
    pub fn new(mesh: Mesh, model: &ManifoldModel) -> Result<Self> {
        let forms = assemble(&mesh, model)?;
        Ok(Self::from_forms(mesh, forms))
    }

    pub fn from_forms(mesh: Mesh, forms: AssembledForms) -> Self {
        Self {
            mesh,
            forms,
            symbolic: OnceLock::new(),
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn forms(&self) -> &AssembledForms {
        &self.forms
    }

    fn symbolic(&self) -> Arc<Symbolic> {
        self.symbolic
            .get_or_init(|| Arc::new(Symbolic::analyse(&self.forms.stiffness)))
            .clone()
    }

    fn factor_shifted(&self, mu: f64) -> std::result::Result<LdlFactor, SparseError> {
        let a = crate::sparse::CsrMatrix::lin_comb(1.0, &self.forms.stiffness, -mu, &self.forms.mass)?;
        LdlFactor::factor_with(self.symbolic(), &a)
    }

    /// Errors if some discrete eigenvalue lies within `delta` of `mu`, by
    /// comparing the inertia of `K - (mu +- delta) M`.
    pub fn check_spectral_distance(&self, mu: f64, delta: f64) -> Result<()> {
        if mu + delta <= 0.0 {
            return Ok(());
        }
        let near = |eigenvalue: f64| HelmholtzError::NearSpectrum {
            parameter: mu,
            eigenvalue,
            distance: (eigenvalue - mu).abs(),
        };
        let count = |shift: f64| -> Result<usize> {
            if shift < 0.0 {
                return Ok(0);
            }
            match self.factor_shifted(shift) {
                Ok(f) => Ok(f.negative_pivots()),
                Err(SparseError::ZeroPivot { .. }) => Err(near(shift)),
                Err(e) => Err(e.into()),
            }
        };
        let inside = count(mu + delta)? - count(mu - delta)?;
        if inside == 0 {
            return Ok(());
        }
        let opts = EigenOptions {
            shift: mu - delta,
            ..EigenOptions::default()
        };
        let eigenvalue = if mu - delta < 0.0 {
            0.0
        } else {
            let n = (inside + 2).min(self.mesh.num_vertices() - 1).min(50);
            lowest_eigenpairs(&self.forms.stiffness, &self.forms.mass, n, &opts)
                .ok()
                .and_then(|p| p.values.into_iter().min_by(|a, b| (a - mu).abs().total_cmp(&(b - mu).abs())))
                .unwrap_or(mu)
        };
        Err(near(eigenvalue))
    }

    /// Solves `(K - mu M) u = rhs` after the spectral-distance check. Systems
    /// above [`DIRECT_LIMIT`] unknowns go to MINRES without the check.
    pub fn solve_shifted(&self, mu: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        self.forms.check_len(rhs)?;
        if rhs.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; rhs.len()]);
        }
        let a = crate::sparse::CsrMatrix::lin_comb(1.0, &self.forms.stiffness, -mu, &self.forms.mass)?;
        if self.forms.dim() > DIRECT_LIMIT {
            let out = minres(&a, rhs, SOLVE_TOL, 50_000)?;
            return Ok(out.x);
        }
        self.check_spectral_distance(mu, DELTA_SPEC)?;
        let factor = match LdlFactor::factor_with(self.symbolic(), &a) {
            Ok(f) => f,
            Err(SparseError::ZeroPivot { .. }) => {
                return Err(HelmholtzError::NearSpectrum {
                    parameter: mu,
                    eigenvalue: mu,
                    distance: 0.0,
                })
            }
            Err(e) => return Err(e.into()),
        };
        let (x, _) = solve_refined(&a, &factor, rhs, SOLVE_TOL)?;
        Ok(x)
    }

    /// Nodal values of a source on the mesh vertices.
    pub fn nodal(&self, model: &ManifoldModel, source: &Source) -> Result<Vec<f64>> {
        source.validate(model)?;
        Ok(self.mesh.vertices().iter().map(|x| source.eval(model, x)).collect())
    }

    /// `(K - k^2 M) u = -M f`.
    pub fn solve_nodal(&self, k2: f64, f_nodal: &[f64]) -> Result<Vec<f64>> {
        let load = self.forms.load(f_nodal)?;
        let rhs: Vec<f64> = load.iter().map(|v| -v).collect();
        self.solve_shifted(k2, &rhs)
    }

    pub fn solve(&self, model: &ManifoldModel, problem: &HelmholtzProblem) -> Result<Vec<f64>> {
        let f = self.nodal(model, &problem.source)?;
        self.solve_nodal(problem.k2, &f)
    }

    /// `(K - lambda M) u = M f`.
    pub fn resolvent(&self, lambda: f64, f_nodal: &[f64]) -> Result<Vec<f64>> {
        let load = self.forms.load(f_nodal)?;
        self.solve_shifted(lambda, &load)
    }

    /// Lowest `n` generalized eigenvalues of `K v = lambda M v`.
    pub fn spectrum(&self, n: usize) -> Result<SpectrumReport> {
        if n == 0 || n > 50 || n >= self.forms.dim() {
            return Err(HelmholtzError::BadEigenCount(n));
        }
        let pairs = lowest_eigenpairs(&self.forms.stiffness, &self.forms.mass, n, &EigenOptions::default())?;
        Ok(SpectrumReport {
            epsilon: self.mesh.epsilon(),
            h: self.mesh.h(),
            eigenvalues: pairs.values,
            residuals: pairs.residuals,
        })
    }

    /// Restricts a nodal field to the window `V`.
    pub fn restrict_to(&self, link: &Link, window: &RegionWindow, u: &[f64]) -> Result<WindowSolution> {
        self.forms.check_len(u)?;
        let triangles = restrict(&self.mesh, link, window)?;
        let mut vertices: Vec<usize> = triangles.iter().flat_map(|&t| self.mesh.triangles()[t]).collect();
        vertices.sort_unstable();
        vertices.dedup();
        let values = vertices.iter().map(|&v| u[v]).collect();
        let l2_norm = forms::l2_norm_on(&self.mesh, &triangles, u);
        Ok(WindowSolution {
            triangles,
            vertices,
            values,
            l2_norm,
        })
    }

    /// `Lambda_{V, eps} f = u_eps |_V`.
    pub fn source_to_solution(
        &self,
        model: &ManifoldModel,
        link: &Link,
        problem: &HelmholtzProblem,
        window: &RegionWindow,
    ) -> Result<WindowSolution> {
        let u = self.solve(model, problem)?;
        self.restrict_to(link, window, &u)
    }
}

/// Builds the mesh, assembles and solves in one call.
pub fn solve(model: &ManifoldModel, link: &Link, eps: f64, h: f64, problem: &HelmholtzProblem) -> Result<(Discretization, Vec<f64>)> {
    let disc = Discretization::new(build_mesh(model, link, eps, h)?, model)?;
    let u = disc.solve(model, problem)?;
    Ok((disc, u))
}

/// Physical-space solution on the image of a virtual mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalSolution {
    /// `Psi(x_v)` for every virtual vertex `x_v`.
    pub vertices: Vec<Vec<f64>>,
    /// `u~` at the physical vertices; index-aligned with the virtual mesh, so
    /// these are also the nodal values of the pullback `u~ o Psi`.
    pub values: Vec<f64>,
    pub forms: AssembledForms,
    /// `M~ f~` with `f~ = f o Psi^{-1}` sampled at the physical vertices.
    pub load: Vec<f64>,
}

/// Solves `div(sigma~ grad u~) + k^2 sqrt(det g~) u~ = sqrt(det g~) f~` on the
/// transported mesh. The basis functions are the transported hat functions
/// `phi o Psi^{-1}`: their physical gradients `D Psi^{-T} grad phi`, the
/// conductivity `sigma~` and the density `sqrt(det g~)` are evaluated at
/// the physical images of the degree-5 quadrature points, and the
/// Jacobian `|det D Psi|` converts the physical measure to the reference
/// triangle.
pub fn solve_physical(
    model: &ManifoldModel,
    map: &TransformationMap,
    mesh: &Mesh,
    problem: &HelmholtzProblem,
) -> Result<PhysicalSolution> {
    if model.dimension() != 2 {
        return Err(MeshError::NotPlanar.into());
    }
    if map.kind() == MapKind::BlowUp && mesh.epsilon() < SINGULAR_CUTOFF {
        return Err(TransformError::BelowCutoff(mesh.epsilon()).into());
    }
    problem.source.validate(model)?;
    let vertices: Vec<Vec<f64>> = mesh
        .vertices()
        .par_iter()
        .map(|x| map.map_forward(x))
        .collect::<std::result::Result<_, _>>()?;
    let rule = TriangleRule::degree5();
    let forms = forms::assemble_elements(mesh, mesh.epsilon(), |t| physical_element(model, map, mesh, &rule, t))?;
    let pushed = map.pushforward_function(|x| problem.source.eval(model, x));
    let f_tilde: Vec<f64> = vertices
        .iter()
        .map(|xt| pushed(&model.wrap(xt)))
        .collect::<std::result::Result<_, _>>()?;
    let load = forms.load(&f_tilde)?;
    let disc = Discretization::from_forms(mesh.clone(), forms);
    let rhs: Vec<f64> = load.iter().map(|v| -v).collect();
    let values = disc.solve_shifted(problem.k2, &rhs)?;
    Ok(PhysicalSolution {
        vertices,
        values,
        forms: disc.forms,
        load,
    })
}

fn physical_element(
    model: &ManifoldModel,
    map: &TransformationMap,
    mesh: &Mesh,
    rule: &TriangleRule,
    t: usize,
) -> Result<ElementMatrices> {
    let c = mesh.corners(t);
    let (g, area) = p1_gradients(&c);
    if !(area > 0.0) {
        return Err(FormsError::DegenerateTriangle { triangle: t, area }.into());
    }
    let mut stiffness = [[0.0; 3]; 3];
    let mut mass = [[0.0; 3]; 3];
    for (bary, &w) in rule.points.iter().zip(&rule.weights) {
        let x = [
            bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0],
            bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1],
        ];
        let x = model.wrap(&x);
        let xt = map.map_forward(&x)?;
        let xt = model.wrap(&xt);
        let dpsi = map.jacobian(&x)?;
        let jac = dpsi.determinant().abs();
        let inv_t = dpsi
            .clone()
            .try_inverse()
            .ok_or(TransformError::BelowCutoff(0.0))?
            .transpose();
        let sigma = map.pushforward_conductivity(&xt)?;
        let density = map.pushforward_metric(&xt)?.sqrt_det();
        let grads: Vec<DMatrix<f64>> = g
            .iter()
            .map(|gi| &inv_t * DMatrix::from_column_slice(2, 1, gi))
            .collect();
        let wq = w * area * jac;
        for a in 0..3 {
            let sg = &sigma * &grads[a];
            for b in 0..3 {
                stiffness[a][b] += wq * sg.dot(&grads[b]);
                mass[a][b] += wq * density * bary[a] * bary[b];
            }
        }
    }
    Ok(ElementMatrices { stiffness, mass })
}

/// One axial Fourier mode of a reduced 3-D solution.
#[derive(Debug, Clone, PartialEq)]
pub struct AxialMode {
    pub m: usize,
    pub kappa: f64,
    pub cos_part: Vec<f64>,
    pub sin_part: Vec<f64>,
}

/// Solution on `T^3 \ T(eps)` for a straight link, as a sum of transverse 2-D
/// solutions times axial harmonics.
#[derive(Debug)]
pub struct Reduced3d {
    pub axis: usize,
    pub axial_period: f64,
    pub transverse: Discretization,
    pub modes: Vec<AxialMode>,
}

impl Reduced3d {
    /// `u(x_v, s)` at transverse vertex `v`.
    pub fn value(&self, v: usize, s: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.cos_part[v] * (m.kappa * s).cos() + m.sin_part[v] * (m.kappa * s).sin())
            .sum()
    }

    /// The solution on the slice at axial coordinate `s`.
    pub fn slice(&self, s: f64) -> Vec<f64> {
        (0..self.transverse.mesh().num_vertices()).map(|v| self.value(v, s)).collect()
    }

    /// The 3-D point over transverse vertex `v` at axial coordinate `s`.
    pub fn point(&self, v: usize, s: f64) -> [f64; 3] {
        let x = self.transverse.mesh().vertices()[v];
        let (a, b) = transverse_axes(self.axis);
        let mut p = [0.0; 3];
        p[a] = x[0];
        p[b] = x[1];
        p[self.axis] = s;
        p
    }
}

/// Separates a 3-D problem with a straight link into 2-D problems with
/// `k^2 - kappa_m^2`, `m = 0..=m_max`. The source is sampled on
/// `4 (m_max + 1)` axial points; it must be representable by the retained
/// modes to 1e-10 relative.
pub fn reduce_3d(
    model: &ManifoldModel,
    link: &Link,
    eps: f64,
    h: f64,
    problem: &HelmholtzProblem,
    m_max: usize,
) -> Result<Reduced3d> {
    if model.dimension() != 3 {
        return Err(GeometryError::InvalidDimension(model.dimension()).into());
    }
    problem.source.validate(model)?;
    let (axis, link2) = link.transverse_link()?;
    let model2 = model.transverse_model(axis)?;
    let transverse = Discretization::new(build_mesh(&model2, &link2, eps, h)?, &model2)?;
    let period = model.periods()[axis];
    let ns = 4 * (m_max + 1);
    let s_k: Vec<f64> = (0..ns).map(|k| period * k as f64 / ns as f64).collect();
    let nv = transverse.mesh().num_vertices();
    let (ta, tb) = transverse_axes(axis);
    let samples: Vec<Vec<f64>> = transverse
        .mesh()
        .vertices()
        .par_iter()
        .map(|x| {
            s_k.iter()
                .map(|&s| {
                    let mut p = [0.0; 3];
                    p[ta] = x[0];
                    p[tb] = x[1];
                    p[axis] = s;
                    problem.source.eval(model, &p)
                })
                .collect()
        })
        .collect();
    let mut coeffs: Vec<(usize, f64, Vec<f64>, Vec<f64>)> = Vec::with_capacity(m_max + 1);
    for m in 0..=m_max {
        let kappa = 2.0 * PI * m as f64 / period;
        let w = if m == 0 { 1.0 } else { 2.0 } / ns as f64;
        let mut cp = vec![0.0; nv];
        let mut sp = vec![0.0; nv];
        for v in 0..nv {
            for (k, &s) in s_k.iter().enumerate() {
                cp[v] += w * samples[v][k] * (kappa * s).cos();
                sp[v] += w * samples[v][k] * (kappa * s).sin();
            }
        }
        coeffs.push((m, kappa, cp, sp));
    }
    let scale = samples.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
    for (v, row) in samples.iter().enumerate() {
        for (k, &s) in s_k.iter().enumerate() {
            let rebuilt: f64 = coeffs
                .iter()
                .map(|(_, kappa, cp, sp)| cp[v] * (kappa * s).cos() + sp[v] * (kappa * s).sin())
                .sum();
            if (rebuilt - row[k]).abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(HelmholtzError::InvalidSource(format!(
                    "source is not spanned by axial modes 0..={m_max}"
                )));
            }
        }
    }
    let modes = coeffs
        .into_par_iter()
        .map(|(m, kappa, cp, sp)| {
            let k2 = problem.k2 - kappa * kappa;
            let solve_part = |f: &Vec<f64>| -> Result<Vec<f64>> {
                if f.iter().all(|&v| v.abs() <= 1e-14 * scale) {
                    Ok(vec![0.0; nv])
                } else {
                    transverse.solve_nodal(k2, f)
                }
            };
            Ok(AxialMode {
                m,
                kappa,
                cos_part: solve_part(&cp)?,
                sin_part: solve_part(&sp)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Reduced3d {
        axis,
        axial_period: period,
        transverse,
        modes,
    })
}

//! The blow-up map from virtual to physical space, pushforwards of metrics,
//! conductivities and functions, and the singular behaviour of the physical
//! material parameters near the cloaking surface.
//!
//! Inside each tube `T(R)` the map acts in normal coordinates by
//! `(r, theta, s, j) -> ((R + r) / 2, theta, s, j)`; outside it is the
//! identity. The link is blown up to the cloaking surface `r~ = R / 2`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::geometry::{transverse_axes, GeometryError, Link, LinkComponent, MetricTensor};
use crate::quadrature::gauss_legendre_on;

/// Tensors are not evaluated closer than this to the cloaking surface,
/// measured in the singular factor `2 r~ - R`.
pub const SINGULAR_CUTOFF: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("forward map applied on the link")]
    OnLink,
    #[error("physical radius {radius} is at or inside the cloaking surface r = {surface}")]
    InsideCloak { radius: f64, surface: f64 },
    #[error("singular factor 2r~ - R = {0:e} is below the evaluation cutoff")]
    BelowCutoff(f64),
    #[error("radius bound must be positive, got {0}")]
    BadProfile(f64),
    #[error("need at least 10 samples, got {0}")]
    TooFewSamples(usize),
}

pub type Result<T> = std::result::Result<T, TransformError>;

/// The affine radial profile `r -> (R + r) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialProfile {
    r_bound: f64,
}

impl RadialProfile {
    pub fn new(r_bound: f64) -> Result<Self> {
        if !(r_bound.is_finite() && r_bound > 0.0) {
            return Err(TransformError::BadProfile(r_bound));
        }
        Ok(Self { r_bound })
    }

    pub fn r_bound(&self) -> f64 {
        self.r_bound
    }

    pub fn forward(&self, r: f64) -> f64 {
        (self.r_bound + r) / 2.0
    }

    pub fn inverse(&self, r_tilde: f64) -> f64 {
        2.0 * r_tilde - self.r_bound
    }

    /// Radius of the cloaking surface, `R / 2`.
    pub fn surface(&self) -> f64 {
        self.r_bound / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    BlowUp,
    Identity,
}

/// Geometry of a point relative to the nearest component: the transverse
/// unit vectors `e_r`, `e_theta` and the axial axis as chart vectors.
struct LocalFrame {
    radius: f64,
    e_r: Vec<f64>,
    e_t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformationMap {
    link: Link,
    profile: RadialProfile,
    kind: MapKind,
}

impl TransformationMap {
    pub fn blow_up(link: &Link) -> Self {
        Self {
            profile: RadialProfile { r_bound: link.radius_bound() },
            link: link.clone(),
            kind: MapKind::BlowUp,
        }
    }

    pub fn identity(link: &Link) -> Self {
        Self {
            kind: MapKind::Identity,
            ..Self::blow_up(link)
        }
    }

    pub fn link(&self) -> &Link {
        &self.link
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    fn frame(&self, x: &[f64]) -> LocalFrame {
        let (j, _) = self.link.nearest(x);
        let nc = self.link.normal_coords_unchecked(j, x);
        let d = self.link.dimension();
        let mut e_r = vec![0.0; d];
        let mut e_t = vec![0.0; d];
        let (a, b) = match self.link.components()[j] {
            LinkComponent::Point { .. } => (0, 1),
            LinkComponent::Circle { axis, .. } => transverse_axes(axis),
        };
        let (c, s) = (nc.theta.cos(), nc.theta.sin());
        e_r[a] = c;
        e_r[b] = s;
        e_t[a] = -s;
        e_t[b] = c;
        LocalFrame {
            radius: nc.r,
            e_r,
            e_t,
        }
    }

    fn inside(&self, radius: f64) -> bool {
        self.kind == MapKind::BlowUp && radius < self.profile.r_bound
    }

    /// `Psi(x)`.
    pub fn map_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.link.model().metric_at(x)?;
        if self.kind == MapKind::Identity {
            return Ok(x.to_vec());
        }
        let (j, r) = self.link.nearest(x);
        if r < 1e-14 {
            return Err(TransformError::OnLink);
        }
        if !self.inside(r) {
            return Ok(x.to_vec());
        }
        let nc = self.link.normal_coords_unchecked(j, x);
        Ok(self
            .link
            .point_at(j, self.profile.forward(r), nc.theta, nc.s))
    }

    /// `Psi^{-1}(x~)`.
    pub fn map_inverse(&self, xt: &[f64]) -> Result<Vec<f64>> {
        self.link.model().metric_at(xt)?;
        if self.kind == MapKind::Identity {
            return Ok(xt.to_vec());
        }
        let (j, rt) = self.link.nearest(xt);
        if rt <= self.profile.surface() {
            return Err(TransformError::InsideCloak {
                radius: rt,
                surface: self.profile.surface(),
            });
        }
        if !self.inside(rt) {
            return Ok(xt.to_vec());
        }
        let nc = self.link.normal_coords_unchecked(j, xt);
        Ok(self
            .link
            .point_at(j, self.profile.inverse(rt), nc.theta, nc.s))
    }

    /// `D Psi` at a virtual point, in chart coordinates.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.link.dimension();
        self.link.model().metric_at(x)?;
        let f = self.frame(x);
        if !self.inside(f.radius) {
            return Ok(DMatrix::identity(d, d));
        }
        if f.radius < 1e-14 {
            return Err(TransformError::OnLink);
        }
        let rt = self.profile.forward(f.radius);
        Ok(frame_tensor(&f, 0.5, rt / f.radius, 1.0))
    }

    fn physical_frame(&self, xt: &[f64]) -> Result<Option<(LocalFrame, f64)>> {
        self.link.model().metric_at(xt)?;
        let f = self.frame(xt);
        if !self.inside(f.radius) {
            return Ok(None);
        }
        let delta = self.profile.inverse(f.radius);
        if delta < SINGULAR_CUTOFF {
            if f.radius <= self.profile.surface() {
                return Err(TransformError::InsideCloak {
                    radius: f.radius,
                    surface: self.profile.surface(),
                });
            }
            return Err(TransformError::BelowCutoff(delta));
        }
        Ok(Some((f, delta)))
    }

    /// `g~ = D Psi^{-T} g D Psi^{-1}` at a physical point, in chart coordinates.
    pub fn pushforward_metric(&self, xt: &[f64]) -> Result<MetricTensor> {
        match self.physical_frame(xt)? {
            None => Ok(self.link.model().metric_at(xt)?),
            Some((f, delta)) => {
                let ratio = delta / f.radius;
                Ok(MetricTensor::new(frame_tensor(&f, 4.0, ratio * ratio, 1.0))?)
            }
        }
    }

    /// `sigma~ = D Psi sigma D Psi^T / |det D Psi|` at a physical point, in
    /// chart coordinates.
    pub fn pushforward_conductivity(&self, xt: &[f64]) -> Result<DMatrix<f64>> {
        match self.physical_frame(xt)? {
            None => Ok(self.link.model().conductivity_at(xt)?),
            Some((f, delta)) => {
                let x = self.map_inverse(xt)?;
                // D Psi at x, expressed in the frame shared with x~
                let dpsi = frame_tensor(&f, 0.5, f.radius / delta, 1.0);
                let sigma = self.link.model().conductivity_at(&x)?;
                let det = dpsi.determinant().abs();
                Ok(&dpsi * sigma * dpsi.transpose() / det)
            }
        }
    }

    /// `g~` in normal coordinates `(r~, theta[, s])`: `diag(4, (2r~ - R)^2, 1)`.
    pub fn normal_metric(&self, r_tilde: f64) -> Result<MetricTensor> {
        let delta = self.check_singular(r_tilde)?;
        // pull diag(1, r^2, 1) through dr = 2 dr~
        let r = delta;
        let mut diag = vec![4.0, r * r];
        if self.link.dimension() == 3 {
            diag.push(1.0);
        }
        Ok(MetricTensor::diagonal(&diag)?)
    }

    /// `sigma~ = sqrt(det g~) g~^{-1}` in normal coordinates.
    pub fn normal_conductivity(&self, r_tilde: f64) -> Result<DMatrix<f64>> {
        Ok(self.normal_metric(r_tilde)?.conductivity())
    }

    fn check_singular(&self, r_tilde: f64) -> Result<f64> {
        let delta = self.profile.inverse(r_tilde);
        if r_tilde <= self.profile.surface() {
            return Err(TransformError::InsideCloak {
                radius: r_tilde,
                surface: self.profile.surface(),
            });
        }
        if delta < SINGULAR_CUTOFF {
            return Err(TransformError::BelowCutoff(delta));
        }
        Ok(delta)
    }

    /// Log-log fits of the normal-coordinate material parameters against the
    /// singular factor `2 r~ - R`, sampled log-uniformly in `[1e-6, R]`.
    pub fn singularity_profile(&self, n_samples: usize) -> Result<SingularityProfile> {
        if n_samples < 10 {
            return Err(TransformError::TooFewSamples(n_samples));
        }
        let r_bound = self.profile.r_bound;
        let (lo, hi) = (SINGULAR_CUTOFF.ln(), r_bound.ln());
        let three = self.link.dimension() == 3;
        let mut rows = Vec::with_capacity(n_samples);
        for i in 0..n_samples {
            let delta = (lo + (hi - lo) * i as f64 / (n_samples - 1) as f64).exp();
            let mut r_tilde = (r_bound + delta) / 2.0;
            while self.profile.inverse(r_tilde) < SINGULAR_CUTOFF {
                r_tilde = f64::from_bits(r_tilde.to_bits() + 1);
            }
            let g = self.normal_metric(r_tilde)?;
            let s = g.conductivity();
            rows.push(ProfileSample {
                r_tilde,
                delta: self.profile.inverse(r_tilde),
                sqrt_det: g.sqrt_det(),
                sigma_rr: s[(0, 0)],
                sigma_thth: s[(1, 1)],
                sigma_ss: if three { s[(2, 2)] } else { g.sqrt_det() },
            });
        }
        let fit = |value: fn(&ProfileSample) -> f64, exponent: f64| -> PowerFit {
            let xs: Vec<f64> = rows.iter().map(|r| r.delta.ln()).collect();
            let ys: Vec<f64> = rows.iter().map(|r| value(r).abs().ln()).collect();
            let slope = ls_slope(&xs, &ys);
            let constant = rows
                .iter()
                .map(|r| value(r).abs() / r.delta.powf(exponent))
                .fold(0.0, f64::max);
            let violations = rows
                .iter()
                .filter(|r| value(r).abs() > constant * r.delta.powf(exponent) * (1.0 + 1e-12))
                .count();
            PowerFit {
                slope,
                constant,
                violations,
            }
        };
        Ok(SingularityProfile {
            sqrt_det: fit(|r| r.sqrt_det, 1.0),
            sigma_rr: fit(|r| r.sigma_rr, 1.0),
            sigma_thth: fit(|r| r.sigma_thth, -1.0),
            sigma_ss: fit(|r| r.sigma_ss, 1.0),
            samples: rows,
        })
    }

    /// `u~ = u o Psi^{-1}`.
    pub fn pushforward_function<'a, F>(&'a self, u: F) -> impl Fn(&[f64]) -> Result<f64> + 'a
    where
        F: Fn(&[f64]) -> f64 + 'a,
    {
        move |xt| Ok(u(&self.map_inverse(xt)?))
    }

    /// `u = u~ o Psi`.
    pub fn pullback_function<'a, F>(&'a self, ut: F) -> impl Fn(&[f64]) -> Result<f64> + 'a
    where
        F: Fn(&[f64]) -> f64 + 'a,
    {
        move |x| Ok(ut(&self.map_forward(x)?))
    }

    /// `||u||^2` in `L^2(M \ L, g)`, by polar Gauss–Legendre quadrature in each
    /// tube and a midpoint grid outside `T(R)`.
    pub fn virtual_norm_sq<F: Fn(&[f64]) -> f64>(&self, u: F, rule: &NormRule) -> Result<f64> {
        let r_bound = self.profile.r_bound;
        let tubes = self.tube_integral(rule, 0.0, r_bound, |j, r, th, s| {
            let x = self.link.point_at(j, r, th, s);
            let v = u(&x);
            // flat metric: d mu = r dr dtheta ds
            Ok(v * v * r)
        })?;
        Ok(tubes + self.exterior_integral(rule, |x| u(x).powi(2)))
    }

    /// `||u~||^2` in `L^2(M~, g~)`, with `d mu = sqrt(det g~) dx~` and the
    /// shell integrated in polar coordinates about each component.
    pub fn physical_norm_sq<F: Fn(&[f64]) -> f64>(&self, ut: F, rule: &NormRule) -> Result<f64> {
        let r_bound = self.profile.r_bound;
        let (lo, hi) = match self.kind {
            MapKind::BlowUp => (self.profile.surface(), r_bound),
            MapKind::Identity => (0.0, r_bound),
        };
        let tubes = self.tube_integral(rule, lo, hi, |j, rt, th, s| {
            let xt = self.link.point_at(j, rt, th, s);
            let v = ut(&xt);
            let w = self.pushforward_metric(&xt)?.sqrt_det();
            Ok(v * v * w * rt)
        })?;
        Ok(tubes + self.exterior_integral(rule, |x| ut(x).powi(2)))
    }

    fn tube_integral<G>(&self, rule: &NormRule, lo: f64, hi: f64, g: G) -> Result<f64>
    where
        G: Fn(usize, f64, f64, f64) -> Result<f64>,
    {
        let (rs, ws) = gauss_legendre_on(rule.radial, lo, hi);
        let periods = self.link.model().periods();
        let mut total = 0.0;
        for (j, comp) in self.link.components().iter().enumerate() {
            let (ns, ds, s0) = match *comp {
                LinkComponent::Point { .. } => (1, 1.0, 0.0),
                LinkComponent::Circle { axis, .. } => {
                    let p = periods[axis];
                    (rule.axial, p / rule.axial as f64, 0.5 * p / rule.axial as f64)
                }
            };
            let dth = 2.0 * PI / rule.angular as f64;
            for k in 0..ns {
                let s = s0 + k as f64 * ds;
                for m in 0..rule.angular {
                    let th = m as f64 * dth;
                    for (r, w) in rs.iter().zip(&ws) {
                        total += g(j, *r, th, s)? * w * dth * ds;
                    }
                }
            }
        }
        Ok(total)
    }

    fn exterior_integral<G: Fn(&[f64]) -> f64>(&self, rule: &NormRule, g: G) -> f64 {
        let periods = self.link.model().periods();
        let d = periods.len();
        let n = rule.grid;
        let cell: f64 = periods.iter().map(|p| p / n as f64).product();
        let count = n.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut total = 0.0;
        for idx in 0..count {
            let mut rem = idx;
            for (a, p) in periods.iter().enumerate() {
                x[a] = (rem % n) as f64 * p / n as f64 + 0.5 * p / n as f64;
                rem /= n;
            }
            if self.link.distance(&x) >= self.profile.r_bound {
                total += g(&x) * cell;
            }
        }
        total
    }
}

/// `a e_r e_r^T + b e_t e_t^T + c (I - e_r e_r^T - e_t e_t^T)`.
fn frame_tensor(f: &LocalFrame, a: f64, b: f64, c: f64) -> DMatrix<f64> {
    let d = f.e_r.len();
    DMatrix::from_fn(d, d, |i, k| {
        let id = if i == k { 1.0 } else { 0.0 };
        let rr = f.e_r[i] * f.e_r[k];
        let tt = f.e_t[i] * f.e_t[k];
        a * rr + b * tt + c * (id - rr - tt)
    })
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Resolution of the norm quadrature used by the unitarity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormRule {
    pub radial: usize,
    pub angular: usize,
    pub axial: usize,
    pub grid: usize,
}

impl Default for NormRule {
    fn default() -> Self {
        Self {
            radial: 40,
            angular: 128,
            axial: 32,
            grid: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub r_tilde: f64,
    pub delta: f64,
    pub sqrt_det: f64,
    pub sigma_rr: f64,
    pub sigma_thth: f64,
    pub sigma_ss: f64,
}

/// A fitted power law `|value| ~ C delta^slope`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub slope: f64,
    /// Smallest `C` with `|value| <= C delta^p` at every sample, `p` the
    /// expected exponent.
    pub constant: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularityProfile {
    pub sqrt_det: PowerFit,
    pub sigma_rr: PowerFit,
    pub sigma_thth: PowerFit,
    pub sigma_ss: PowerFit,
    pub samples: Vec<ProfileSample>,
}

impl SingularityProfile {
    pub fn bounds_hold(&self) -> bool {
        [self.sqrt_det, self.sigma_rr, self.sigma_thth, self.sigma_ss]
            .iter()
            .all(|f| f.violations == 0 && f.constant.is_finite())
    }
}

/// Stereographic projection of the unit sphere from the north pole onto the
/// equatorial plane.
pub fn stereographic(p: [f64; 3]) -> std::result::Result<[f64; 2], GeometryError> {
    let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(GeometryError::OutsideChart(p.to_vec()));
    }
    let d = 1.0 - p[2];
    if d.abs() < 1e-15 {
        return Err(GeometryError::OutsideChart(p.to_vec()));
    }
    Ok([p[0] / d, p[1] / d])
}

pub fn inverse_stereographic(y: [f64; 2]) -> [f64; 3] {
    let n2 = y[0] * y[0] + y[1] * y[1];
    let d = 1.0 + n2;
    [2.0 * y[0] / d, 2.0 * y[1] / d, (n2 - 1.0) / d]
}

//! Explicit topological maps: boundary gluings of `J` copies of the torus
//! `S^1 x S^1`, their radial extension into the solid tori, and the 2-D
//! handle homeomorphism of a genus-`J` surface with its link removed.
//!
//! Angles are taken in `[0, 2pi)`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurgeryError {
    #[error("matrix determinant {0} is not +-1")]
    NotUnimodular(i64),
    #[error("gluing needs at least one component")]
    NoComponents,
    #[error("component {j} out of range for {count} components")]
    BadComponent { j: usize, count: usize },
    #[error("round trip error {0:e} exceeds 1e-10")]
    RoundTrip(f64),
    #[error("radius {0} outside (0, 1]")]
    BadRadius(f64),
    #[error("t = 1/2 lies on the removed link")]
    OnLink,
    #[error("t = {0} outside (0, 1)")]
    BadParameter(f64),
    #[error("point {0:?} outside the closed unit disk")]
    OutsideDisk([f64; 2]),
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, SurgeryError>;

pub const ROUND_TRIP_TOL: f64 = 1e-10;
/// Finite-difference step. Central differences leave an `O(step^2)`
/// truncation and an `O(eps_mach / step)` rounding remainder.
pub const FD_STEP: f64 = 1e-6;
pub const MIN_DERIVATIVE_SAMPLES: usize = 1000;

pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed difference `a - b` reduced to `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

type AngleMap = Arc<dyn Fn(f64, f64, usize) -> (f64, f64) + Send + Sync>;

/// Invertible self-map `h'` of `(S^1 x S^1) x {0, .., J-1}`.
#[derive(Clone)]
pub enum BoundaryGluing {
    /// One integer matrix per component acting on `(theta, s)`.
    Linear(Vec<[[i64; 2]; 2]>),
    Smooth {
        components: usize,
        forward: AngleMap,
        inverse: AngleMap,
    },
}

impl fmt::Debug for BoundaryGluing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear(m) => f.debug_tuple("Linear").field(m).finish(),
            Self::Smooth { components, .. } => f.debug_struct("Smooth").field("components", components).finish_non_exhaustive(),
        }
    }
}

fn det(m: &[[i64; 2]; 2]) -> i64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn apply_matrix(m: &[[i64; 2]; 2], theta: f64, s: f64) -> (f64, f64) {
    (
        wrap_angle(m[0][0] as f64 * theta + m[0][1] as f64 * s),
        wrap_angle(m[1][0] as f64 * theta + m[1][1] as f64 * s),
    )
}

fn inverse_matrix(m: &[[i64; 2]; 2]) -> [[i64; 2]; 2] {
    let d = det(m);
    [[d * m[1][1], -d * m[0][1]], [-d * m[1][0], d * m[0][0]]]
}

impl BoundaryGluing {
    pub fn identity(components: usize) -> Result<Self> {
        Self::linear(vec![[[1, 0], [0, 1]]; components])
    }

    /// The same matrix on every component.
    pub fn uniform(matrix: [[i64; 2]; 2], components: usize) -> Result<Self> {
        Self::linear(vec![matrix; components])
    }

    pub fn dehn_twist(components: usize) -> Result<Self> {
        Self::uniform([[1, 1], [0, 1]], components)
    }

    pub fn linear(matrices: Vec<[[i64; 2]; 2]>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(SurgeryError::NoComponents);
        }
        for m in &matrices {
            let d = det(m);
            if d.abs() != 1 {
                return Err(SurgeryError::NotUnimodular(d));
            }
        }
        let g = Self::Linear(matrices);
        g.round_trip_error()?;
        Ok(g)
    }

    /// Wraps user maps after checking `inverse(forward(p)) = p` on a 64x64
    /// grid per component.
    pub fn from_fns<F, G>(components: usize, forward: F, inverse: G) -> Result<Self>
    where
        F: Fn(f64, f64, usize) -> (f64, f64) + Send + Sync + 'static,
        G: Fn(f64, f64, usize) -> (f64, f64) + Send + Sync + 'static,
    {
        if components == 0 {
            return Err(SurgeryError::NoComponents);
        }
        let g = Self::Smooth {
            components,
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
        };
        g.round_trip_error()?;
        Ok(g)
    }

    pub fn components(&self) -> usize {
        match self {
            Self::Linear(m) => m.len(),
            Self::Smooth { components, .. } => *components,
        }
    }

    fn check_component(&self, j: usize) -> Result<()> {
        if j >= self.components() {
            return Err(SurgeryError::BadComponent { j, count: self.components() });
        }
        Ok(())
    }

    fn forward_unchecked(&self, theta: f64, s: f64, j: usize) -> (f64, f64) {
        match self {
            Self::Linear(m) => apply_matrix(&m[j], theta, s),
            Self::Smooth { forward, .. } => {
                let (a, b) = forward(theta, s, j);
                (wrap_angle(a), wrap_angle(b))
            }
        }
    }

    fn inverse_unchecked(&self, theta: f64, s: f64, j: usize) -> (f64, f64) {
        match self {
            Self::Linear(m) => apply_matrix(&inverse_matrix(&m[j]), theta, s),
            Self::Smooth { inverse, .. } => {
                let (a, b) = inverse(theta, s, j);
                (wrap_angle(a), wrap_angle(b))
            }
        }
    }

    pub fn apply(&self, theta: f64, s: f64, j: usize) -> Result<(f64, f64)> {
        self.check_component(j)?;
        Ok(self.forward_unchecked(theta, s, j))
    }

    pub fn apply_inverse(&self, theta: f64, s: f64, j: usize) -> Result<(f64, f64)> {
        self.check_component(j)?;
        Ok(self.inverse_unchecked(theta, s, j))
    }

    /// Largest wrapped round-trip error over the 64x64 grid; errors above
    /// `ROUND_TRIP_TOL`.
    pub fn round_trip_error(&self) -> Result<f64> {
        let n = 64;
        let mut worst = 0.0f64;
        for j in 0..self.components() {
            for a in 0..n {
                for b in 0..n {
                    let theta = TAU * a as f64 / n as f64;
                    let s = TAU * b as f64 / n as f64;
                    let (p, q) = self.forward_unchecked(theta, s, j);
                    let (x, y) = self.inverse_unchecked(p, q, j);
                    worst = worst.max(angle_diff(x, theta).abs()).max(angle_diff(y, s).abs());
                }
            }
        }
        if !(worst <= ROUND_TRIP_TOL) {
            return Err(SurgeryError::RoundTrip(worst));
        }
        Ok(worst)
    }

    /// `self` after `first`, i.e. `p -> self(first(p))`.
    pub fn compose(&self, first: &BoundaryGluing) -> Result<BoundaryGluing> {
        if self.components() != first.components() {
            return Err(SurgeryError::BadComponent {
                j: first.components(),
                count: self.components(),
            });
        }
        if let (Self::Linear(a), Self::Linear(b)) = (self, first) {
            let prod = a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let mut m = [[0i64; 2]; 2];
                    for (i, row) in m.iter_mut().enumerate() {
                        for (k, v) in row.iter_mut().enumerate() {
                            *v = x[i][0] * y[0][k] + x[i][1] * y[1][k];
                        }
                    }
                    m
                })
                .collect();
            return Self::linear(prod);
        }
        let (outer, inner) = (self.clone(), first.clone());
        let (outer_inv, inner_inv) = (self.clone(), first.clone());
        Self::from_fns(
            self.components(),
            move |t, s, j| {
                let (a, b) = inner.forward_unchecked(t, s, j);
                outer.forward_unchecked(a, b, j)
            },
            move |t, s, j| {
                let (a, b) = outer_inv.inverse_unchecked(t, s, j);
                inner_inv.inverse_unchecked(a, b, j)
            },
        )
    }
}

/// `H(r, theta, s, j) = (r, h'_theta(theta, s, j), h'_s(theta, s, j), j)`.
#[derive(Debug, Clone)]
pub struct RadialExtension {
    gluing: BoundaryGluing,
}

impl RadialExtension {
    pub fn new(gluing: BoundaryGluing) -> Self {
        Self { gluing }
    }

    pub fn gluing(&self) -> &BoundaryGluing {
        &self.gluing
    }

    pub fn apply(&self, r: f64, theta: f64, s: f64, j: usize) -> Result<[f64; 3]> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(SurgeryError::BadRadius(r));
        }
        let (a, b) = self.gluing.apply(theta, s, j)?;
        Ok([r, a, b])
    }

    pub fn apply_inverse(&self, r: f64, theta: f64, s: f64, j: usize) -> Result<[f64; 3]> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(SurgeryError::BadRadius(r));
        }
        let (a, b) = self.gluing.apply_inverse(theta, s, j)?;
        Ok([r, a, b])
    }

    // The formula is defined for every r; finite differences may step past 1.
    fn eval(&self, p: [f64; 3], j: usize) -> [f64; 3] {
        let (a, b) = self.gluing.forward_unchecked(p[1], p[2], j);
        [p[0], a, b]
    }
}

pub const PARTIAL_NAMES: [&str; 9] = [
    "dr_dr",
    "dr_dtheta",
    "dr_ds",
    "dtheta_dr",
    "dtheta_dtheta",
    "dtheta_ds",
    "ds_dr",
    "ds_dtheta",
    "ds_ds",
];

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeRow {
    pub r: f64,
    pub partial: &'static str,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub rows: Vec<DerivativeRow>,
    pub samples: usize,
    /// `max |d pi_r / dr - 1|` over all samples.
    pub radial_error: f64,
    /// Fitted constant: largest partial over all samples.
    pub bound: f64,
    /// Largest spread over radii of the per-radius maxima of a partial.
    pub radius_spread: f64,
}

impl DerivativeReport {
    pub fn radial_ok(&self) -> bool {
        self.radial_error <= 1e-8
    }

    pub fn bounded_by(&self, c: f64) -> bool {
        self.bound <= c
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,partial_name,max_abs\n");
        for row in &self.rows {
            s.push_str(&format!("{},{},{}\n", row.r, row.partial, row.max_abs));
        }
        s
    }
}

/// Number of log-spaced radii between 1 and 1e-6.
pub const DERIVATIVE_RADII: usize = 13;

/// Central-difference partials of `H` in `(r, theta, s)` at `n_samples`
/// random points spread over radii log-spaced from 1 down to 1e-6.
///
/// Near the origin the radial step shrinks to `r / 2` so the stencil stays
/// in `r > 0`.
pub fn derivative_control_check(h: &RadialExtension, n_samples: usize, seed: u64) -> Result<DerivativeReport> {
    if n_samples < MIN_DERIVATIVE_SAMPLES {
        return Err(SurgeryError::TooFewSamples {
            min: MIN_DERIVATIVE_SAMPLES,
            got: n_samples,
        });
    }
    let nr = DERIVATIVE_RADII;
    let radii: Vec<f64> = (0..nr).map(|k| 10f64.powf(-6.0 * k as f64 / (nr - 1) as f64)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = h.gluing.components();
    let mut maxima = vec![[0.0f64; 9]; nr];
    let mut radial_error = 0.0f64;
    for i in 0..n_samples {
        let k = i % nr;
        let r = radii[k];
        let p = [r, rng.random::<f64>() * TAU, rng.random::<f64>() * TAU];
        let j = rng.random_range(0..comps);
        for (col, step) in [FD_STEP.min(r / 2.0), FD_STEP, FD_STEP].into_iter().enumerate() {
            let mut lo = p;
            let mut hi = p;
            lo[col] -= step;
            hi[col] += step;
            let a = h.eval(hi, j);
            let b = h.eval(lo, j);
            for row in 0..3 {
                let diff = if row == 0 { a[0] - b[0] } else { angle_diff(a[row], b[row]) };
                let d = diff / (2.0 * step);
                if row == 0 && col == 0 {
                    radial_error = radial_error.max((d - 1.0).abs());
                }
                let slot = &mut maxima[k][3 * row + col];
                *slot = slot.max(d.abs());
            }
        }
    }
    let mut rows = Vec::with_capacity(9 * nr);
    for (k, &r) in radii.iter().enumerate() {
        for (q, name) in PARTIAL_NAMES.iter().enumerate() {
            rows.push(DerivativeRow {
                r,
                partial: name,
                max_abs: maxima[k][q],
            });
        }
    }
    let bound = maxima.iter().flatten().copied().fold(0.0, f64::max);
    let radius_spread = (0..9)
        .map(|q| {
            let (lo, hi) = maxima
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m[q]), hi.max(m[q])));
            hi - lo
        })
        .fold(0.0, f64::max);
    Ok(DerivativeReport {
        rows,
        samples: n_samples,
        radial_error,
        bound,
        radius_spread,
    })
}

/// Image of a handle point: a point of disk face `face` of handle `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandleImage {
    pub j: usize,
    pub face: u8,
    pub point: [f64; 2],
}

impl HandleImage {
    /// Euclidean distance within a face; infinite across faces.
    pub fn distance(&self, other: &HandleImage) -> f64 {
        if self.j != other.j || self.face != other.face {
            return f64::INFINITY;
        }
        (self.point[0] - other.point[0]).hypot(self.point[1] - other.point[1])
    }
}

/// Handle homeomorphism on handle `j` of `count`: `(x, t)` goes to
/// `((1 - t) x, face 0)` for `t < 1/2` and to `(t x, face 1)` for `t > 1/2`.
pub fn handle_map_2d(count: usize, x: [f64; 2], t: f64, j: usize) -> Result<HandleImage> {
    if j >= count {
        return Err(SurgeryError::BadComponent { j, count });
    }
    if !(x[0].hypot(x[1]) <= 1.0 + 1e-12) {
        return Err(SurgeryError::OutsideDisk(x));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(SurgeryError::BadParameter(t));
    }
    if t == 0.5 {
        return Err(SurgeryError::OnLink);
    }
    let (face, factor) = if t < 0.5 { (0, 1.0 - t) } else { (1, t) };
    Ok(HandleImage {
        j,
        face,
        point: [factor * x[0], factor * x[1]],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectivityReport {
    pub pairs: usize,
    pub collisions: usize,
    pub min_distance: f64,
}

pub const COLLISION_DISTANCE: f64 = 1e-12;

fn torus3_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], angle_diff(a[1], b[1]), angle_diff(a[2], b[2])];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Random pairs of distinct inputs `(r, theta, s, j)`; a collision is a pair
/// whose images are closer than `COLLISION_DISTANCE`.
pub fn injectivity_radial(h: &RadialExtension, pairs: usize, seed: u64) -> Result<InjectivityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = h.gluing.components();
    let sample = |rng: &mut ChaCha8Rng| {
        let r = 1.0 - rng.random::<f64>();
        ([r, rng.random::<f64>() * TAU, rng.random::<f64>() * TAU], rng.random_range(0..comps))
    };
    let mut report = InjectivityReport {
        pairs: 0,
        collisions: 0,
        min_distance: f64::INFINITY,
    };
    while report.pairs < pairs {
        let (p, i) = sample(&mut rng);
        let (q, k) = sample(&mut rng);
        if i == k && torus3_distance(p, q) == 0.0 {
            continue;
        }
        report.pairs += 1;
        let a = h.apply(p[0], p[1], p[2], i)?;
        let b = h.apply(q[0], q[1], q[2], k)?;
        let d = if i == k { torus3_distance(a, b) } else { f64::INFINITY };
        report.min_distance = report.min_distance.min(d);
        if d < COLLISION_DISTANCE {
            report.collisions += 1;
        }
    }
    Ok(report)
}

/// Random pairs of distinct points on the handle cylinders
/// `S^1 x ((0, 1) \ {1/2})`, the part of the surface the map moves.
pub fn injectivity_handle(count: usize, pairs: usize, seed: u64) -> Result<InjectivityReport> {
    if count == 0 {
        return Err(SurgeryError::NoComponents);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| loop {
        let t = 1.0 - rng.random::<f64>();
        if t < 1.0 && t != 0.5 {
            let a = rng.random::<f64>() * TAU;
            return ([a.cos(), a.sin()], t, rng.random_range(0..count));
        }
    };
    let mut report = InjectivityReport {
        pairs: 0,
        collisions: 0,
        min_distance: f64::INFINITY,
    };
    while report.pairs < pairs {
        let (x, t, i) = sample(&mut rng);
        let (y, u, k) = sample(&mut rng);
        if i == k && x == y && t == u {
            continue;
        }
        report.pairs += 1;
        let d = handle_map_2d(count, x, t, i)?.distance(&handle_map_2d(count, y, u, k)?);
        report.min_distance = report.min_distance.min(d);
        if d < COLLISION_DISTANCE {
            report.collisions += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shear() -> BoundaryGluing {
        BoundaryGluing::from_fns(2, |t, s, _| (t + 0.3 * s.sin(), s), |t, s, _| (t - 0.3 * s.sin(), s)).unwrap()
    }

    #[test]
    fn matrix_validation() {
        assert_eq!(BoundaryGluing::uniform([[2, 0], [0, 1]], 1).unwrap_err(), SurgeryError::NotUnimodular(2));
        assert_eq!(BoundaryGluing::linear(vec![]).unwrap_err(), SurgeryError::NoComponents);
        assert!(BoundaryGluing::uniform([[0, 1], [1, 0]], 3).is_ok());
        assert!(BoundaryGluing::uniform([[2, 1], [1, 1]], 1).is_ok());
    }

    #[test]
    fn bad_inverse_rejected() {
        let e = BoundaryGluing::from_fns(1, |t, s, _| (t + 0.1, s), |t, s, _| (t, s)).unwrap_err();
        assert!(matches!(e, SurgeryError::RoundTrip(x) if (x - 0.1).abs() < 1e-12));
    }

    #[test]
    fn identity_and_twist() {
        let id = RadialExtension::new(BoundaryGluing::identity(1).unwrap());
        assert_eq!(id.apply(0.3, 1.0, 2.0, 0).unwrap(), [0.3, 1.0, 2.0]);
        let tw = RadialExtension::new(BoundaryGluing::dehn_twist(1).unwrap());
        let out = tw.apply(0.7, 4.0, 3.0, 0).unwrap();
        assert_eq!(out[0], 0.7);
        assert!((out[1] - (7.0 - TAU)).abs() < 1e-14 && out[2] == 3.0);
        let g = tw.gluing().apply(4.0, 3.0, 0).unwrap();
        assert_eq!(tw.apply(1.0, 4.0, 3.0, 0).unwrap(), [1.0, g.0, g.1]);
    }

    #[test]
    fn radius_and_component_errors() {
        let tw = RadialExtension::new(BoundaryGluing::dehn_twist(2).unwrap());
        assert_eq!(tw.apply(0.0, 0.0, 0.0, 0), Err(SurgeryError::BadRadius(0.0)));
        assert_eq!(tw.apply(1.0 + 1e-9, 0.0, 0.0, 0), Err(SurgeryError::BadRadius(1.0 + 1e-9)));
        assert_eq!(tw.apply(0.5, 0.0, 0.0, 2), Err(SurgeryError::BadComponent { j: 2, count: 2 }));
    }

    #[test]
    fn composition() {
        let tw = BoundaryGluing::dehn_twist(2).unwrap();
        match tw.compose(&tw).unwrap() {
            BoundaryGluing::Linear(m) => assert_eq!(m[0], [[1, 2], [0, 1]]),
            _ => panic!("expected matrix"),
        }
        let c = shear().compose(&tw).unwrap();
        let (a, b) = c.apply(1.0, 2.0, 1).unwrap();
        assert!(angle_diff(a, 3.0 + 0.3 * 2.0f64.sin()).abs() < 1e-14 && b == 2.0);
        assert!(c.round_trip_error().unwrap() < 1e-12);
    }

    #[test]
    fn derivative_checks() {
        assert!(matches!(
            derivative_control_check(&RadialExtension::new(BoundaryGluing::identity(1).unwrap()), 10, 0),
            Err(SurgeryError::TooFewSamples { .. })
        ));
        let id = derivative_control_check(&RadialExtension::new(BoundaryGluing::identity(1).unwrap()), 1000, 1).unwrap();
        for row in &id.rows {
            let diag = matches!(row.partial, "dr_dr" | "dtheta_dtheta" | "ds_ds");
            if !diag {
                assert_eq!(row.max_abs, 0.0, "{row:?}");
            }
        }
        let tw = derivative_control_check(&RadialExtension::new(BoundaryGluing::dehn_twist(3).unwrap()), 1000, 2).unwrap();
        assert!(tw.radial_ok());
        assert!(tw.bounded_by(1.0 + 1e-6), "{}", tw.bound);
        assert!(tw.radius_spread < 1e-6);
        for row in tw.rows.iter().filter(|r| r.partial == "dtheta_ds") {
            assert!((row.max_abs - 1.0).abs() < 1e-8);
        }
        assert_eq!(tw.rows.len(), 9 * DERIVATIVE_RADII);
        assert!(tw.to_csv().starts_with("r,partial_name,max_abs\n1,dr_dr,"));
        let sh = derivative_control_check(&RadialExtension::new(shear().compose(&BoundaryGluing::dehn_twist(2).unwrap()).unwrap()), 2000, 3).unwrap();
        assert!(sh.radial_ok());
        assert!(sh.bound < 1.31 && sh.radius_spread < 0.1);
    }

    #[test]
    fn handle_examples() {
        let x = [0.6, -0.8];
        let a = handle_map_2d(2, x, 0.25, 1).unwrap();
        assert_eq!((a.j, a.face), (1, 0));
        assert!((a.point[0] - 0.45).abs() < 1e-15 && (a.point[1] + 0.6).abs() < 1e-15);
        let b = handle_map_2d(2, x, 0.75, 1).unwrap();
        assert_eq!(b.face, 1);
        assert!((b.point[0] - 0.45).abs() < 1e-15);
        let c = handle_map_2d(1, x, 1e-12, 0).unwrap();
        assert!((c.point[0] - 0.6).abs() < 1e-11 && c.face == 0);
        assert_eq!(handle_map_2d(1, x, 0.5, 0), Err(SurgeryError::OnLink));
        assert_eq!(handle_map_2d(1, x, 1.0, 0), Err(SurgeryError::BadParameter(1.0)));
        assert_eq!(handle_map_2d(1, [1.0, 1.0], 0.2, 0), Err(SurgeryError::OutsideDisk([1.0, 1.0])));
        assert!(matches!(handle_map_2d(1, x, 0.2, 1), Err(SurgeryError::BadComponent { .. })));
    }

    #[test]
    fn injectivity_sampling() {
        let tw = RadialExtension::new(BoundaryGluing::dehn_twist(2).unwrap());
        let r = injectivity_radial(&tw, 10_000, 7).unwrap();
        assert_eq!((r.pairs, r.collisions), (10_000, 0));
        let h = injectivity_handle(3, 10_000, 8).unwrap();
        assert_eq!((h.pairs, h.collisions), (10_000, 0));
    }

    proptest! {
        #[test]
        fn half_separation(a in 0.0..TAU, t in 0.001f64..0.999, j in 0usize..4) {
            prop_assume!((t - 0.5).abs() > 1e-9);
            let img = handle_map_2d(4, [a.cos(), a.sin()], t, j).unwrap();
            let rad = img.point[0].hypot(img.point[1]);
            prop_assert_eq!(img.face, if t < 0.5 { 0 } else { 1 });
            prop_assert!(rad > 0.5 && rad < 1.0);
        }

        #[test]
        fn twist_round_trip(r in 1e-6f64..1.0, t in 0.0..TAU, s in 0.0..TAU) {
            let h = RadialExtension::new(BoundaryGluing::uniform([[2, 1], [1, 1]], 1).unwrap());
            let p = h.apply(r, t, s, 0).unwrap();
            let q = h.apply_inverse(p[0], p[1], p[2], 0).unwrap();
            prop_assert_eq!(q[0], r);
            prop_assert!(angle_diff(q[1], t).abs() < 1e-12 && angle_diff(q[2], s).abs() < 1e-12);
        }
    }
}

//! Virtual-space models: flat tori, links, tubular neighbourhoods and the
//! normal coordinates adapted to a link.
//!
//! Points are given in the chart box `[0, P_1) x ... x [0, P_d)` of the torus.
//! In dimension 2 a link component is a point; in dimension 3 it is a straight
//! coordinate circle running along one axis.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use thiserror::Error;

/// Slack allowed when deciding whether a point lies in the closed chart box.
const CHART_SLACK: f64 = 1e-9;

/// Below this transverse distance a point is treated as lying on the link.
const ON_LINK_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension must be 2 or 3, got {0}")]
    InvalidDimension(usize),
    #[error("expected {expected} periods, got {got}")]
    PeriodCount { expected: usize, got: usize },
    #[error("period {0} is not a positive finite number")]
    NonPositivePeriod(f64),
    #[error("point has {got} coordinates, model dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point {0:?} is outside the chart box")]
    OutsideChart(Vec<f64>),
    #[error("metric is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("a link needs at least one component")]
    EmptyLink,
    #[error("link component {index} does not fit the model: {reason}")]
    BadComponent { index: usize, reason: String },
    #[error("link components {0} and {1} intersect")]
    IntersectingComponents(usize, usize),
    #[error("radius bound {radius} must lie in (0, min(1, {half_gap})]")]
    InvalidRadiusBound { radius: f64, half_gap: f64 },
    #[error("tube radius {radius} must lie in (0, {bound})")]
    InvalidTubeRadius { radius: f64, bound: f64 },
    #[error("on-link point: normal coordinates are singular at r = 0")]
    OnLink,
    #[error("point at distance {distance} from the link is outside T(R), R = {bound}")]
    OutsideTube { distance: f64, bound: f64 },
    #[error("normal coordinates are invalid: {0}")]
    BadNormalCoords(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// A flat torus presented in its Cartesian chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    periods: Vec<f64>,
}

impl ManifoldModel {
    pub fn flat_torus(periods: &[f64]) -> Result<Self> {
        if periods.len() != 2 && periods.len() != 3 {
            return Err(GeometryError::InvalidDimension(periods.len()));
        }
        for &p in periods {
            if !(p.is_finite() && p > 0.0) {
                return Err(GeometryError::NonPositivePeriod(p));
            }
        }
        Ok(Self {
            periods: periods.to_vec(),
        })
    }

    /// The flat torus `R^d / (2 pi Z)^d`.
    pub fn standard(dimension: usize) -> Result<Self> {
        if dimension != 2 && dimension != 3 {
            return Err(GeometryError::InvalidDimension(dimension));
        }
        Self::flat_torus(&vec![2.0 * PI; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    /// Reduces a point into the half-open chart box.
    pub fn wrap(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.periods)
            .map(|(&xi, &p)| wrap_coord(xi, p))
            .collect()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dimension(),
                got: x.len(),
            });
        }
        let inside = x
            .iter()
            .zip(&self.periods)
            .all(|(&xi, &p)| xi.is_finite() && xi >= -CHART_SLACK && xi <= p + CHART_SLACK);
        if inside {
            Ok(())
        } else {
            Err(GeometryError::OutsideChart(x.to_vec()))
        }
    }

    /// The metric `g_ab` at a chart point. Built-in models are flat, so this is
    /// the identity.
    pub fn metric_at(&self, x: &[f64]) -> Result<MetricTensor> {
        self.check_point(x)?;
        MetricTensor::new(DMatrix::identity(self.dimension(), self.dimension()))
    }

    /// The conductivity `sqrt(det g) g^{-1}`.
    pub fn conductivity_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.metric_at(x)?.conductivity())
    }

    /// The 2-torus spanned by the two axes transverse to `axis`.
    pub fn transverse_model(&self, axis: usize) -> Result<ManifoldModel> {
        if self.dimension() != 3 || axis > 2 {
            return Err(GeometryError::InvalidDimension(self.dimension()));
        }
        let (a, b) = transverse_axes(axis);
        ManifoldModel::flat_torus(&[self.periods[a], self.periods[b]])
    }
}

pub(crate) fn wrap_coord(x: f64, period: f64) -> f64 {
    let w = x.rem_euclid(period);
    // rem_euclid can round up to exactly `period`
    if w >= period {
        0.0
    } else {
        w
    }
}

/// Minimum-image representative of a coordinate difference.
pub(crate) fn min_image(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

/// The transverse axes of a circle along `axis`, in cyclic order so that
/// `(r, theta, s)` is right-handed.
pub fn transverse_axes(axis: usize) -> (usize, usize) {
    ((axis + 1) % 3, (axis + 2) % 3)
}

/// A symmetric positive definite metric tensor together with its determinant
/// and inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor {
    components: DMatrix<f64>,
    det: f64,
    inverse: DMatrix<f64>,
}

impl MetricTensor {
    pub fn new(components: DMatrix<f64>) -> Result<Self> {
        let n = components.nrows();
        if n != components.ncols() || n == 0 {
            return Err(GeometryError::NotPositiveDefinite);
        }
        let scale = components.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (components[(i, j)] - components[(j, i)]).abs() > 1e-12 * scale {
                    return Err(GeometryError::NotPositiveDefinite);
                }
            }
        }
        let chol = components
            .clone()
            .cholesky()
            .ok_or(GeometryError::NotPositiveDefinite)?;
        let det = chol.l_dirty().diagonal().iter().map(|d| d * d).product();
        let inverse = chol.inverse();
        Ok(Self {
            components,
            det,
            inverse,
        })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn sqrt_det(&self) -> f64 {
        self.det.abs().sqrt()
    }

    /// `sqrt(|det g|) g^{-1}`.
    pub fn conductivity(&self) -> DMatrix<f64> {
        &self.inverse * self.sqrt_det()
    }
}

/// The flat metric written in normal coordinates `(r, theta[, s])` about a
/// straight link component.
pub fn normal_metric(dimension: usize, r: f64) -> Result<MetricTensor> {
    match dimension {
        2 => MetricTensor::diagonal(&[1.0, r * r]),
        3 => MetricTensor::diagonal(&[1.0, r * r, 1.0]),
        d => Err(GeometryError::InvalidDimension(d)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkComponent {
    /// A puncture of the 2-torus.
    Point { position: [f64; 2] },
    /// The circle `{x : x_t = base}` running along `axis` of the 3-torus;
    /// `base` holds the two transverse coordinates in the order given by
    /// [`transverse_axes`].
    Circle { axis: usize, base: [f64; 2] },
}

/// A link: finitely many disjoint components with a common radius bound `R`
/// below which their tubes are disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    model: ManifoldModel,
    components: Vec<LinkComponent>,
    radius_bound: f64,
}

impl Link {
    /// Builds a link; `radius_bound = None` selects `0.45 * gap` capped at 1,
    /// where `gap` is the smallest transverse distance between components
    /// (including a component and its own periodic image).
    pub fn new(
        model: &ManifoldModel,
        components: Vec<LinkComponent>,
        radius_bound: Option<f64>,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(GeometryError::EmptyLink);
        }
        for (index, c) in components.iter().enumerate() {
            validate_component(model, index, c)?;
        }
        let gap = min_gap(model, &components)?;
        let radius_bound = match radius_bound {
            Some(r) => {
                if !(r > 0.0 && r <= 1.0 && r <= gap / 2.0) {
                    return Err(GeometryError::InvalidRadiusBound {
                        radius: r,
                        half_gap: gap / 2.0,
                    });
                }
                r
            }
            None => (0.45 * gap).min(1.0),
        };
        Ok(Self {
            model: model.clone(),
            components,
            radius_bound,
        })
    }

    /// A single puncture of a 2-torus.
    pub fn single_point(model: &ManifoldModel, position: [f64; 2]) -> Result<Self> {
        Self::new(model, vec![LinkComponent::Point { position }], None)
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn components(&self) -> &[LinkComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn radius_bound(&self) -> f64 {
        self.radius_bound
    }

    pub fn dimension(&self) -> usize {
        self.model.dimension()
    }

    /// Minimum-image transverse offset from component `j` to `x`, together
    /// with the axial coordinate.
    fn transverse_offset(&self, j: usize, x: &[f64]) -> ([f64; 2], f64) {
        let p = self.model.periods();
        match self.components[j] {
            LinkComponent::Point { position } => (
                [
                    min_image(x[0] - position[0], p[0]),
                    min_image(x[1] - position[1], p[1]),
                ],
                0.0,
            ),
            LinkComponent::Circle { axis, base } => {
                let (a, b) = transverse_axes(axis);
                (
                    [
                        min_image(x[a] - base[0], p[a]),
                        min_image(x[b] - base[1], p[b]),
                    ],
                    wrap_coord(x[axis], p[axis]),
                )
            }
        }
    }

    /// Chart distance from `x` to component `j`.
    pub fn distance_to(&self, j: usize, x: &[f64]) -> f64 {
        let (d, _) = self.transverse_offset(j, x);
        d[0].hypot(d[1])
    }

    /// Nearest component and its distance; ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for j in 0..self.components.len() {
            let d = self.distance_to(j, x);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }

    /// `dist(x, L)`.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.nearest(x).1
    }

    pub fn tube(&self, radius: f64) -> Result<TubularNeighborhood> {
        TubularNeighborhood::new(self, radius)
    }

    /// Normal coordinates `(r, theta, s, j)` of a point of `T(R)`.
    pub fn to_normal_coords(&self, x: &[f64]) -> Result<NormalCoords> {
        self.model.check_point(x)?;
        let (j, r) = self.nearest(x);
        if r < ON_LINK_TOL {
            return Err(GeometryError::OnLink);
        }
        if r >= self.radius_bound {
            return Err(GeometryError::OutsideTube {
                distance: r,
                bound: self.radius_bound,
            });
        }
        Ok(self.normal_coords_unchecked(j, x))
    }

    /// Normal coordinates relative to component `j` without range checks.
    pub(crate) fn normal_coords_unchecked(&self, j: usize, x: &[f64]) -> NormalCoords {
        let (d, s) = self.transverse_offset(j, x);
        NormalCoords {
            r: d[0].hypot(d[1]),
            theta: d[1].atan2(d[0]),
            s,
            component: j,
        }
    }

    /// Inverse of [`Link::to_normal_coords`]; the result is wrapped into the
    /// chart box.
    pub fn from_normal_coords(&self, nc: &NormalCoords) -> Result<Vec<f64>> {
        if nc.component >= self.components.len() {
            return Err(GeometryError::BadNormalCoords(format!(
                "component {} out of range",
                nc.component
            )));
        }
        if !(nc.r > 0.0 && nc.r <= self.radius_bound) || !nc.theta.is_finite() || !nc.s.is_finite()
        {
            return Err(GeometryError::BadNormalCoords(format!(
                "r = {} must lie in (0, {}]",
                nc.r, self.radius_bound
            )));
        }
        Ok(self.point_at(nc.component, nc.r, nc.theta, nc.s))
    }

    pub fn point_at(&self, j: usize, r: f64, theta: f64, s: f64) -> Vec<f64> {
        let p = self.model.periods();
        let (dx, dy) = (r * theta.cos(), r * theta.sin());
        match self.components[j] {
            LinkComponent::Point { position } => vec![
                wrap_coord(position[0] + dx, p[0]),
                wrap_coord(position[1] + dy, p[1]),
            ],
            LinkComponent::Circle { axis, base } => {
                let (a, b) = transverse_axes(axis);
                let mut x = vec![0.0; 3];
                x[a] = wrap_coord(base[0] + dx, p[a]);
                x[b] = wrap_coord(base[1] + dy, p[b]);
                x[axis] = wrap_coord(s, p[axis]);
                x
            }
        }
    }

    /// For a 3-D link of parallel circles: the 2-D link of their traces in
    /// the transverse torus.
    pub fn transverse_link(&self) -> Result<(usize, Link)> {
        let mut axis = None;
        let mut points = Vec::with_capacity(self.components.len());
        for (index, c) in self.components.iter().enumerate() {
            match *c {
                LinkComponent::Circle { axis: a, base } => {
                    if axis.is_some_and(|prev| prev != a) {
                        return Err(GeometryError::BadComponent {
                            index,
                            reason: "transverse reduction needs parallel circles".into(),
                        });
                    }
                    axis = Some(a);
                    points.push(LinkComponent::Point { position: base });
                }
                LinkComponent::Point { .. } => {
                    return Err(GeometryError::BadComponent {
                        index,
                        reason: "expected a circle".into(),
                    })
                }
            }
        }
        let axis = axis.ok_or(GeometryError::EmptyLink)?;
        let model = self.model.transverse_model(axis)?;
        let link = Link::new(&model, points, Some(self.radius_bound))?;
        Ok((axis, link))
    }
}

fn validate_component(model: &ManifoldModel, index: usize, c: &LinkComponent) -> Result<()> {
    let bad = |reason: &str| GeometryError::BadComponent {
        index,
        reason: reason.to_string(),
    };
    match *c {
        LinkComponent::Point { position } => {
            if model.dimension() != 2 {
                return Err(bad("points are links only in dimension 2"));
            }
            if !position.iter().all(|v| v.is_finite()) {
                return Err(bad("non-finite position"));
            }
        }
        LinkComponent::Circle { axis, base } => {
            if model.dimension() != 3 {
                return Err(bad("circles are links only in dimension 3"));
            }
            if axis > 2 {
                return Err(bad("axis must be 0, 1 or 2"));
            }
            if !base.iter().all(|v| v.is_finite()) {
                return Err(bad("non-finite base point"));
            }
        }
    }
    Ok(())
}

/// Smallest transverse separation between components, including the distance
/// from a component to its own periodic translates.
fn min_gap(model: &ManifoldModel, comps: &[LinkComponent]) -> Result<f64> {
    let p = model.periods();
    let mut gap = f64::INFINITY;
    for (i, ci) in comps.iter().enumerate() {
        let self_gap = match *ci {
            LinkComponent::Point { .. } => p[0].min(p[1]),
            LinkComponent::Circle { axis, .. } => {
                let (a, b) = transverse_axes(axis);
                p[a].min(p[b])
            }
        };
        gap = gap.min(self_gap);
        for (j, cj) in comps.iter().enumerate().skip(i + 1) {
            let d = match (*ci, *cj) {
                (LinkComponent::Point { position: u }, LinkComponent::Point { position: v }) => {
                    min_image(u[0] - v[0], p[0]).hypot(min_image(u[1] - v[1], p[1]))
                }
                (
                    LinkComponent::Circle { axis: a1, base: b1 },
                    LinkComponent::Circle { axis: a2, base: b2 },
                ) => {
                    if a1 == a2 {
                        let (a, b) = transverse_axes(a1);
                        let _ = (a, b);
                        min_image(b1[0] - b2[0], p[a]).hypot(min_image(b1[1] - b2[1], p[b]))
                    } else {
                        // skew straight circles: only the axis normal to both separates them
                        let third = 3 - a1 - a2;
                        let c1 = circle_coord(a1, b1, third);
                        let c2 = circle_coord(a2, b2, third);
                        min_image(c1 - c2, p[third]).abs()
                    }
                }
                _ => return Err(GeometryError::BadComponent {
                    index: j,
                    reason: "mixed component kinds".into(),
                }),
            };
            if d < ON_LINK_TOL {
                return Err(GeometryError::IntersectingComponents(i, j));
            }
            gap = gap.min(d);
        }
    }
    Ok(gap)
}

/// Coordinate along `axis_q` of a circle running along `axis`.
fn circle_coord(axis: usize, base: [f64; 2], axis_q: usize) -> f64 {
    let (a, _) = transverse_axes(axis);
    if axis_q == a {
        base[0]
    } else {
        base[1]
    }
}

/// Normal coordinates adapted to a link: distance to the component, angle
/// in its transverse plane, axial position, and the component index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalCoords {
    pub r: f64,
    pub theta: f64,
    pub s: f64,
    pub component: usize,
}

/// `T(eps)`: the points within distance `eps` of the link.
#[derive(Debug, Clone, PartialEq)]
pub struct TubularNeighborhood {
    link: Link,
    radius: f64,
}

impl TubularNeighborhood {
    pub fn new(link: &Link, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius < link.radius_bound()) {
            return Err(GeometryError::InvalidTubeRadius {
                radius,
                bound: link.radius_bound(),
            });
        }
        Ok(Self {
            link: link.clone(),
            radius,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn link(&self) -> &Link {
        &self.link
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.link.distance(x) < self.radius
    }

    /// Measure of `T(eps)`: `J pi eps^2` in 2-D, `pi eps^2` times the axial
    /// period summed over components in 3-D.
    pub fn volume(&self) -> f64 {
        let p = self.link.model().periods();
        self.link
            .components()
            .iter()
            .map(|c| match *c {
                LinkComponent::Point { .. } => PI * self.radius * self.radius,
                LinkComponent::Circle { axis, .. } => PI * self.radius * self.radius * p[axis],
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t3_link() -> Link {
        let m = ManifoldModel::standard(3).unwrap();
        Link::new(
            &m,
            vec![
                LinkComponent::Circle { axis: 2, base: [1.0, 1.0] },
                LinkComponent::Circle { axis: 2, base: [4.0, 4.0] },
            ],
            Some(0.4),
        )
        .unwrap()
    }

    #[test]
    fn flat_metrics_are_identity() {
        for d in [2, 3] {
            let m = ManifoldModel::standard(d).unwrap();
            let x = vec![0.3; d];
            let g = m.metric_at(&x).unwrap();
            assert_eq!(g.components(), &DMatrix::identity(d, d));
            assert_eq!(m.conductivity_at(&x).unwrap(), DMatrix::identity(d, d));
        }
    }

    #[test]
    fn normal_metric_conductivity() {
        let g = normal_metric(3, 0.5).unwrap();
        assert_eq!(g.components(), &DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.25, 1.0])));
        let s = g.conductivity();
        for (k, want) in [0.5, 2.0, 0.5].into_iter().enumerate() {
            assert!((s[(k, k)] - want).abs() < 1e-14);
        }
        let s = normal_metric(3, 0.25).unwrap().conductivity();
        for (k, want) in [0.25, 4.0, 0.25].into_iter().enumerate() {
            assert!((s[(k, k)] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn malformed_points_are_rejected() {
        let m = ManifoldModel::standard(2).unwrap();
        assert!(matches!(
            m.metric_at(&[1.0]),
            Err(GeometryError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            m.metric_at(&[f64::NAN, 1.0]),
            Err(GeometryError::OutsideChart(_))
        ));
        assert!(matches!(
            m.metric_at(&[7.0, 1.0]),
            Err(GeometryError::OutsideChart(_))
        ));
        assert!(ManifoldModel::flat_torus(&[1.0, -1.0]).is_err());
        assert!(ManifoldModel::standard(4).is_err());
    }

    #[test]
    fn default_radius_bound() {
        let m = ManifoldModel::standard(2).unwrap();
        let link = Link::single_point(&m, [1.0, 1.0]).unwrap();
        assert_eq!(link.radius_bound(), 1.0);
        let link = Link::new(
            &m,
            vec![
                LinkComponent::Point { position: [1.0, 1.0] },
                LinkComponent::Point { position: [2.0, 1.0] },
            ],
            None,
        )
        .unwrap();
        assert!((link.radius_bound() - 0.45).abs() < 1e-15);
        // across the periodic seam
        let link = Link::new(
            &m,
            vec![
                LinkComponent::Point { position: [0.1, 1.0] },
                LinkComponent::Point { position: [2.0 * PI - 0.1, 1.0] },
            ],
            None,
        )
        .unwrap();
        assert!((link.radius_bound() - 0.45 * 0.2).abs() < 1e-12);
        assert!(Link::new(
            &m,
            vec![
                LinkComponent::Point { position: [1.0, 1.0] },
                LinkComponent::Point { position: [2.0, 1.0] },
            ],
            Some(0.6),
        )
        .is_err());
    }

    #[test]
    fn skew_circles_must_not_meet() {
        let m = ManifoldModel::standard(3).unwrap();
        // axis 2 circle at (x, y) = (1, 1); axis 0 circle at (y, z) = (1, 3): they meet at y = 1
        let meet = Link::new(
            &m,
            vec![
                LinkComponent::Circle { axis: 2, base: [1.0, 1.0] },
                LinkComponent::Circle { axis: 0, base: [1.0, 3.0] },
            ],
            None,
        );
        assert!(matches!(meet, Err(GeometryError::IntersectingComponents(0, 1))));
        let apart = Link::new(
            &m,
            vec![
                LinkComponent::Circle { axis: 2, base: [1.0, 1.0] },
                LinkComponent::Circle { axis: 0, base: [2.0, 3.0] },
            ],
            None,
        )
        .unwrap();
        assert!((apart.radius_bound() - 0.45).abs() < 1e-12);
    }

    #[test]
    fn normal_coordinate_examples() {
        let link = t3_link();
        // on the link
        assert_eq!(link.to_normal_coords(&[1.0, 1.0, 2.0]), Err(GeometryError::OnLink));
        // transverse offset (0.3, 0) from component 1
        let nc = link.to_normal_coords(&[4.3, 4.0, 2.0]).unwrap();
        assert_eq!(nc.component, 1);
        assert!((nc.r - 0.3).abs() < 1e-12 && nc.theta.abs() < 1e-12);
        assert!((nc.s - 2.0).abs() < 1e-15);
        // round trip
        let nc = NormalCoords { r: 0.2, theta: 1.0, s: 0.5, component: 1 };
        let x = link.from_normal_coords(&nc).unwrap();
        let back = link.to_normal_coords(&x).unwrap();
        assert_eq!(back.component, 1);
        assert!((back.r - 0.2).abs() < 1e-12);
        assert!((back.theta - 1.0).abs() < 1e-12);
        assert!((back.s - 0.5).abs() < 1e-12);
        // outside T(R)
        assert!(matches!(
            link.to_normal_coords(&[2.0, 1.0, 0.0]),
            Err(GeometryError::OutsideTube { .. })
        ));
    }

    #[test]
    fn cylindrical_change_of_variables_gives_normal_metric() {
        // pull the identity back through (r, theta, s) -> x and compare with diag(1, r^2, 1)
        let link = t3_link();
        let (r, th, s) = (0.3, 0.7, 1.1);
        let h = 1e-6;
        let f = |r: f64, th: f64, s: f64| link.point_at(0, r, th, s);
        let cols: Vec<Vec<f64>> = [(h, 0.0, 0.0), (0.0, h, 0.0), (0.0, 0.0, h)]
            .iter()
            .map(|&(dr, dt, ds)| {
                let p = f(r + dr, th + dt, s + ds);
                let q = f(r - dr, th - dt, s - ds);
                p.iter().zip(&q).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect();
        let g = normal_metric(3, r).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let gab: f64 = (0..3).map(|k| cols[a][k] * cols[b][k]).sum();
                assert!((gab - g.components()[(a, b)]).abs() < 1e-8, "{a}{b}: {gab}");
            }
        }
    }

    #[test]
    fn sampled_invariants() {
        let link = t3_link();
        let m = link.model().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (e1, e2) = (0.1, 0.3);
        let t1 = link.tube(e1).unwrap();
        let t2 = link.tube(e2).unwrap();
        for _ in 0..1000 {
            let x: Vec<f64> = m.periods().iter().map(|&p| rng.random_range(0.0..p)).collect();
            if t1.contains(&x) {
                assert!(t2.contains(&x));
            }
            // conductivity = sqrt(det) inverse, computed independently
            let g = m.metric_at(&x).unwrap();
            let s = m.conductivity_at(&x).unwrap();
            let s2 = g.components().clone().try_inverse().unwrap() * g.components().determinant().sqrt();
            assert!((s - s2).amax() < 1e-12);
            if link.distance(&x) < link.radius_bound() {
                let nc = link.to_normal_coords(&x).unwrap();
                assert!((nc.r - link.distance(&x)).abs() < 1e-12);
                let y = link.from_normal_coords(&nc).unwrap();
                for (a, b) in x.iter().zip(&y) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tube_radius_must_be_below_bound() {
        let link = t3_link();
        assert!(link.tube(0.0).is_err());
        assert!(link.tube(0.4).is_err());
        let t = link.tube(0.1).unwrap();
        assert!((t.volume() - 2.0 * PI * 0.01 * 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn transverse_reduction() {
        let (axis, l2) = t3_link().transverse_link().unwrap();
        assert_eq!(axis, 2);
        assert_eq!(l2.dimension(), 2);
        assert_eq!(l2.radius_bound(), 0.4);
    }
}

//! Numerical laboratory for transformation-optics cloaking of links on flat
//! tori: blow-up maps, singular conductivities, Helmholtz problems on
//! shrinking tubular neighbourhoods and the convergence checks built on them.

pub mod convergence;
pub mod forms;
pub mod geometry;
pub mod helmholtz;
pub mod mesh;
pub mod quadrature;
pub mod sparse;
pub mod surgery;
pub mod transform;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Transform(#[from] transform::TransformError),
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Forms(#[from] forms::FormsError),
    #[error(transparent)]
    Sparse(#[from] sparse::SparseError),
    #[error(transparent)]
    Helmholtz(#[from] helmholtz::HelmholtzError),
    #[error(transparent)]
    Convergence(#[from] convergence::ConvergenceError),
    #[error(transparent)]
    Surgery(#[from] surgery::SurgeryError),
}

//! Registration, matching, interpolation and extrapolation of 2-D and 3-D
//! point-cloud shapes with smooth, divergence-free deformation fields.
//!
//! The deformation is the time-one flow of a stationary velocity field
//! expanded in the curls of Dirichlet Laplacian eigenfunctions on the unit
//! cube. Its coefficients are estimated by expectation maximization: soft
//! correspondences with an outlier component in the E-step, one damped
//! Huber-reweighted Gauss-Newton step in the M-step.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar for the common cases.

pub mod basis;
pub mod cli;
pub mod descriptors;
pub mod domain;
pub mod em;
pub mod error;
pub mod eval;
pub mod flow;
pub mod format;
pub mod scalar;
mod spatial;

pub use basis::{CoefficientVector, DeformationBasis, ModeIndex};
pub use descriptors::{DescriptorProvenance, DescriptorSet, DistanceModel};
pub use domain::{DomainTransform, Mesh, PointCloud, SampleIndexSet};
pub use em::{CorrespondenceMatrix, EmConfig, EmState};
pub use error::{Error, Result};
pub use eval::{EvalReport, GeodesicIndex, SurfaceDistanceReport};
pub use flow::{FlowConfig, JacobianStack, TrajectoryBundle};
pub use scalar::Real;

pub type PointCloud64 = PointCloud<f64>;
pub type PointCloud32 = PointCloud<f32>;
pub type Mesh64 = Mesh<f64>;
pub type Mesh32 = Mesh<f32>;
pub type DeformationBasis64 = DeformationBasis<f64>;
pub type DeformationBasis32 = DeformationBasis<f32>;
pub type CoefficientVector64 = CoefficientVector<f64>;
pub type CoefficientVector32 = CoefficientVector<f32>;
pub type FlowConfig64 = FlowConfig<f64>;
pub type TrajectoryBundle64 = TrajectoryBundle<f64>;
pub type EmConfig64 = EmConfig<f64>;
pub type EmState64 = EmState<f64>;
pub type DistanceModel64 = DistanceModel<f64>;

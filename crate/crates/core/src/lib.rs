//! Lie group convolution networks with scale-rotation equivariance.
//!
//! Images are lifted onto SO(2), SE(2) or SIM(2) point sets, convolved with
//! kernels that are small MLPs over Lie-algebra coordinates, pooled and
//! classified. The [`equiv`] module audits the equivariance guarantees.

pub mod data;
pub mod equiv;
pub mod error;
pub mod lie;
pub mod lifting;
pub mod network;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
pub use lie::{AlgebraVector, GroupElement, GroupKind, SimilarityTransform};
pub use lifting::{LiftedSet, PixelGrid};
pub use network::conv::{GroupConvLayerConfig, KernelArgument, KernelNet};
pub use network::{Mode, Model, ModelConfig, Parameters, TrainConfig};
pub use sampling::{DistanceMatrix, Metric, Neighborhood};

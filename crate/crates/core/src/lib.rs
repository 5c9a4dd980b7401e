//! Geometry-aware surrogate for bottle top-load simulations.
//!
//! A physics-attention encoder maps a point cloud (coordinates + normals) to per-node
//! displacements. Its final latent field is max-pooled into the branch input of an operator
//! network whose trunk takes time, producing the reaction-force history. Both heads are
//! trained jointly on synthetic data from [`oracle`].

pub mod deeponet;
pub mod error;
pub mod geometry;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod pipeline;
pub mod transolver;

pub use error::{Error, ErrorClass, Result};
pub use model::{HybridModel, ModelParams};
pub use numerics::{Real, Tensor};
pub use transolver::ModelConfig;

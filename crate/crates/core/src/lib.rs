//! Dynamic multi-scale training of dilated convolutional networks for dense
//! per-pixel classification of multi-band rasters.
//!
//! Training draws a new patch size for every batch, trains one
//! resolution-preserving network on all sizes, and keeps a per-size score so
//! that inference can run at the best-scoring size.

pub mod data;
pub mod engine;
pub mod error;
pub mod gradcheck;
pub mod infer;
pub mod metrics;
pub mod models;
pub mod scheduler;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use models::{Architecture, NetworkSpec, Params};
pub use scheduler::{PatchSizeDistribution, ScoreMode, ScoreTable};
pub use tensor::{Real, Shape, Tensor};

//! Sheet-metal part pipeline: document ingestion, meshing, depth
//! rendering, synthetic BOP-style datasets, symmetry-aware pose metrics
//! and pluggable pose estimators.

pub mod docparse;
pub mod fixtures;
pub mod geometry;
pub mod metrics;
pub mod pose;
pub mod raster;
pub mod scenegen;
pub mod estimator;

pub use pose::Pose;

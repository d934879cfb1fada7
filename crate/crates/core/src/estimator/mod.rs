//! Pose estimators: a noisy ground-truth oracle and a classical contour
//! matcher for flat parts resting on a known plane.

mod components;
mod contour;
mod kdtree;
mod oracle;

use thiserror::Error;

use crate::metrics::Detection;
use crate::pose::Pose;
use crate::raster::{CameraIntrinsics, DepthMap};
use crate::scenegen::{LoadedModels, SceneImage};

pub use components::{binarize, connected_components, otsu_threshold, Component};
pub use contour::{plane_yaw, ContourEstimator, ContourParams, LibraryEntry};
pub use kdtree::KdTree2;
pub use oracle::{oracle_estimate, OracleNoise};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("unsupported input: {0}")]
    UnsupportedInput(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown estimator `{name}` (valid: {valid})")]
    UnknownEstimator { name: String, valid: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImagePayload {
    /// Per-pixel instance labels (0 = background) with optional depth.
    Synthetic { labels: Vec<u32>, depth: Option<DepthMap> },
    /// Single-channel 8-bit image, binarized before segmentation.
    Intensity(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorInput {
    pub image: ImagePayload,
    pub cam: CameraIntrinsics,
    pub frame_id: u64,
    /// Ground-plane frame in camera coordinates (plane is its z = 0).
    pub plane: Option<Pose>,
}

impl EstimatorInput {
    /// Labels from the visible masks, with the scene's depth and plane.
    pub fn from_scene_image(image: &SceneImage, frame_id: u64) -> Self {
        Self {
            image: ImagePayload::Synthetic { labels: image.label_image(), depth: Some(image.depth.clone()) },
            cam: image.annotation.cam,
            frame_id,
            plane: Some(image.annotation.plane()),
        }
    }

    /// Label image for segmentation.
    pub fn labels(&self) -> Vec<u32> {
        match &self.image {
            ImagePayload::Synthetic { labels, .. } => labels.clone(),
            ImagePayload::Intensity(gray) => binarize(gray),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorOutput {
    /// Descending score order; every detection carries a pose.
    pub detections: Vec<Detection>,
    pub compute_time_ms: f64,
    pub diagnostics: Vec<String>,
}

impl EstimatorOutput {
    pub(crate) fn sort_by_score(&mut self) {
        self.detections.sort_by(|a, b| b.score.total_cmp(&a.score));
    }
}

/// Frame-level estimator interface used by the server and CLI.
pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, input: &EstimatorInput) -> Result<EstimatorOutput, EstimatorError>;
}

/// Returns no detections; useful for protocol testing.
pub struct NullEstimator;

impl Estimator for NullEstimator {
    fn name(&self) -> &'static str {
        "null"
    }

    fn estimate(&self, _input: &EstimatorInput) -> Result<EstimatorOutput, EstimatorError> {
        Ok(EstimatorOutput::default())
    }
}

/// Library entries for every model with a stored profile, plus the ids of
/// models that have none (the contour estimator cannot use those).
pub fn library_from_models(models: &LoadedModels) -> (Vec<LibraryEntry>, Vec<u32>) {
    let mut entries = Vec::new();
    let mut missing = Vec::new();
    for (&id, mesh) in &models.meshes {
        match models.profiles.get(&id) {
            Some(p) => entries.push(LibraryEntry::new(mesh.clone(), p, models.symmetries(id))),
            None => missing.push(id),
        }
    }
    (entries, missing)
}

/// Names accepted by [`build_estimator`].
pub const ESTIMATOR_NAMES: [&str; 2] = ["contour", "null"];

pub fn build_estimator(
    name: &str,
    library: Vec<LibraryEntry>,
    params: ContourParams,
) -> Result<Box<dyn Estimator>, EstimatorError> {
    match name {
        "contour" => Ok(Box::new(ContourEstimator::new(library, params)?)),
        "null" => Ok(Box::new(NullEstimator)),
        _ => Err(EstimatorError::UnknownEstimator { name: name.to_string(), valid: ESTIMATOR_NAMES.join(", ") }),
    }
}

//! Profile triangulation, extrusion to sheet thickness, symmetry detection
//! and mesh export.

mod mesh;
mod ply;
mod symmetry;
mod triangulate;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mesh::{extrude, max_pairwise_distance, TriMesh, DEFAULT_THICKNESS};
pub use ply::{export_ply, import_ply, read_ply, write_ply};
pub use symmetry::{
    detect_symmetries, SymmetrySet, DEFAULT_ANGULAR_STEP_DEG, DEFAULT_SYMMETRY_TOLERANCE,
};
pub use triangulate::{triangulate, Triangulation};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("PLY parse error at line {line}: {message}")]
    Ply { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Per-model metadata in the `models_info.json` layout: diameter, extents
/// and the discrete symmetry set as row-major 3×3 rotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub diameter: f64,
    pub min_x: f64,
    pub min_y: f64,
    pub min_z: f64,
    pub size_x: f64,
    pub size_y: f64,
    pub size_z: f64,
    #[serde(default)]
    pub symmetries_discrete: Vec<[f64; 9]>,
}

impl ModelInfo {
    pub fn new(mesh: &TriMesh, symmetries: &SymmetrySet) -> Self {
        let (lo, hi) = mesh.bounds();
        Self {
            diameter: mesh.diameter,
            min_x: lo.x,
            min_y: lo.y,
            min_z: lo.z,
            size_x: hi.x - lo.x,
            size_y: hi.y - lo.y,
            size_z: hi.z - lo.z,
            symmetries_discrete: symmetries.to_row_major(),
        }
    }

    pub fn symmetry_set(&self) -> SymmetrySet {
        SymmetrySet::from_row_major(&self.symmetries_discrete)
    }
}

pub fn write_models_info(path: &Path, info: &BTreeMap<u32, ModelInfo>) -> Result<(), GeometryError> {
    let text = serde_json::to_string_pretty(info)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_models_info(path: &Path) -> Result<BTreeMap<u32, ModelInfo>, GeometryError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// File name used for a model inside a `models/` directory.
pub fn model_file_name(category_id: u32) -> String {
    format!("obj_{category_id:06}.ply")
}

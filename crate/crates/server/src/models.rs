//! Static wireframe data for clients: feature edges of each model mesh.

use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use flatpose_core::geometry::TriMesh;
use flatpose_core::scenegen::LoadedModels;

/// Edges between faces meeting at more than this angle are kept.
pub const FEATURE_ANGLE_DEG: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEdges {
    pub category_id: u32,
    pub diameter: f64,
    /// Axis-aligned model-frame box: `[min_x, min_y, min_z, max_x, max_y, max_z]`.
    pub bbox: [f64; 6],
    /// Model-frame vertices in mm.
    pub vertices: Vec<[f64; 3]>,
    /// Index pairs into `vertices`.
    pub edges: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIndexEntry {
    pub category_id: u32,
    pub diameter: f64,
    pub edges_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIndex {
    pub models: Vec<ModelIndexEntry>,
}

fn normal(mesh: &TriMesh, t: usize) -> Vector3<f64> {
    let [a, b, c] = mesh.triangle(t);
    (b - a).cross(&(c - a)).normalize()
}

/// Boundary edges and edges whose adjacent faces bend by more than
/// `angle_deg`, re-indexed over the vertices they use.
pub fn feature_edges(mesh: &TriMesh, angle_deg: f64) -> ModelEdges {
    let mut faces: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            faces.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let cos_limit = angle_deg.to_radians().cos();
    let mut keep: Vec<(u32, u32)> = faces
        .into_iter()
        .filter(|(_, ts)| ts.len() != 2 || normal(mesh, ts[0]).dot(&normal(mesh, ts[1])) < cos_limit)
        .map(|(e, _)| e)
        .collect();
    keep.sort_unstable();
    let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
    for &(a, b) in &keep {
        remap.insert(a, 0);
        remap.insert(b, 0);
    }
    let mut vertices = Vec::with_capacity(remap.len());
    for (k, (v, slot)) in remap.iter_mut().enumerate() {
        *slot = k as u32;
        let p = mesh.vertices[*v as usize];
        vertices.push([p.x, p.y, p.z]);
    }
    let edges = keep.iter().map(|(a, b)| [remap[a], remap[b]]).collect();
    let (lo, hi) = mesh.bounds();
    ModelEdges {
        category_id: mesh.category_id,
        diameter: mesh.diameter,
        bbox: [lo.x, lo.y, lo.z, hi.x, hi.y, hi.z],
        vertices,
        edges,
    }
}

/// Edge sets for every loaded model plus the index listing them.
pub fn export_edges(models: &LoadedModels) -> (ModelIndex, BTreeMap<u32, ModelEdges>) {
    let edges: BTreeMap<u32, ModelEdges> =
        models.meshes.iter().map(|(&id, m)| (id, feature_edges(m, FEATURE_ANGLE_DEG))).collect();
    let models = edges
        .values()
        .map(|e| ModelIndexEntry {
            category_id: e.category_id,
            diameter: e.diameter,
            edges_url: format!("/models/{}/edges.json", e.category_id),
        })
        .collect();
    (ModelIndex { models }, edges)
}

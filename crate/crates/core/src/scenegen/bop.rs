//! BOP-style dataset layout:
//!
//! ```text
//! models/obj_000001.ply, models_info.json, obj_000001_profile.json
//! test/000000/scene_gt.json, scene_camera.json, scene_gt_info.json,
//!             depth/000000.png, mask_visib/000000_000000.png
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{InstanceAnnotation, Scene, SceneAnnotation, SceneImage};
use crate::docparse::Profile2D;
use crate::geometry::{
    export_ply, import_ply, model_file_name, read_models_info, write_models_info, GeometryError, ModelInfo,
    SymmetrySet, TriMesh,
};
use crate::pose::Pose;
use crate::raster::{
    read_depth_png, read_mask_png, write_depth_png, write_mask_png, CameraIntrinsics, RasterError, DEPTH_SCALE_MM,
};

#[derive(Debug, Error)]
pub enum BopError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: RasterError },
    #[error("{path}: {source}")]
    Geometry { path: PathBuf, source: GeometryError },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BopError + '_ {
    move |source| BopError::Io { path: path.to_path_buf(), source }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BopError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|source| BopError::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, BopError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| BopError::Json { path: path.to_path_buf(), source })
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GtEntry {
    cam_R_m2c: [f64; 9],
    cam_t_m2c: [f64; 3],
    obj_id: u32,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CameraEntry {
    cam_K: [f64; 9],
    depth_scale: f64,
    width: usize,
    height: usize,
    cam_R_w2c: [f64; 9],
    cam_t_w2c: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GtInfoEntry {
    visib_fract: f64,
    px_count_all: usize,
    px_count_visib: usize,
    bbox_visib: [i64; 4],
}

pub fn scene_dir(root: &Path, scene_id: u32) -> PathBuf {
    root.join("test").join(format!("{scene_id:06}"))
}

pub fn profile_file_name(category_id: u32) -> String {
    format!("obj_{category_id:06}_profile.json")
}

/// Writes meshes, `models_info.json` and (when present) the model-frame
/// profiles into `models_dir`.
pub fn write_models(
    models_dir: &Path,
    models: &[(TriMesh, Option<Profile2D>, SymmetrySet)],
) -> Result<(), BopError> {
    fs::create_dir_all(models_dir).map_err(io_err(models_dir))?;
    let mut info = BTreeMap::new();
    for (mesh, profile, sym) in models {
        let path = models_dir.join(model_file_name(mesh.category_id));
        export_ply(mesh, &path).map_err(|source| BopError::Geometry { path, source })?;
        if let Some(p) = profile {
            let path = models_dir.join(profile_file_name(mesh.category_id));
            fs::write(&path, p.to_json()).map_err(io_err(&path))?;
        }
        info.insert(mesh.category_id, ModelInfo::new(mesh, sym));
    }
    let path = models_dir.join("models_info.json");
    write_models_info(&path, &info).map_err(|source| BopError::Geometry { path, source })
}

/// Everything under a `models/` directory, keyed by category id.
#[derive(Debug, Clone, Default)]
pub struct LoadedModels {
    pub meshes: BTreeMap<u32, TriMesh>,
    pub info: BTreeMap<u32, ModelInfo>,
    pub profiles: BTreeMap<u32, Profile2D>,
}

impl LoadedModels {
    pub fn read(models_dir: &Path) -> Result<Self, BopError> {
        let info_path = models_dir.join("models_info.json");
        let info = read_models_info(&info_path).map_err(|source| BopError::Geometry { path: info_path, source })?;
        let mut meshes = BTreeMap::new();
        let mut profiles = BTreeMap::new();
        for &id in info.keys() {
            let path = models_dir.join(model_file_name(id));
            let mut mesh = import_ply(&path).map_err(|source| BopError::Geometry { path, source })?;
            mesh.category_id = id;
            meshes.insert(id, mesh);
            let ppath = models_dir.join(profile_file_name(id));
            if ppath.exists() {
                let text = fs::read_to_string(&ppath).map_err(io_err(&ppath))?;
                let mut p = Profile2D::from_json(&text)
                    .map_err(|source| BopError::Json { path: ppath.clone(), source })?;
                p.category_id = id;
                profiles.insert(id, p);
            }
        }
        Ok(Self { meshes, info, profiles })
    }

    pub fn symmetries(&self, id: u32) -> SymmetrySet {
        self.info.get(&id).map(|i| i.symmetry_set()).unwrap_or_default()
    }

    pub fn mesh_list(&self) -> Vec<TriMesh> {
        self.meshes.values().cloned().collect()
    }
}

/// Writes every scene under `root/test/`.
pub fn write_bop_dataset(scenes: &[Scene], root: &Path) -> Result<(), BopError> {
    if scenes.is_empty() {
        return Err(BopError::Format { path: root.to_path_buf(), message: "empty scene list".into() });
    }
    for scene in scenes {
        let dir = scene_dir(root, scene.scene_id);
        let depth_dir = dir.join("depth");
        let mask_dir = dir.join("mask_visib");
        fs::create_dir_all(&depth_dir).map_err(io_err(&depth_dir))?;
        fs::create_dir_all(&mask_dir).map_err(io_err(&mask_dir))?;
        let mut gt = BTreeMap::new();
        let mut cams = BTreeMap::new();
        let mut infos = BTreeMap::new();
        for img in &scene.images {
            let a = &img.annotation;
            let im = a.image_id;
            gt.insert(
                im,
                a.instances
                    .iter()
                    .map(|inst| GtEntry {
                        cam_R_m2c: inst.pose.rotation_row_major(),
                        cam_t_m2c: inst.pose.translation_array(),
                        obj_id: inst.category_id,
                    })
                    .collect::<Vec<_>>(),
            );
            cams.insert(
                im,
                CameraEntry {
                    cam_K: a.cam.k_matrix(),
                    depth_scale: DEPTH_SCALE_MM,
                    width: a.cam.width,
                    height: a.cam.height,
                    cam_R_w2c: a.world_to_cam.rotation_row_major(),
                    cam_t_w2c: a.world_to_cam.translation_array(),
                },
            );
            infos.insert(
                im,
                a.instances
                    .iter()
                    .map(|inst| GtInfoEntry {
                        visib_fract: inst.visible_fraction,
                        px_count_all: inst.px_count_all,
                        px_count_visib: inst.px_count_visib,
                        bbox_visib: inst.bbox_visib,
                    })
                    .collect::<Vec<_>>(),
            );
            let path = depth_dir.join(format!("{im:06}.png"));
            write_depth_png(&path, &img.depth).map_err(|source| BopError::Image { path, source })?;
            for (k, m) in img.visib_masks.iter().enumerate() {
                let path = mask_dir.join(format!("{im:06}_{k:06}.png"));
                write_mask_png(&path, m).map_err(|source| BopError::Image { path, source })?;
            }
        }
        write_json(&dir.join("scene_gt.json"), &gt)?;
        write_json(&dir.join("scene_camera.json"), &cams)?;
        write_json(&dir.join("scene_gt_info.json"), &infos)?;
    }
    Ok(())
}

/// Reads one scene directory.
pub fn read_scene(dir: &Path, scene_id: u32) -> Result<Scene, BopError> {
    let gt: BTreeMap<u32, Vec<GtEntry>> = read_json(&dir.join("scene_gt.json"))?;
    let cams: BTreeMap<u32, CameraEntry> = read_json(&dir.join("scene_camera.json"))?;
    let infos: BTreeMap<u32, Vec<GtInfoEntry>> = read_json(&dir.join("scene_gt_info.json"))?;
    let mut images = Vec::with_capacity(gt.len());
    for (&im, entries) in &gt {
        let format_err = |message: String| BopError::Format { path: dir.to_path_buf(), message };
        let c = cams.get(&im).ok_or_else(|| format_err(format!("image {im} missing from scene_camera.json")))?;
        let info = infos.get(&im).ok_or_else(|| format_err(format!("image {im} missing from scene_gt_info.json")))?;
        if info.len() != entries.len() {
            return Err(format_err(format!("image {im}: gt and gt_info lengths differ")));
        }
        let cam = CameraIntrinsics::from_k_matrix(&c.cam_K, c.width, c.height);
        let instances = entries
            .iter()
            .zip(info)
            .map(|(e, i)| InstanceAnnotation {
                category_id: e.obj_id,
                pose: Pose::from_row_major(&e.cam_R_m2c, &e.cam_t_m2c),
                visible_fraction: i.visib_fract,
                px_count_all: i.px_count_all,
                px_count_visib: i.px_count_visib,
                bbox_visib: i.bbox_visib,
            })
            .collect();
        let path = dir.join("depth").join(format!("{im:06}.png"));
        let depth = read_depth_png(&path).map_err(|source| BopError::Image { path, source })?;
        let visib_masks = (0..entries.len())
            .map(|k| {
                let path = dir.join("mask_visib").join(format!("{im:06}_{k:06}.png"));
                read_mask_png(&path).map_err(|source| BopError::Image { path, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        images.push(SceneImage {
            annotation: SceneAnnotation {
                scene_id,
                image_id: im,
                cam,
                world_to_cam: Pose::from_row_major(&c.cam_R_w2c, &c.cam_t_w2c),
                instances,
            },
            depth,
            visib_masks,
        });
    }
    Ok(Scene { scene_id, images })
}

/// Reads all scenes under `root/test/` in scene-id order.
pub fn read_bop_dataset(root: &Path) -> Result<Vec<Scene>, BopError> {
    let test = root.join("test");
    let mut ids = Vec::new();
    for entry in fs::read_dir(&test).map_err(io_err(&test))? {
        let entry = entry.map_err(io_err(&test))?;
        if let Some(id) = entry.file_name().to_str().and_then(|s| s.parse::<u32>().ok()) {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    ids.into_iter().map(|id| read_scene(&scene_dir(root, id), id)).collect()
}

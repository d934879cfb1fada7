//! Synthetic scenes of flat parts resting on a ground plane, rendered to
//! depth and visibility masks and written in a BOP-style layout.

mod bop;

use nalgebra::{Matrix3, Point2, Point3, Vector3};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::TriMesh;
use crate::pose::Pose;
use crate::raster::{
    project, render_depth, visibility_mask, CameraIntrinsics, DepthMap, Mask, DEFAULT_VISIBILITY_DELTA,
};

pub use bop::{
    profile_file_name, read_bop_dataset, read_scene, scene_dir, write_bop_dataset, write_models, BopError,
    LoadedModels,
};

#[derive(Debug, Error)]
pub enum SceneGenError {
    #[error("could not place part {placed} of {count} without overlap after {attempts} attempts")]
    Placement { placed: usize, count: usize, attempts: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Rejection budget for placing one part.
pub const MAX_PLACEMENT_REJECTIONS: usize = 1000;

pub(crate) fn scene_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

fn rot_x_half_turn() -> Matrix3<f64> {
    Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0)
}

/// World-frame resting pose drawn from `rng`: bottom face on z = 0, uniform
/// yaw, uniform center inside the `plane_extent` square, face-down with
/// probability 0.5.
pub fn sample_resting_pose_with<R: Rng>(mesh: &TriMesh, plane_extent: f64, rng: &mut R) -> Pose {
    let yaw = rng.random::<f64>() * std::f64::consts::TAU;
    let flipped = rng.random::<bool>();
    let half = plane_extent / 2.0;
    let x = rng.random_range(-half..=half);
    let y = rng.random_range(-half..=half);
    let mut rotation = Pose::rot_z(yaw).rotation;
    if flipped {
        rotation *= rot_x_half_turn();
    }
    Pose::new(rotation, Vector3::new(x, y, mesh.thickness() / 2.0))
}

pub fn sample_resting_pose(mesh: &TriMesh, plane_extent: f64, seed: u64) -> Pose {
    sample_resting_pose_with(mesh, plane_extent, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Camera placed on an upper-hemisphere ring, looking at the plane center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSampler {
    pub intrinsics: CameraIntrinsics,
    pub distance_mm: (f64, f64),
    pub elevation_deg: (f64, f64),
    pub roll_jitter_deg: f64,
    /// Re-draws until every part vertex projects inside the image; the
    /// best draw is kept when all attempts fail.
    pub frustum_attempts: usize,
}

impl Default for CameraSampler {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default_vga(),
            distance_mm: (600.0, 1200.0),
            elevation_deg: (30.0, 80.0),
            roll_jitter_deg: 10.0,
            frustum_attempts: 200,
        }
    }
}

/// World-to-camera pose of a camera at `center` looking at `target`, with
/// image "up" along `up`, then rolled by `roll` radians about the optical axis.
pub fn look_at(center: Point3<f64>, target: Point3<f64>, up: Vector3<f64>, roll: f64) -> Pose {
    let z = (target - center).normalize();
    let x = (-up).cross(&z).normalize();
    let y = z.cross(&x);
    let base = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let rotation = Pose::rot_z(roll).rotation * base;
    Pose::new(rotation, -(rotation * center.coords))
}

impl CameraSampler {
    pub fn validate(&self) -> Result<(), SceneGenError> {
        let bad = |m: &str| Err(SceneGenError::InvalidConfig(m.to_string()));
        if self.intrinsics.validate().is_err() {
            return bad("camera intrinsics");
        }
        let (d0, d1) = self.distance_mm;
        if !(d0 > 0.0 && d0 <= d1) {
            return bad("distance range");
        }
        let (e0, e1) = self.elevation_deg;
        if !(e0 > 0.0 && e0 <= e1 && e1 < 90.0) {
            return bad("elevation range must lie in (0, 90)");
        }
        if !(self.roll_jitter_deg >= 0.0) {
            return bad("roll jitter");
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Pose {
        let distance = rng.random_range(self.distance_mm.0..=self.distance_mm.1);
        let elevation = rng.random_range(self.elevation_deg.0..=self.elevation_deg.1).to_radians();
        let azimuth = rng.random::<f64>() * std::f64::consts::TAU;
        let j = self.roll_jitter_deg.to_radians();
        let roll = if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
        let center = Point3::new(
            distance * elevation.cos() * azimuth.cos(),
            distance * elevation.cos() * azimuth.sin(),
            distance * elevation.sin(),
        );
        look_at(center, Point3::origin(), Vector3::z(), roll)
    }

    fn in_frame_count(&self, world_to_cam: &Pose, points: &[Point3<f64>]) -> usize {
        let cam = &self.intrinsics;
        points
            .iter()
            .filter(|p| match project(&world_to_cam.apply(p), cam) {
                Ok(uv) => uv.x >= 0.0 && uv.y >= 0.0 && uv.x < cam.width as f64 && uv.y < cam.height as f64,
                Err(_) => false,
            })
            .count()
    }

    /// Samples a camera that keeps as many of `points` in frame as possible.
    pub fn sample_framing<R: Rng>(&self, rng: &mut R, points: &[Point3<f64>]) -> Pose {
        let mut best = (0usize, Pose::identity());
        for _ in 0..self.frustum_attempts.max(1) {
            let pose = self.sample(rng);
            let n = self.in_frame_count(&pose, points);
            if n == points.len() {
                return pose;
            }
            if n >= best.0 {
                best = (n, pose);
            }
        }
        best.1
    }
}

/// Convex hull (counter-clockwise) by Andrew's monotone chain.
pub fn convex_hull(points: &[Point2<f64>]) -> Vec<Point2<f64>> {
    let mut pts: Vec<Point2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<Point2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2<f64>>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Separating-axis test for convex polygons; touching counts as overlap.
pub fn convex_polygons_overlap(a: &[Point2<f64>], b: &[Point2<f64>]) -> bool {
    for poly in [a, b] {
        for i in 0..poly.len() {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            let axis = (-(q.y - p.y), q.x - p.x);
            let proj = |pts: &[Point2<f64>]| {
                pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    let d = v.x * axis.0 + v.y * axis.1;
                    (lo.min(d), hi.max(d))
                })
            };
            let (a0, a1) = proj(a);
            let (b0, b1) = proj(b);
            if a1 < b0 || b1 < a0 {
                return false;
            }
        }
    }
    true
}

/// Convex hull of the posed mesh projected onto the ground plane.
pub fn footprint(mesh: &TriMesh, world_pose: &Pose) -> Vec<Point2<f64>> {
    let pts: Vec<Point2<f64>> = mesh
        .vertices
        .iter()
        .map(|v| {
            let w = world_pose.apply(v);
            Point2::new(w.x, w.y)
        })
        .collect();
    convex_hull(&pts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceAnnotation {
    pub category_id: u32,
    /// Model-to-camera pose.
    pub pose: Pose,
    pub visible_fraction: f64,
    pub px_count_all: usize,
    pub px_count_visib: usize,
    /// `[x, y, w, h]` of the visible mask, `-1`s when empty.
    pub bbox_visib: [i64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub scene_id: u32,
    pub image_id: u32,
    pub cam: CameraIntrinsics,
    /// World-to-camera pose; the ground plane is world z = 0.
    pub world_to_cam: Pose,
    pub instances: Vec<InstanceAnnotation>,
}

impl SceneAnnotation {
    /// Pose of the ground plane frame in camera coordinates.
    pub fn plane(&self) -> Pose {
        self.world_to_cam
    }
}

/// One rendered view: annotation, quantized scene depth, and one visible
/// mask per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    pub annotation: SceneAnnotation,
    pub depth: DepthMap,
    pub visib_masks: Vec<Mask>,
}

impl SceneImage {
    /// Label image from the visible masks: `i + 1` for instance `i`.
    pub fn label_image(&self) -> Vec<u32> {
        let mut labels = vec![0u32; self.depth.width * self.depth.height];
        for (i, m) in self.visib_masks.iter().enumerate() {
            for (l, &b) in labels.iter_mut().zip(&m.data) {
                if b && *l == 0 {
                    *l = i as u32 + 1;
                }
            }
        }
        labels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: u32,
    pub images: Vec<SceneImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub scenes: usize,
    pub images_per_scene: usize,
    pub parts_per_scene: usize,
    pub plane_extent_mm: f64,
    pub visibility_delta_mm: f64,
    pub camera: CameraSampler,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            scenes: 50,
            images_per_scene: 1,
            parts_per_scene: 3,
            plane_extent_mm: 800.0,
            visibility_delta_mm: DEFAULT_VISIBILITY_DELTA,
            camera: CameraSampler::default(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SceneGenError> {
        let bad = |m: &str| Err(SceneGenError::InvalidConfig(m.to_string()));
        if self.scenes == 0 {
            return bad("scene count must be at least 1");
        }
        if self.images_per_scene == 0 || self.parts_per_scene == 0 {
            return bad("images per scene and parts per scene must be at least 1");
        }
        if !(self.plane_extent_mm > 0.0) || !(self.visibility_delta_mm >= 0.0) {
            return bad("plane extent and visibility delta");
        }
        self.camera.validate()
    }
}

/// Places `count` parts drawn from `parts` (distinct categories while the
/// library allows) with pairwise disjoint footprints. Returns library
/// indices and world poses.
pub fn place_parts<R: Rng>(
    parts: &[TriMesh],
    count: usize,
    plane_extent: f64,
    rng: &mut R,
) -> Result<Vec<(usize, Pose)>, SceneGenError> {
    if count == 0 || parts.is_empty() {
        return Err(SceneGenError::InvalidConfig("need at least one part and one library entry".into()));
    }
    let choice: Vec<usize> = if count <= parts.len() {
        sample_indices(rng, parts.len(), count).into_vec()
    } else {
        (0..count).map(|_| rng.random_range(0..parts.len())).collect()
    };
    let mut placed: Vec<(usize, Pose, Vec<Point2<f64>>)> = Vec::with_capacity(count);
    for &idx in &choice {
        let mut ok = false;
        for _ in 0..MAX_PLACEMENT_REJECTIONS {
            let pose = sample_resting_pose_with(&parts[idx], plane_extent, rng);
            let fp = footprint(&parts[idx], &pose);
            if placed.iter().all(|(_, _, other)| !convex_polygons_overlap(&fp, other)) {
                placed.push((idx, pose, fp));
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(SceneGenError::Placement {
                placed: placed.len(),
                count,
                attempts: MAX_PLACEMENT_REJECTIONS,
            });
        }
    }
    Ok(placed.into_iter().map(|(i, p, _)| (i, p)).collect())
}

/// Renders one view of placed parts and annotates every instance.
pub fn render_view(
    parts: &[TriMesh],
    placement: &[(usize, Pose)],
    world_to_cam: Pose,
    cam: &CameraIntrinsics,
    delta: f64,
    scene_id: u32,
    image_id: u32,
) -> SceneImage {
    let posed: Vec<(&TriMesh, Pose)> =
        placement.iter().map(|(i, w)| (&parts[*i], world_to_cam.compose(w))).collect();
    let (scene_depth, _) = render_depth(&posed, cam);
    let mut instances = Vec::with_capacity(posed.len());
    let mut visib_masks = Vec::with_capacity(posed.len());
    for (mesh, pose) in &posed {
        let (solo, _) = render_depth(&[(*mesh, *pose)], cam);
        let visib = visibility_mask(&solo, &scene_depth, delta).expect("same camera");
        let all = solo.covered_count();
        let vis = visib.count();
        let bbox_visib = visib.bbox().map(|b| b.map(|v| v as i64)).unwrap_or([-1; 4]);
        instances.push(InstanceAnnotation {
            category_id: mesh.category_id,
            pose: *pose,
            visible_fraction: if all > 0 { vis as f64 / all as f64 } else { 0.0 },
            px_count_all: all,
            px_count_visib: vis,
            bbox_visib,
        });
        visib_masks.push(visib);
    }
    SceneImage {
        annotation: SceneAnnotation { scene_id, image_id, cam: *cam, world_to_cam, instances },
        depth: scene_depth.quantized(),
        visib_masks,
    }
}

/// Places `count` parts and renders `images` camera views of them.
pub fn compose_scene(
    parts: &[TriMesh],
    count: usize,
    images: usize,
    config: &GenConfig,
    scene_id: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Scene, SceneGenError> {
    let placement = place_parts(parts, count, config.plane_extent_mm, rng)?;
    let points: Vec<Point3<f64>> = placement
        .iter()
        .flat_map(|(i, w)| parts[*i].vertices.iter().map(move |v| w.apply(v)))
        .collect();
    let images = (0..images as u32)
        .map(|image_id| {
            let world_to_cam = config.camera.sample_framing(rng, &points);
            render_view(
                parts,
                &placement,
                world_to_cam,
                &config.camera.intrinsics,
                config.visibility_delta_mm,
                scene_id,
                image_id,
            )
        })
        .collect();
    Ok(Scene { scene_id, images })
}

/// Generates `config.scenes` scenes in parallel. Scene `k` draws from its
/// own stream of the master seed, so output is independent of scheduling.
pub fn generate_dataset(parts: &[TriMesh], config: &GenConfig, seed: u64) -> Result<Vec<Scene>, SceneGenError> {
    config.validate()?;
    (0..config.scenes)
        .into_par_iter()
        .map(|k| {
            let mut rng = scene_rng(seed, k as u64);
            compose_scene(parts, config.parts_per_scene, config.images_per_scene, config, k as u32, &mut rng)
        })
        .collect()
}

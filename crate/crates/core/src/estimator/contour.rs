//! Silhouette-to-profile registration on a known ground plane.
//!
//! Each segmented component is back-projected onto the plane, its boundary
//! registered against every library profile (plain and face-down) by an
//! exhaustive in-plane rotation search followed by point-to-point ICP, and
//! the best-fitting profile lifted back to a camera-frame pose.

use std::time::Instant;

use nalgebra::{Matrix2, Matrix3, Point2, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::components::{connected_components, Component};
use super::kdtree::KdTree2;
use super::{Estimator, EstimatorError, EstimatorInput, EstimatorOutput};
use crate::docparse::{Polygon, Profile2D};
use crate::geometry::{SymmetrySet, TriMesh};
use crate::metrics::Detection;
use crate::pose::Pose;
use crate::raster::CameraIntrinsics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContourParams {
    /// Components with fewer pixels are skipped.
    pub min_component_px: usize,
    pub angle_step_deg: f64,
    pub icp_iterations: usize,
    /// Spacing of model boundary samples (mm).
    pub model_spacing_mm: f64,
    /// Points per side used during the rotation search.
    pub search_points: usize,
    /// Library entries whose area differs from the observed area by more
    /// than this factor are not considered (unless none pass).
    pub area_ratio_gate: f64,
}

impl Default for ContourParams {
    fn default() -> Self {
        Self {
            min_component_px: 50,
            angle_step_deg: 1.0,
            icp_iterations: 10,
            model_spacing_mm: 1.0,
            search_points: 160,
            area_ratio_gate: 1.5,
        }
    }
}

impl ContourParams {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let steps = 360.0 / self.angle_step_deg;
        if !(self.angle_step_deg > 0.0) || (steps - steps.round()).abs() > 1e-9 {
            return Err(EstimatorError::InvalidParams("angle_step_deg must divide 360".into()));
        }
        if !(self.model_spacing_mm > 0.0) || self.search_points < 3 || !(self.area_ratio_gate >= 1.0) {
            return Err(EstimatorError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

/// A library part: mesh, its profile in the mesh frame, and symmetries.
#[derive(Debug, Clone)]
pub struct LibraryEntry {
    pub mesh: TriMesh,
    pub profile: Profile2D,
    pub symmetries: SymmetrySet,
}

impl LibraryEntry {
    /// The profile is re-centered on its bounding box to match the mesh frame.
    pub fn new(mesh: TriMesh, profile: &Profile2D, symmetries: SymmetrySet) -> Self {
        Self { mesh, profile: profile.centered(), symmetries }
    }
}

fn sample_loop(poly: &Polygon, spacing: f64, out: &mut Vec<Point2<f64>>) {
    let n = poly.len();
    let mut carry = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let len = (b - a).norm();
        let mut s = carry;
        while s < len {
            out.push(a + (b - a) * (s / len));
            s += spacing;
        }
        carry = s - len;
    }
}

fn subsample(points: &[Point2<f64>], n: usize) -> Vec<Point2<f64>> {
    if points.len() <= n {
        return points.to_vec();
    }
    (0..n).map(|k| points[k * points.len() / n]).collect()
}

fn rot2(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// One orientation of a library profile (face-up or face-down).
struct Variant {
    mirrored: bool,
    points: Vec<Point2<f64>>,
    search: Vec<Point2<f64>>,
    tree: KdTree2,
    centroid: Point2<f64>,
}

struct Prepared {
    entry: LibraryEntry,
    area: f64,
    perimeter: f64,
    thickness: f64,
    variants: Vec<Variant>,
}

impl Prepared {
    fn new(entry: LibraryEntry, params: &ContourParams) -> Self {
        let perimeter = entry.profile.perimeter();
        // Keep the sample count bounded for very long parts.
        let spacing = params.model_spacing_mm.max(perimeter / 4000.0);
        let mut base = Vec::new();
        for l in entry.profile.loops() {
            sample_loop(l, spacing, &mut base);
        }
        let c = entry.profile.centroid();
        let variants = [false, true]
            .into_iter()
            .map(|mirrored| {
                let flip = |p: &Point2<f64>| if mirrored { Point2::new(p.x, -p.y) } else { *p };
                let points: Vec<Point2<f64>> = base.iter().map(flip).collect();
                Variant {
                    mirrored,
                    search: subsample(&points, params.search_points),
                    tree: KdTree2::new(points.clone()),
                    points,
                    centroid: flip(&c),
                }
            })
            .collect();
        Self {
            area: entry.profile.area(),
            perimeter,
            thickness: entry.mesh.thickness(),
            entry,
            variants,
        }
    }
}

/// Observed silhouette of one component on the plane.
struct Observation {
    points: Vec<Point2<f64>>,
    search: Vec<Point2<f64>>,
    tree: KdTree2,
    centroid: Point2<f64>,
    area: f64,
}

/// Intersects pixel rays with the plane z = `height` (plane frame).
struct PlaneProjector {
    cam: CameraIntrinsics,
    rot_t: Matrix3<f64>,
    center: Vector3<f64>,
    height: f64,
}

impl PlaneProjector {
    fn new(cam: CameraIntrinsics, plane: &Pose, height: f64) -> Self {
        let rot_t = plane.rotation.transpose();
        Self { cam, rot_t, center: -(rot_t * plane.translation), height }
    }

    /// Continuous pixel coordinates (pixel centers at +0.5).
    fn project(&self, u: f64, v: f64) -> Option<Point2<f64>> {
        let d = self.rot_t * Vector3::new((u - self.cam.cx) / self.cam.fx, (v - self.cam.cy) / self.cam.fy, 1.0);
        if d.z.abs() < 1e-12 {
            return None;
        }
        let s = (self.height - self.center.z) / d.z;
        if s <= 0.0 {
            return None;
        }
        Some(Point2::new(self.center.x + s * d.x, self.center.y + s * d.y))
    }
}

fn observe(comp: &Component, width: usize, proj: &PlaneProjector, search_points: usize) -> Option<Observation> {
    let [x0, y0, x1, y1] = comp.bounds;
    let bw = x1 - x0 + 1;
    let mut inside = vec![false; bw * (y1 - y0 + 1)];
    for &i in &comp.pixels {
        inside[(i / width - y0) * bw + (i % width - x0)] = true;
    }
    let is_in = |x: i64, y: i64| {
        x >= x0 as i64
            && y >= y0 as i64
            && x <= x1 as i64
            && y <= y1 as i64
            && inside[(y as usize - y0) * bw + (x as usize - x0)]
    };
    let mut points = Vec::new();
    let (mut area, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for &i in &comp.pixels {
        let (x, y) = ((i % width) as i64, (i / width) as i64);
        let (fx, fy) = (x as f64, y as f64);
        let left = proj.project(fx, fy + 0.5)?;
        let right = proj.project(fx + 1.0, fy + 0.5)?;
        let top = proj.project(fx + 0.5, fy)?;
        let bottom = proj.project(fx + 0.5, fy + 1.0)?;
        let center = proj.project(fx + 0.5, fy + 0.5)?;
        let a = right - left;
        let b = bottom - top;
        let da = (a.x * b.y - a.y * b.x).abs();
        area += da;
        cx += da * center.x;
        cy += da * center.y;
        // Crack edges between this pixel and outside neighbours.
        if !is_in(x - 1, y) {
            points.push(left);
        }
        if !is_in(x + 1, y) {
            points.push(right);
        }
        if !is_in(x, y - 1) {
            points.push(top);
        }
        if !is_in(x, y + 1) {
            points.push(bottom);
        }
    }
    if area <= 0.0 || points.len() < 3 {
        return None;
    }
    Some(Observation {
        search: subsample(&points, search_points),
        tree: KdTree2::new(points.clone()),
        points,
        centroid: Point2::new(cx / area, cy / area),
        area,
    })
}

/// 2D rigid transform mapping model points into plane coordinates.
#[derive(Debug, Clone, Copy)]
struct Rigid2 {
    theta: f64,
    t: Vector2<f64>,
}

impl Rigid2 {
    fn apply(&self, p: &Point2<f64>) -> Point2<f64> {
        Point2::from(rot2(self.theta) * p.coords + self.t)
    }

    fn inverse_apply(&self, p: &Point2<f64>) -> Point2<f64> {
        Point2::from(rot2(self.theta).transpose() * (p.coords - self.t))
    }
}

fn mean_nn(points: &[Point2<f64>], tree: &KdTree2, map: impl Fn(&Point2<f64>) -> Point2<f64>) -> f64 {
    points.iter().map(|p| tree.nearest_sq(&map(p)).sqrt()).sum::<f64>() / points.len() as f64
}

fn symmetric_cost(obs_pts: &[Point2<f64>], model_pts: &[Point2<f64>], obs: &Observation, v: &Variant, tf: &Rigid2) -> f64 {
    let forward = mean_nn(obs_pts, &v.tree, |o| tf.inverse_apply(o));
    let backward = mean_nn(model_pts, &obs.tree, |m| tf.apply(m));
    0.5 * (forward + backward)
}

/// Rotation order 0, +1, −1, +2, … steps so that ties resolve to the
/// smallest rotation.
fn search_angles(step_deg: f64) -> Vec<f64> {
    let n = (360.0 / step_deg).round() as i64;
    let mut out = vec![0.0];
    for k in 1..=n / 2 {
        out.push(k as f64 * step_deg);
        if k != n - k {
            out.push(-(k as f64) * step_deg);
        }
    }
    out.into_iter().map(f64::to_radians).collect()
}

struct Fit {
    transform: Rigid2,
    mirrored: bool,
    residual: f64,
}

fn register(obs: &Observation, v: &Variant, params: &ContourParams) -> Fit {
    let at = |theta: f64| Rigid2 { theta, t: obs.centroid.coords - rot2(theta) * v.centroid.coords };
    let mut best = (f64::INFINITY, at(0.0));
    for theta in search_angles(params.angle_step_deg) {
        let tf = at(theta);
        let cost = symmetric_cost(&obs.search, &v.search, obs, v, &tf);
        if cost < best.0 - 1e-9 {
            best = (cost, tf);
        }
    }
    let mut tf = best.1;
    for _ in 0..params.icp_iterations {
        let pairs: Vec<(Point2<f64>, Point2<f64>)> = obs
            .points
            .iter()
            .filter_map(|o| v.tree.nearest(&tf.inverse_apply(o)).map(|m| (m, *o)))
            .collect();
        let n = pairs.len() as f64;
        let mc = pairs.iter().fold(Vector2::zeros(), |s, (m, _)| s + m.coords) / n;
        let oc = pairs.iter().fold(Vector2::zeros(), |s, (_, o)| s + o.coords) / n;
        let (mut dot, mut cross) = (0.0, 0.0);
        for (m, o) in &pairs {
            let a = m.coords - mc;
            let b = o.coords - oc;
            dot += a.dot(&b);
            cross += a.x * b.y - a.y * b.x;
        }
        let theta = cross.atan2(dot);
        tf = Rigid2 { theta, t: oc - rot2(theta) * mc };
    }
    let residual = symmetric_cost(&obs.points, &v.points, obs, v, &tf);
    Fit { transform: tf, mirrored: v.mirrored, residual }
}

pub struct ContourEstimator {
    library: Vec<Prepared>,
    params: ContourParams,
}

impl ContourEstimator {
    pub fn new(library: Vec<LibraryEntry>, params: ContourParams) -> Result<Self, EstimatorError> {
        params.validate()?;
        let library = library.into_iter().map(|e| Prepared::new(e, &params)).collect();
        Ok(Self { library, params })
    }

    pub fn library_ids(&self) -> Vec<u32> {
        self.library.iter().map(|p| p.entry.mesh.category_id).collect()
    }

    fn match_component(
        &self,
        comp: &Component,
        input: &EstimatorInput,
        plane: &Pose,
    ) -> Option<(Detection, f64)> {
        let cam = &input.cam;
        // Observations are cached per plane height (thickness).
        let mut cache: Vec<(f64, Option<Observation>)> = Vec::new();
        let mut candidates: Vec<(usize, Fit)> = Vec::new();
        let mut gated_out: Vec<usize> = Vec::new();
        for (idx, prep) in self.library.iter().enumerate() {
            let h = prep.thickness / 2.0;
            if !cache.iter().any(|(k, _)| *k == h) {
                let proj = PlaneProjector::new(*cam, plane, h);
                cache.push((h, observe(comp, cam.width, &proj, self.params.search_points)));
            }
            let Some(obs) = cache.iter().find(|(k, _)| *k == h).and_then(|(_, o)| o.as_ref()) else { continue };
            let ratio = obs.area / prep.area;
            if ratio > self.params.area_ratio_gate || ratio < 1.0 / self.params.area_ratio_gate {
                gated_out.push(idx);
                continue;
            }
            candidates.push((idx, self.best_variant(obs, prep)));
        }
        if candidates.is_empty() {
            for idx in gated_out {
                let prep = &self.library[idx];
                let h = prep.thickness / 2.0;
                if let Some(obs) = cache.iter().find(|(k, _)| *k == h).and_then(|(_, o)| o.as_ref()) {
                    candidates.push((idx, self.best_variant(obs, prep)));
                }
            }
        }
        let (idx, fit) = candidates.into_iter().min_by(|(ia, a), (ib, b)| {
            let na = a.residual / self.library[*ia].perimeter;
            let nb = b.residual / self.library[*ib].perimeter;
            na.total_cmp(&nb).then(ia.cmp(ib))
        })?;
        let prep = &self.library[idx];
        let mut rotation = Pose::rot_z(fit.transform.theta).rotation;
        if fit.mirrored {
            rotation *= Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        }
        let world = Pose::new(rotation, Vector3::new(fit.transform.t.x, fit.transform.t.y, prep.thickness / 2.0));
        let pose = plane.compose(&world);
        let score = 1.0 / (1.0 + fit.residual);
        Some((
            Detection { category_id: prep.entry.mesh.category_id, score, bbox: comp.bbox(), pose: Some(pose) },
            fit.residual,
        ))
    }

    fn best_variant(&self, obs: &Observation, prep: &Prepared) -> Fit {
        prep.variants
            .iter()
            .map(|v| register(obs, v, &self.params))
            .reduce(|a, b| if b.residual < a.residual - 1e-9 { b } else { a })
            .expect("two variants")
    }
}

impl Estimator for ContourEstimator {
    fn name(&self) -> &'static str {
        "contour"
    }

    fn estimate(&self, input: &EstimatorInput) -> Result<EstimatorOutput, EstimatorError> {
        let start = Instant::now();
        let plane = input
            .plane
            .ok_or_else(|| EstimatorError::UnsupportedInput("the contour estimator needs a known ground plane".into()))?;
        let (w, h) = (input.cam.width, input.cam.height);
        let labels = input.labels();
        if labels.len() != w * h {
            return Err(EstimatorError::UnsupportedInput(format!(
                "image has {} pixels, camera expects {w}x{h}",
                labels.len()
            )));
        }
        let mut out = EstimatorOutput::default();
        let comps = connected_components(&labels, w, h);
        let (small, big): (Vec<_>, Vec<_>) =
            comps.into_iter().partition(|c| c.pixels.len() < self.params.min_component_px);
        for c in &small {
            out.diagnostics.push(format!("skipped component of {} px (label {})", c.pixels.len(), c.label));
        }
        let found: Vec<Option<(Detection, f64)>> =
            big.par_iter().map(|c| self.match_component(c, input, &plane)).collect();
        for (c, f) in big.iter().zip(found) {
            match f {
                Some((d, _)) => out.detections.push(d),
                None => out.diagnostics.push(format!("no library match for component with label {}", c.label)),
            }
        }
        out.sort_by_score();
        out.compute_time_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(out)
    }
}

/// Recovered in-plane yaw (radians) of a camera-frame pose relative to the plane.
pub fn plane_yaw(pose: &Pose, plane: &Pose) -> f64 {
    let world = plane.inverse().compose(pose);
    let x = world.rotation * Vector3::x();
    x.y.atan2(x.x)
}

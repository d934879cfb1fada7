//! Pinhole-camera software rasterizer producing depth maps and instance
//! masks.
//!
//! Conventions: camera frame with x right, y down, z forward; pixel (u, v)
//! has its center at (u + 0.5, v + 0.5); a pixel is covered when its center
//! is inside the projected triangle (top-left rule on shared edges). Depth
//! is the distance along the optical axis, interpolated perspective-correctly
//! as an affine function of 1/z in screen space.

mod image_io;

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::TriMesh;
use crate::pose::Pose;

pub use image_io::{
    read_depth_png, read_mask_png, write_depth_png, write_mask_png, DEPTH_SCALE_MM,
};

/// Triangles are clipped against this plane (mm).
pub const NEAR_PLANE_MM: f64 = 1.0;
/// Default visibility tolerance, mm.
pub const DEFAULT_VISIBILITY_DELTA: f64 = 15.0;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("image I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("PNG decode: {0}")]
    Png(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, RasterError> {
        let cam = Self { fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    /// 640×480 camera with a 600 px focal length.
    pub fn default_vga() -> Self {
        Self { fx: 600.0, fy: 600.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(RasterError::InvalidIntrinsics(format!("{self:?}")))
        }
    }

    /// Row-major 3×3 calibration matrix.
    pub fn k_matrix(&self) -> [f64; 9] {
        [self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0]
    }

    pub fn from_k_matrix(k: &[f64; 9], width: usize, height: usize) -> Self {
        Self { fx: k[0], fy: k[4], cx: k[2], cy: k[5], width, height }
    }

    /// Scale factor `r = width / 640` used for projection-distance thresholds.
    pub fn pixel_scale(&self) -> f64 {
        self.width as f64 / 640.0
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Projects a camera-frame point to pixel coordinates.
pub fn project(point: &Point3<f64>, cam: &CameraIntrinsics) -> Result<Point2<f64>, RasterError> {
    if !(point.z > 0.0) {
        return Err(RasterError::BehindCamera(point.z));
    }
    Ok(Point2::new(cam.fx * point.x / point.z + cam.cx, cam.fy * point.y / point.z + cam.cy))
}

/// Projects a batch of points; fails on the first point behind the camera.
pub fn project_all(points: &[Point3<f64>], cam: &CameraIntrinsics) -> Result<Vec<Point2<f64>>, RasterError> {
    points.iter().map(|p| project(p, cam)).collect()
}

/// Per-pixel optical-axis depth in mm; 0 means no surface.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn covered_count(&self) -> usize {
        self.values.iter().filter(|&&d| d > 0.0).count()
    }

    /// Rounds every value to the 16-bit PNG grid (0.1 mm per unit).
    pub fn quantized(&self) -> DepthMap {
        let values = self
            .values
            .iter()
            .map(|&d| image_io::depth_to_units(d) as f64 * DEPTH_SCALE_MM)
            .collect();
        DepthMap { width: self.width, height: self.height, values }
    }

    fn check_same_size(&self, other: &DepthMap) -> Result<(), RasterError> {
        if self.width != other.width || self.height != other.height {
            return Err(RasterError::DimensionMismatch(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }
}

/// Binary per-pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Tight bounding box `[x, y, w, h]` of set pixels, if any.
    pub fn bbox(&self) -> Option<[f64; 4]> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| [x0 as f64, y0 as f64, (x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64])
    }
}

/// Per-pixel winner index: 0 for background, `i + 1` for instance `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl InstanceMask {
    pub fn mask_of(&self, label: u32) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.labels.iter().map(|&l| l == label).collect(),
        }
    }
}

#[derive(Clone, Copy)]
struct ScreenVertex {
    x: f64,
    y: f64,
    inv_z: f64,
}

struct Target<'a> {
    cam: &'a CameraIntrinsics,
    depth: &'a mut [f64],
    labels: &'a mut [u32],
}

impl Target<'_> {
    fn clip_and_draw(&mut self, tri: [Point3<f64>; 3], label: u32) {
        let inside = tri.map(|p| p.z >= NEAR_PLANE_MM);
        if inside.iter().all(|&b| b) {
            self.draw(tri[0], tri[1], tri[2], label);
            return;
        }
        if inside.iter().all(|&b| !b) {
            return;
        }
        // Sutherland–Hodgman against z = near.
        let mut poly: Vec<Point3<f64>> = Vec::with_capacity(4);
        for i in 0..3 {
            let a = tri[i];
            let b = tri[(i + 1) % 3];
            let (ia, ib) = (inside[i], inside[(i + 1) % 3]);
            if ia {
                poly.push(a);
            }
            if ia != ib {
                let t = (NEAR_PLANE_MM - a.z) / (b.z - a.z);
                let mut p = a + (b - a) * t;
                p.z = NEAR_PLANE_MM;
                poly.push(p);
            }
        }
        for k in 1..poly.len() - 1 {
            self.draw(poly[0], poly[k], poly[k + 1], label);
        }
    }

    fn to_screen(&self, p: Point3<f64>) -> ScreenVertex {
        let inv_z = 1.0 / p.z;
        ScreenVertex {
            x: self.cam.fx * p.x * inv_z + self.cam.cx,
            y: self.cam.fy * p.y * inv_z + self.cam.cy,
            inv_z,
        }
    }

    fn draw(&mut self, a: Point3<f64>, b: Point3<f64>, c: Point3<f64>, label: u32) {
        let mut v0 = self.to_screen(a);
        let mut v1 = self.to_screen(b);
        let v2 = self.to_screen(c);
        let mut area = (v1.x - v0.x) * (v2.y - v0.y) - (v1.y - v0.y) * (v2.x - v0.x);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        if area < 0.0 {
            std::mem::swap(&mut v0, &mut v1);
            area = -area;
        }
        let w = self.cam.width;
        let h = self.cam.height;
        let min_x = v0.x.min(v1.x).min(v2.x);
        let max_x = v0.x.max(v1.x).max(v2.x);
        let min_y = v0.y.min(v1.y).min(v2.y);
        let max_y = v0.y.max(v1.y).max(v2.y);
        if max_x < 0.0 || max_y < 0.0 || min_x > w as f64 || min_y > h as f64 {
            return;
        }
        // Pixel centers inside the bounding box: u + 0.5 in [min, max].
        let x0 = ((min_x - 0.5).ceil().max(0.0)) as usize;
        let x1 = ((max_x - 0.5).floor().min(w as f64 - 1.0)) as i64;
        let y0 = ((min_y - 0.5).ceil().max(0.0)) as usize;
        let y1 = ((max_y - 0.5).floor().min(h as f64 - 1.0)) as i64;
        if x1 < x0 as i64 || y1 < y0 as i64 {
            return;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);

        // Edge functions E_i(p) for the edge opposite vertex i; positive
        // inside for the (now) positively oriented triangle.
        let edge = |p: &ScreenVertex, q: &ScreenVertex| {
            let a = p.y - q.y;
            let b = q.x - p.x;
            let c = p.x * q.y - p.y * q.x;
            // Top-left rule in y-down coordinates with positive orientation.
            let top_left = a > 0.0 || (a == 0.0 && b < 0.0);
            (a, b, c, top_left)
        };
        let e0 = edge(&v1, &v2);
        let e1 = edge(&v2, &v0);
        let e2 = edge(&v0, &v1);
        let inv_area = 1.0 / area;

        'rows: for py in y0..=y1 {
            let sy = py as f64 + 0.5;
            let row = py * w;
            // Conservative span of this row; the exact test below decides.
            let (mut lo, mut hi) = (x0 as f64, x1 as f64);
            for e in [&e0, &e1, &e2] {
                let rest = e.1 * sy + e.2;
                if e.0 > 0.0 {
                    lo = lo.max((-rest / e.0 - 0.5).floor() - 1.0);
                } else if e.0 < 0.0 {
                    hi = hi.min((-rest / e.0 - 0.5).ceil() + 1.0);
                } else if rest < 0.0 {
                    continue 'rows;
                }
            }
            if hi < lo {
                continue;
            }
            for px in lo as usize..=hi as usize {
                let sx = px as f64 + 0.5;
                let w0 = e0.0 * sx + e0.1 * sy + e0.2;
                let w1 = e1.0 * sx + e1.1 * sy + e1.2;
                let w2 = e2.0 * sx + e2.1 * sy + e2.2;
                let inside = (w0 > 0.0 || (w0 == 0.0 && e0.3))
                    && (w1 > 0.0 || (w1 == 0.0 && e1.3))
                    && (w2 > 0.0 || (w2 == 0.0 && e2.3));
                if !inside {
                    continue;
                }
                let inv_z = (w0 * v0.inv_z + w1 * v1.inv_z + w2 * v2.inv_z) * inv_area;
                let z = 1.0 / inv_z;
                let idx = row + px;
                let cur = self.depth[idx];
                if cur == 0.0 || z < cur {
                    self.depth[idx] = z;
                    self.labels[idx] = label;
                }
            }
        }
    }
}

/// Renders posed meshes into a z-buffered depth map and an instance mask
/// (label `i + 1` for the i-th input, 0 for background). Ties keep the
/// earlier instance.
pub fn render_depth(meshes_with_poses: &[(&TriMesh, Pose)], cam: &CameraIntrinsics) -> (DepthMap, InstanceMask) {
    let mut depth = DepthMap::new(cam.width, cam.height);
    let mut labels = vec![0u32; cam.width * cam.height];
    {
        let mut target = Target { cam, depth: &mut depth.values, labels: &mut labels };
        let mut transformed: Vec<Point3<f64>> = Vec::new();
        for (i, (mesh, pose)) in meshes_with_poses.iter().enumerate() {
            transformed.clear();
            transformed.extend(mesh.vertices.iter().map(|v| pose.apply(v)));
            let label = i as u32 + 1;
            for t in &mesh.triangles {
                let tri = [
                    transformed[t[0] as usize],
                    transformed[t[1] as usize],
                    transformed[t[2] as usize],
                ];
                target.clip_and_draw(tri, label);
            }
        }
    }
    (depth, InstanceMask { width: cam.width, height: cam.height, labels })
}

/// Renders a single posed mesh.
pub fn render_solo(mesh: &TriMesh, pose: &Pose, cam: &CameraIntrinsics) -> DepthMap {
    render_depth(&[(mesh, *pose)], cam).0
}

/// Pixels where the solo rendering exists and is not hidden behind the
/// scene surface by more than `delta` mm.
pub fn visibility_mask(solo_depth: &DepthMap, scene_depth: &DepthMap, delta: f64) -> Result<Mask, RasterError> {
    solo_depth.check_same_size(scene_depth)?;
    let data = solo_depth
        .values
        .iter()
        .zip(&scene_depth.values)
        .map(|(&s, &d)| s > 0.0 && s <= d + delta)
        .collect();
    Ok(Mask { width: solo_depth.width, height: solo_depth.height, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docparse::parse_svg_path;
    use crate::geometry::extrude;
    use nalgebra::Vector3;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }

    fn plate(w: f64, h: f64) -> TriMesh {
        extrude(&parse_svg_path(&format!("M 0 0 L {w} 0 L {w} {h} L 0 {h} Z"), 0.1).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn projection_examples() {
        let c = cam();
        assert_eq!(project(&Point3::new(0.0, 0.0, 1000.0), &c).unwrap(), Point2::new(320.0, 240.0));
        assert_eq!(project(&Point3::new(100.0, 0.0, 1000.0), &c).unwrap(), Point2::new(370.0, 240.0));
        assert!(matches!(project(&Point3::new(0.0, 0.0, 0.0), &c), Err(RasterError::BehindCamera(_))));
        assert!(project(&Point3::new(0.0, 0.0, -5.0), &c).is_err());
    }

    #[test]
    fn batch_projection_matches_loop() {
        let m = plate(40.0, 30.0);
        let pose = Pose::from_translation(Vector3::new(10.0, -5.0, 700.0));
        let pts: Vec<_> = m.vertices.iter().map(|v| pose.apply(v)).collect();
        let batch = project_all(&pts, &cam()).unwrap();
        for (p, q) in pts.iter().zip(&batch) {
            assert_eq!(project(p, &cam()).unwrap(), *q);
        }
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).is_ok());
        assert!(CameraIntrinsics::new(0.0, 500.0, 320.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 640.0, 240.0, 640, 480).is_err());
    }

    #[test]
    fn fronto_parallel_plate_depth() {
        let m = plate(100.0, 100.0);
        // Front face at z = 500.
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 500.5));
        let (depth, mask) = render_depth(&[(&m, pose)], &cam());
        let mut n = 0;
        for (d, l) in depth.values.iter().zip(&mask.labels) {
            if *l == 1 {
                assert!((d - 500.0).abs() <= 0.01, "{d}");
                n += 1;
            }
        }
        // 100 mm at 500 mm with f = 500 spans 100 px.
        assert_eq!(n, 100 * 100);
    }

    #[test]
    fn nearer_plate_wins() {
        let a = plate(100.0, 100.0);
        let b = plate(100.0, 100.0);
        let near = Pose::from_translation(Vector3::new(0.0, 0.0, 500.5));
        let far = Pose::from_translation(Vector3::new(30.0, 0.0, 600.5));
        for order in [[(&b, far), (&a, near)], [(&a, near), (&b, far)]] {
            let near_label = if order[0].1 == near { 1 } else { 2 };
            let (depth, mask) = render_depth(&order, &cam());
            let i = 240 * 640 + 330;
            assert_eq!(mask.labels[i], near_label);
            assert!((depth.values[i] - 500.0).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_scene_is_blank() {
        let (depth, mask) = render_depth(&[], &cam());
        assert!(depth.values.iter().all(|&d| d == 0.0));
        assert!(mask.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn near_plane_clipping() {
        // Plate spanning from behind the camera to in front of it.
        let m = plate(400.0, 400.0);
        let pose = Pose::from_axis_angle(Vector3::x(), 1.2).compose(&Pose::identity());
        let pose = Pose::new(pose.rotation, Vector3::new(0.0, 0.0, 50.0));
        let (depth, _) = render_depth(&[(&m, pose)], &cam());
        assert!(depth.values.iter().all(|&d| d == 0.0 || d >= NEAR_PLANE_MM - 1e-9));
        assert!(depth.covered_count() > 0);
    }

    #[test]
    fn visibility_examples() {
        let small = plate(50.0, 50.0);
        let big = plate(200.0, 200.0);
        let c = cam();
        let small_pose = Pose::from_translation(Vector3::new(0.0, 0.0, 700.0));
        let solo = render_solo(&small, &small_pose, &c);
        // Unoccluded.
        let v = visibility_mask(&solo, &solo, DEFAULT_VISIBILITY_DELTA).unwrap();
        assert_eq!(v.count(), solo.covered_count());
        // Fully hidden behind a larger plate 100 mm in front.
        let big_pose = Pose::from_translation(Vector3::new(0.0, 0.0, 600.0));
        let (scene, _) = render_depth(&[(&small, small_pose), (&big, big_pose)], &c);
        let v = visibility_mask(&solo, &scene, DEFAULT_VISIBILITY_DELTA).unwrap();
        assert_eq!(v.count(), 0);
        // Half covered: occluder edge at the small plate's center line.
        let half_pose = Pose::from_translation(Vector3::new(-100.0, 0.0, 600.0));
        let (scene, _) = render_depth(&[(&small, small_pose), (&big, half_pose)], &c);
        let v = visibility_mask(&solo, &scene, DEFAULT_VISIBILITY_DELTA).unwrap();
        let ratio = v.count() as f64 / solo.covered_count() as f64;
        assert!((ratio - 0.5).abs() <= 0.05 * 0.5, "ratio {ratio}");
        // Mismatched sizes.
        let other = DepthMap::new(10, 10);
        assert!(visibility_mask(&solo, &other, 15.0).is_err());
    }
}

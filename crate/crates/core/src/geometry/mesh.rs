use std::collections::HashMap;

use nalgebra::Point3;

use super::triangulate::triangulate;
use super::GeometryError;
use crate::docparse::Profile2D;

/// Default sheet thickness, mm.
pub const DEFAULT_THICKNESS: f64 = 1.0;

/// Closed triangle mesh in an object-centered frame (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    /// Maximum pairwise vertex distance.
    pub diameter: f64,
    pub category_id: u32,
}

/// Brute-force maximum pairwise distance.
pub fn max_pairwise_distance(points: &[Point3<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    best.sqrt()
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>, category_id: u32) -> Self {
        let diameter = max_pairwise_distance(&vertices);
        Self { vertices, triangles, diameter, category_id }
    }

    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    /// Enclosed volume by the divergence theorem (positive for outward
    /// winding).
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0] as usize].coords;
                let b = self.vertices[t[1] as usize].coords;
                let c = self.vertices[t[2] as usize].coords;
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    fn undirected_edges(&self) -> HashMap<(u32, u32), usize> {
        let mut edges = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Every undirected edge is used by exactly two triangles and every
    /// directed edge exactly once (consistent winding).
    pub fn is_watertight(&self) -> bool {
        let mut directed = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_insert(0usize) += 1;
            }
        }
        directed.iter().all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
            && self.undirected_edges().values().all(|&n| n == 2)
    }

    pub fn edge_count(&self) -> usize {
        self.undirected_edges().len()
    }

    /// V − E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.triangles.len() as i64
    }

    /// Axis-aligned bounds (min, max).
    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Extent along the extrusion (z) axis.
    pub fn thickness(&self) -> f64 {
        let (lo, hi) = self.bounds();
        hi.z - lo.z
    }
}

/// Sweeps a profile along +z into a closed solid of the given thickness.
///
/// The model origin sits at the center of the profile's bounding box with
/// the caps at z = ±thickness/2.
pub fn extrude(profile: &Profile2D, thickness: f64) -> Result<TriMesh, GeometryError> {
    if !(thickness > 0.0) {
        return Err(GeometryError::InvalidArgument(format!("thickness {thickness}")));
    }
    let centered = profile.centered();
    let tri = triangulate(&centered)?;
    let n = tri.vertices.len() as u32;
    let half = thickness / 2.0;

    let mut vertices = Vec::with_capacity(2 * n as usize);
    vertices.extend(tri.vertices.iter().map(|p| Point3::new(p.x, p.y, -half)));
    vertices.extend(tri.vertices.iter().map(|p| Point3::new(p.x, p.y, half)));

    let mut triangles = Vec::with_capacity(2 * tri.triangles.len() + 2 * n as usize);
    for t in &tri.triangles {
        let [a, b, c] = t.map(|i| i as u32);
        triangles.push([n + a, n + b, n + c]);
        triangles.push([a, c, b]);
    }
    // Outer loop is CCW and holes CW, so the region is always on the left
    // of each edge and the outward side on the right.
    let mut start = 0u32;
    for poly in centered.loops() {
        let len = poly.len() as u32;
        for k in 0..len {
            let i = start + k;
            let j = start + (k + 1) % len;
            triangles.push([i, j, n + j]);
            triangles.push([i, n + j, n + i]);
        }
        start += len;
    }
    Ok(TriMesh::new(vertices, triangles, profile.category_id))
}

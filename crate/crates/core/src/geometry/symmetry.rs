//! Discrete rotational symmetries of extruded parts.

use std::collections::HashMap;

use nalgebra::{Matrix2, Matrix3, Point3, Vector3};

use super::mesh::TriMesh;
use super::GeometryError;

pub const DEFAULT_ANGULAR_STEP_DEG: f64 = 1.0;
pub const DEFAULT_SYMMETRY_TOLERANCE: f64 = 0.05;

/// Rotations (about the model origin) mapping the mesh onto itself.
/// Element 0 is always the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrySet {
    pub transforms: Vec<Matrix3<f64>>,
}

impl Default for SymmetrySet {
    fn default() -> Self {
        Self::identity()
    }
}

impl SymmetrySet {
    pub fn identity() -> Self {
        Self { transforms: vec![Matrix3::identity()] }
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn contains(&self, m: &Matrix3<f64>, tol: f64) -> bool {
        self.transforms.iter().any(|t| (t - m).amax() <= tol)
    }

    /// Group closure: every product of two elements is again an element.
    pub fn is_closed(&self, tol: f64) -> bool {
        self.transforms
            .iter()
            .all(|a| self.transforms.iter().all(|b| self.contains(&(a * b), tol)))
    }

    /// Row-major 3×3 matrices.
    pub fn to_row_major(&self) -> Vec<[f64; 9]> {
        self.transforms
            .iter()
            .map(|m| {
                let mut out = [0.0; 9];
                for r in 0..3 {
                    for c in 0..3 {
                        out[r * 3 + c] = m[(r, c)];
                    }
                }
                out
            })
            .collect()
    }

    pub fn from_row_major(rows: &[[f64; 9]]) -> Self {
        let transforms: Vec<_> = rows.iter().map(|r| Matrix3::from_row_slice(r)).collect();
        if transforms.is_empty() {
            Self::identity()
        } else {
            Self { transforms }
        }
    }
}

/// Uniform hash grid answering "is any stored point within `radius`?".
struct PointGrid<'a> {
    points: &'a [Point3<f64>],
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> PointGrid<'a> {
    fn new(points: &'a [Point3<f64>], radius: f64) -> Self {
        let cell = radius.max(1e-9);
        let mut cells: HashMap<_, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { points, cell, cells }
    }

    fn key(p: &Point3<f64>, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    fn has_within(&self, q: &Point3<f64>, radius: f64) -> bool {
        let (kx, ky, kz) = Self::key(q, self.cell);
        let r2 = radius * radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        if ids.iter().any(|&i| (self.points[i] - q).norm_squared() <= r2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Symmetric Hausdorff test between the vertex set and its image under `r`.
fn maps_onto_itself(grid: &PointGrid, r: &Matrix3<f64>, tol: f64) -> bool {
    let rt = r.transpose();
    grid.points.iter().all(|p| grid.has_within(&Point3::from(r * p.coords), tol))
        && grid.points.iter().all(|p| grid.has_within(&Point3::from(rt * p.coords), tol))
}

fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Half-turn about the in-plane unit axis (ux, uy, 0).
fn flip_about(ux: f64, uy: f64) -> Matrix3<f64> {
    let u = Vector3::new(ux, uy, 0.0);
    2.0 * u * u.transpose() - Matrix3::identity()
}

/// Principal axes of the vertex xy distribution, major axis first.
fn principal_axes(points: &[Point3<f64>]) -> [(f64, f64); 2] {
    let mut cov = Matrix2::zeros();
    for p in points {
        cov[(0, 0)] += p.x * p.x;
        cov[(0, 1)] += p.x * p.y;
        cov[(1, 1)] += p.y * p.y;
    }
    cov[(1, 0)] = cov[(0, 1)];
    let eig = cov.symmetric_eigen();
    let (i_major, i_minor) =
        if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let a = eig.eigenvectors.column(i_major);
    let b = eig.eigenvectors.column(i_minor);
    [(a[0], a[1]), (b[0], b[1])]
}

/// Finds rotations about z at multiples of `angular_step_deg` and half-turns
/// about the in-plane principal axes that map the mesh vertices onto
/// themselves within `tolerance` (symmetric Hausdorff distance).
///
/// The z-rotations are reduced to the largest cyclic subgroup contained in
/// the accepted set, and flips are only added as a full coset, so the result
/// is closed under composition.
pub fn detect_symmetries(
    mesh: &TriMesh,
    angular_step_deg: f64,
    tolerance: f64,
) -> Result<SymmetrySet, GeometryError> {
    if !(tolerance > 0.0) || !(angular_step_deg > 0.0) {
        return Err(GeometryError::InvalidArgument(format!(
            "angular step {angular_step_deg}°, tolerance {tolerance}"
        )));
    }
    let steps_f = 360.0 / angular_step_deg;
    let steps = steps_f.round() as usize;
    if steps == 0 || (steps_f - steps as f64).abs() > 1e-9 {
        return Err(GeometryError::InvalidArgument(format!(
            "angular step {angular_step_deg}° does not divide 360°"
        )));
    }
    let grid = PointGrid::new(&mesh.vertices, tolerance);
    let angle = |k: usize| 2.0 * std::f64::consts::PI * (k as f64) / (steps as f64);

    let accepted: Vec<bool> =
        (0..steps).map(|k| k == 0 || maps_onto_itself(&grid, &rot_z(angle(k)), tolerance)).collect();
    let period = (1..=steps)
        .filter(|d| steps % d == 0)
        .find(|&d| (0..steps).step_by(d).all(|k| accepted[k]))
        .unwrap_or(steps);
    let rotations: Vec<Matrix3<f64>> = (0..steps)
        .step_by(period)
        .map(|k| if k == 0 { Matrix3::identity() } else { rot_z(angle(k)) })
        .collect();

    let mut transforms = rotations.clone();
    for (ux, uy) in principal_axes(&mesh.vertices) {
        let flip = flip_about(ux, uy);
        let coset: Vec<Matrix3<f64>> = rotations.iter().map(|r| flip * r).collect();
        if coset.iter().all(|m| maps_onto_itself(&grid, m, tolerance)) {
            transforms.extend(coset);
            break;
        }
    }
    Ok(SymmetrySet { transforms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docparse::parse_svg_path;
    use crate::geometry::extrude;

    fn mesh(path: &str) -> TriMesh {
        extrude(&parse_svg_path(path, 0.1).unwrap(), 1.0).unwrap()
    }

    /// Independent oracle: exhaustive nearest-vertex search.
    fn brute_force_symmetric(m: &TriMesh, r: &Matrix3<f64>, tol: f64) -> bool {
        let close = |q: Point3<f64>| m.vertices.iter().any(|v| (v - q).norm() <= tol);
        m.vertices.iter().all(|v| close(Point3::from(r * v.coords)))
            && m.vertices.iter().all(|v| close(Point3::from(r.transpose() * v.coords)))
    }

    #[test]
    fn rectangle_has_half_turn() {
        let m = mesh("M 0 0 L 80 0 L 80 30 L 0 30 Z");
        let s = detect_symmetries(&m, 1.0, 0.05).unwrap();
        assert_eq!(s.transforms[0], Matrix3::identity());
        // z-rotations: identity and the half turn.
        let z_rots: Vec<_> = s.transforms.iter().filter(|t| (t[(2, 2)] - 1.0).abs() < 1e-12).collect();
        assert_eq!(z_rots.len(), 2);
        assert!(s.contains(&rot_z(std::f64::consts::PI), 1e-9));
        // Plus the two half-turns about the in-plane axes.
        assert_eq!(s.len(), 4);
        assert!(s.is_closed(1e-9));
    }

    #[test]
    fn scalene_triangle_has_none() {
        let m = mesh("M 0 0 L 70 0 L 20 45 Z");
        let s = detect_symmetries(&m, 1.0, 0.05).unwrap();
        assert_eq!(s, SymmetrySet::identity());
    }

    #[test]
    fn regular_hexagon() {
        let r = 40.0;
        let mut d = String::new();
        for k in 0..6 {
            let a = std::f64::consts::PI / 3.0 * k as f64;
            d.push_str(&format!("{} {} {} ", if k == 0 { "M" } else { "L" }, r * a.cos(), r * a.sin()));
        }
        d.push('Z');
        let m = mesh(&d);
        let s = detect_symmetries(&m, 5.0, 0.1).unwrap();
        assert!(s.len() >= 6);
        assert!(s.is_closed(1e-9));
        for t in &s.transforms {
            assert!(brute_force_symmetric(&m, t, 0.1));
        }
        // Oracle count of z-rotations on the 5° grid.
        let oracle = (0..72)
            .filter(|&k| brute_force_symmetric(&m, &rot_z((k as f64 * 5.0).to_radians()), 0.1))
            .count();
        let found = s.transforms.iter().filter(|t| (t[(2, 2)] - 1.0).abs() < 1e-12).count();
        assert_eq!(found, oracle);
        assert_eq!(oracle, 6);
    }

    #[test]
    fn vertex_order_does_not_matter() {
        let m = mesh("M 0 0 L 80 0 L 80 30 L 0 30 Z M 10 10 L 20 10 L 20 20 L 10 20 Z M 60 10 L 70 10 L 70 20 L 60 20 Z");
        let mut shuffled = m.clone();
        shuffled.vertices.reverse();
        shuffled.vertices.rotate_left(5);
        let a = detect_symmetries(&m, 1.0, 0.05).unwrap();
        let b = detect_symmetries(&shuffled, 1.0, 0.05).unwrap();
        assert_eq!(a.len(), b.len());
        for t in &a.transforms {
            assert!(b.contains(t, 1e-9));
        }
    }

    #[test]
    fn step_must_divide_full_turn() {
        let m = mesh("M 0 0 L 80 0 L 80 30 L 0 30 Z");
        assert!(detect_symmetries(&m, 7.0, 0.05).is_err());
        assert!(detect_symmetries(&m, 1.0, 0.0).is_err());
    }

    #[test]
    fn row_major_round_trip() {
        let m = mesh("M 0 0 L 80 0 L 80 30 L 0 30 Z");
        let s = detect_symmetries(&m, 1.0, 0.05).unwrap();
        assert_eq!(SymmetrySet::from_row_major(&s.to_row_major()), s);
    }
}

use nalgebra::Point3;

use super::MetricsError;
use crate::geometry::{SymmetrySet, TriMesh};
use crate::pose::Pose;
use crate::raster::{project, render_solo, visibility_mask, CameraIntrinsics, DepthMap};

/// Maximum symmetry-aware surface distance (mm):
/// min over S of max over vertices x of ‖P̂x − P̄Sx‖.
pub fn e_mssd(estimate: &Pose, gt: &Pose, mesh: &TriMesh, symmetries: &SymmetrySet) -> f64 {
    let est: Vec<Point3<f64>> = mesh.vertices.iter().map(|v| estimate.apply(v)).collect();
    symmetries
        .transforms
        .iter()
        .map(|s| {
            let g = Pose::new(gt.rotation * s, gt.translation);
            mesh.vertices
                .iter()
                .zip(&est)
                .map(|(v, e)| (e - g.apply(v)).norm())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Maximum symmetry-aware projection distance (px).
pub fn e_mspd(
    estimate: &Pose,
    gt: &Pose,
    mesh: &TriMesh,
    symmetries: &SymmetrySet,
    cam: &CameraIntrinsics,
) -> Result<f64, MetricsError> {
    let est = mesh
        .vertices
        .iter()
        .map(|v| project(&estimate.apply(v), cam))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best = f64::INFINITY;
    for s in &symmetries.transforms {
        let g = Pose::new(gt.rotation * s, gt.translation);
        let mut worst = 0.0f64;
        for (v, e) in mesh.vertices.iter().zip(&est) {
            worst = worst.max((e - project(&g.apply(v), cam)?).norm());
        }
        best = best.min(worst);
    }
    Ok(best)
}

/// Visible surface discrepancy: over the union of the two visibility masks,
/// the fraction of pixels that are not visible under both poses or whose
/// rendered depths differ by more than `tau_mm`. An empty union scores 0.
pub fn e_vsd(
    estimate: &Pose,
    gt: &Pose,
    mesh: &TriMesh,
    scene_depth_gt: &DepthMap,
    cam: &CameraIntrinsics,
    tau_mm: f64,
    delta: f64,
) -> Result<f64, MetricsError> {
    let d_est = render_solo(mesh, estimate, cam);
    let d_gt = render_solo(mesh, gt, cam);
    let v_est = visibility_mask(&d_est, scene_depth_gt, delta)?;
    let v_gt = visibility_mask(&d_gt, scene_depth_gt, delta)?;
    let mut union = 0usize;
    let mut bad = 0usize;
    for i in 0..v_est.data.len() {
        let (a, b) = (v_est.data[i], v_gt.data[i]);
        if a || b {
            union += 1;
            if !(a && b) || (d_est.values[i] - d_gt.values[i]).abs() > tau_mm {
                bad += 1;
            }
        }
    }
    Ok(if union == 0 { 0.0 } else { bad as f64 / union as f64 })
}

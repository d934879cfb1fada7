use std::time::Instant;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EstimatorError, EstimatorOutput};
use crate::metrics::Detection;
use crate::pose::Pose;
use crate::scenegen::{scene_rng, SceneAnnotation};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleNoise {
    pub rot_sigma_deg: f64,
    pub trans_sigma_mm: f64,
    pub drop: f64,
}

impl OracleNoise {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(self.rot_sigma_deg >= 0.0) || !(self.trans_sigma_mm >= 0.0) || !(0.0..1.0).contains(&self.drop) {
            return Err(EstimatorError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let mut g = || -> f64 { StandardNormal.sample(rng) };
        let v = Vector3::new(g(), g(), g());
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Ground-truth poses perturbed by a random axis-angle rotation
/// (angle ~ |N(0, σ_rot)|) and isotropic Gaussian translation, each
/// instance dropped with probability `drop`. The stream is keyed by
/// `(seed, scene_id, image_id)`.
pub fn oracle_estimate(
    annotation: &SceneAnnotation,
    noise: &OracleNoise,
    seed: u64,
) -> Result<EstimatorOutput, EstimatorError> {
    noise.validate()?;
    let start = Instant::now();
    let stream = (u64::from(annotation.scene_id) << 32) | u64::from(annotation.image_id);
    let mut rng = scene_rng(seed, stream);
    let angle_dist = Normal::new(0.0, noise.rot_sigma_deg).expect("validated");
    let trans_dist = Normal::new(0.0, noise.trans_sigma_mm).expect("validated");
    let mut out = EstimatorOutput::default();
    for inst in &annotation.instances {
        let keep = rng.random::<f64>() >= noise.drop;
        let axis = random_unit(&mut rng);
        let angle = angle_dist.sample(&mut rng).abs().to_radians();
        let dt = Vector3::new(trans_dist.sample(&mut rng), trans_dist.sample(&mut rng), trans_dist.sample(&mut rng));
        if !keep {
            continue;
        }
        let mut pose = inst.pose;
        if angle != 0.0 {
            pose.rotation = Pose::from_axis_angle(axis, angle).rotation * pose.rotation;
        }
        if noise.trans_sigma_mm != 0.0 {
            pose.translation += dt;
        }
        let bbox = if inst.bbox_visib[2] > 0 { inst.bbox_visib.map(|v| v as f64) } else { [0.0, 0.0, 1.0, 1.0] };
        out.detections.push(Detection { category_id: inst.category_id, score: 1.0 - noise.drop, bbox, pose: Some(pose) });
    }
    out.sort_by_score();
    out.compute_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docparse::parse_svg_path;
    use crate::geometry::{extrude, SymmetrySet};
    use crate::metrics::e_mssd;
    use crate::raster::CameraIntrinsics;
    use crate::scenegen::InstanceAnnotation;

    fn annotation(n: usize) -> SceneAnnotation {
        let instances = (0..n)
            .map(|i| InstanceAnnotation {
                category_id: 1,
                pose: Pose::new(
                    Pose::from_axis_angle(Vector3::new(1.0, 2.0, 0.5), 0.1 * i as f64).rotation,
                    Vector3::new(i as f64, -3.0, 900.0),
                ),
                visible_fraction: 1.0,
                px_count_all: 100,
                px_count_visib: 100,
                bbox_visib: [1, 2, 3, 4],
            })
            .collect();
        SceneAnnotation {
            scene_id: 0,
            image_id: 0,
            cam: CameraIntrinsics::default_vga(),
            world_to_cam: Pose::identity(),
            instances,
        }
    }

    #[test]
    fn zero_noise_is_exact() {
        let a = annotation(5);
        let out = oracle_estimate(&a, &OracleNoise::default(), 9).unwrap();
        assert_eq!(out.detections.len(), 5);
        for (d, i) in out.detections.iter().zip(&a.instances) {
            assert_eq!(d.pose.unwrap(), i.pose);
            assert_eq!(d.score, 1.0);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = annotation(4);
        let n = OracleNoise { rot_sigma_deg: 3.0, trans_sigma_mm: 2.0, drop: 0.2 };
        assert_eq!(oracle_estimate(&a, &n, 1).unwrap().detections, oracle_estimate(&a, &n, 1).unwrap().detections);
        assert_ne!(oracle_estimate(&a, &n, 1).unwrap().detections, oracle_estimate(&a, &n, 2).unwrap().detections);
    }

    #[test]
    fn near_total_drop_empties_output() {
        let a = annotation(50);
        let n = OracleNoise { drop: 1.0 - 1e-9, ..OracleNoise::default() };
        assert!(oracle_estimate(&a, &n, 3).unwrap().detections.is_empty());
        assert!(oracle_estimate(&a, &OracleNoise { drop: 1.0, ..n }, 3).is_err());
        assert!(oracle_estimate(&a, &OracleNoise { rot_sigma_deg: -1.0, ..n }, 3).is_err());
    }

    #[test]
    fn translation_noise_matches_chi_mean() {
        // E‖N(0, σ²I₃)‖ = σ·2·sqrt(2/π).
        let sigma = 5.0;
        let expected = sigma * 2.0 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((expected - 7.98).abs() < 0.01);
        let m = extrude(&parse_svg_path("M 0 0 L 40 0 L 40 20 L 0 20 Z", 0.1).unwrap(), 1.0).unwrap();
        let noise = OracleNoise { rot_sigma_deg: 0.0, trans_sigma_mm: sigma, drop: 0.0 };
        let a = annotation(1000);
        let out = oracle_estimate(&a, &noise, 17).unwrap();
        let mean: f64 = out
            .detections
            .iter()
            .zip(&a.instances)
            .map(|(d, i)| e_mssd(&d.pose.unwrap(), &i.pose, &m, &SymmetrySet::identity()))
            .sum::<f64>()
            / 1000.0;
        assert!((mean - expected).abs() <= 0.05 * expected, "{mean}");
    }
}

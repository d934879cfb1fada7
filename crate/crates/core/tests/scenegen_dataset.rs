use flatpose_core::fixtures::profiles;
use flatpose_core::geometry::{extrude, TriMesh};
use flatpose_core::raster::{project, render_solo};
use flatpose_core::scenegen::{
    compose_scene, convex_polygons_overlap, footprint, generate_dataset, place_parts, read_bop_dataset,
    sample_resting_pose, write_bop_dataset, GenConfig, Scene,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn meshes() -> Vec<TriMesh> {
    profiles().iter().map(|p| extrude(p, 1.0).unwrap()).collect()
}

fn small_config(scenes: usize) -> GenConfig {
    GenConfig { scenes, images_per_scene: 2, parts_per_scene: 3, ..GenConfig::default() }
}

fn fully_in_frame(scene: &Scene, parts: &[TriMesh], image: usize, instance: usize) -> bool {
    let ann = &scene.images[image].annotation;
    let inst = &ann.instances[instance];
    let mesh = parts.iter().find(|m| m.category_id == inst.category_id).unwrap();
    mesh.vertices.iter().all(|v| match project(&inst.pose.apply(v), &ann.cam) {
        Ok(uv) => uv.x >= 0.0 && uv.y >= 0.0 && uv.x < ann.cam.width as f64 && uv.y < ann.cam.height as f64,
        Err(_) => false,
    })
}

#[test]
fn bop_round_trip_preserves_scenes() {
    let parts = meshes();
    let scenes = generate_dataset(&parts, &small_config(3), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bop_dataset(&scenes, dir.path()).unwrap();
    let back = read_bop_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), scenes.len());
    for (a, b) in scenes.iter().zip(&back) {
        assert_eq!(a.scene_id, b.scene_id);
        assert_eq!(a.images.len(), b.images.len());
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x.depth, y.depth);
            assert_eq!(x.visib_masks, y.visib_masks);
            assert_eq!(x.annotation.cam, y.annotation.cam);
            for (i, j) in x.annotation.instances.iter().zip(&y.annotation.instances) {
                assert_eq!(i.category_id, j.category_id);
                assert_eq!(i.px_count_all, j.px_count_all);
                assert_eq!(i.px_count_visib, j.px_count_visib);
                assert_eq!(i.bbox_visib, j.bbox_visib);
                assert!((i.visible_fraction - j.visible_fraction).abs() < 1e-9);
                assert!((i.pose.rotation - j.pose.rotation).abs().max() < 1e-12);
                assert!((i.pose.translation - j.pose.translation).abs().max() < 1e-9);
            }
        }
    }
    // Written twice, the files are identical.
    let dir2 = tempfile::tempdir().unwrap();
    write_bop_dataset(&back, dir2.path()).unwrap();
    let gt = |d: &std::path::Path| std::fs::read(d.join("test/000000/scene_gt.json")).unwrap();
    assert_eq!(gt(dir.path()), gt(dir2.path()));
}

#[test]
fn generation_is_independent_of_scheduling() {
    let parts = meshes();
    let config = small_config(4);
    let par = generate_dataset(&parts, &config, 5).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let seq = pool.install(|| generate_dataset(&parts, &config, 5).unwrap());
    assert_eq!(par, seq);
}

#[test]
fn stored_poses_reproduce_solo_pixel_counts() {
    let parts = meshes();
    let scenes = generate_dataset(&parts, &small_config(4), 3).unwrap();
    for s in &scenes {
        for img in &s.images {
            for inst in &img.annotation.instances {
                let mesh = parts.iter().find(|m| m.category_id == inst.category_id).unwrap();
                let solo = render_solo(mesh, &inst.pose, &img.annotation.cam);
                assert_eq!(solo.covered_count(), inst.px_count_all);
                assert!(inst.px_count_visib <= inst.px_count_all);
            }
        }
    }
}

#[test]
fn disjoint_footprints_are_not_occluded() {
    let parts = meshes();
    let scenes = generate_dataset(&parts, &small_config(10), 21).unwrap();
    let mut checked = 0;
    for s in &scenes {
        for (i, img) in s.images.iter().enumerate() {
            for (k, inst) in img.annotation.instances.iter().enumerate() {
                if fully_in_frame(s, &parts, i, k) {
                    checked += 1;
                    assert_eq!(inst.visible_fraction, 1.0, "scene {} image {i} instance {k}", s.scene_id);
                }
            }
        }
    }
    assert!(checked > 20, "{checked}");
}

#[test]
fn single_part_scenes_are_fully_visible() {
    let parts = meshes();
    let config = GenConfig::default();
    for (k, m) in parts.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let s = compose_scene(std::slice::from_ref(m), 1, 1, &config, k as u32, &mut rng).unwrap();
        let inst = &s.images[0].annotation.instances[0];
        assert!(inst.px_count_all > 0);
        if fully_in_frame(&s, std::slice::from_ref(m), 0, 0) {
            assert_eq!(inst.visible_fraction, 1.0);
        }
    }
}

#[test]
fn placements_have_pairwise_disjoint_footprints() {
    let parts = meshes();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..30 {
        let placed = place_parts(&parts, 5, 800.0, &mut rng).unwrap();
        let fps: Vec<_> = placed.iter().map(|(i, p)| footprint(&parts[*i], p)).collect();
        for a in 0..fps.len() {
            for b in a + 1..fps.len() {
                assert!(!convex_polygons_overlap(&fps[a], &fps[b]));
            }
        }
        let mut ids: Vec<_> = placed.iter().map(|(i, _)| *i).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 5);
    }
}

#[test]
fn resting_yaw_is_uniform() {
    // Chi-square over 12 bins; 0.999 quantile of chi2(11) is 31.26.
    let mesh = extrude(&profiles()[0], 1.0).unwrap();
    let n = 6000;
    let bins = 12;
    let mut counts = vec![0usize; bins];
    for seed in 0..n {
        let p = sample_resting_pose(&mesh, 800.0, seed);
        // Image of the x axis projected onto the plane.
        let x = p.rotation.column(0);
        let yaw = x[1].atan2(x[0]).rem_euclid(std::f64::consts::TAU);
        counts[((yaw / std::f64::consts::TAU) * bins as f64) as usize % bins] += 1;
        assert!((p.translation.z - 0.5).abs() < 1e-12);
        assert!(p.translation.x.abs() <= 400.0 && p.translation.y.abs() <= 400.0);
    }
    let expected = n as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 31.26, "chi2 {chi2}");
}

#[test]
fn face_down_rate_is_half() {
    let mesh = extrude(&profiles()[0], 1.0).unwrap();
    let n = 4000;
    let down = (0..n).filter(|&s| sample_resting_pose(&mesh, 800.0, s).rotation[(2, 2)] < 0.0).count();
    // 4 standard deviations of a fair binomial.
    assert!((down as f64 - n as f64 / 2.0).abs() < 4.0 * (n as f64 / 4.0).sqrt(), "{down}");
}

//! Dataset-level evaluation of pose estimates against BOP-style ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detection::{map_at_iou, Detection, GtBox, MapReport};
use super::pose_errors::{e_mspd, e_mssd, e_vsd};
use super::{bop19_average_recall, recall_curve, AverageRecall, ErrorEntry, EvalConfig, MetricKind, MetricsError, RecallPartials};
use crate::pose::Pose;
use crate::scenegen::{LoadedModels, Scene, SceneImage};

/// One line of an estimates file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    #[serde(default)]
    pub scene_id: u32,
    pub image_id: u32,
    pub category_id: u32,
    pub score: f64,
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    #[serde(rename = "t")]
    pub translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

impl EstimateRecord {
    pub fn pose(&self) -> Pose {
        Pose::from_row_major(&self.rotation, &self.translation)
    }
}

/// Reads JSON-lines estimates; blank lines are ignored.
pub fn read_estimates<R: BufRead>(r: R) -> Result<Vec<EstimateRecord>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EstimateRecord = serde_json::from_str(&line)
            .map_err(|e| MetricsError::Estimates { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_estimates<W: Write>(mut w: W, records: &[EstimateRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r).expect("plain data"))?;
    }
    w.flush()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecallTable {
    pub vsd: Vec<f64>,
    pub mssd: Vec<f64>,
    pub mspd: Vec<f64>,
}

impl RecallTable {
    pub fn get(&self, kind: MetricKind) -> &[f64] {
        match kind {
            MetricKind::Vsd => &self.vsd,
            MetricKind::Mssd => &self.mssd,
            MetricKind::Mspd => &self.mspd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecall {
    pub targets: usize,
    pub recall: RecallTable,
    pub average_recall: AverageRecall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Row labels: the shared fraction grid (MSPD rows are that many
    /// hundredths of r pixels).
    pub thresholds: Vec<f64>,
    pub config: EvalConfig,
    pub recall: RecallTable,
    pub ar_vsd: f64,
    pub ar_mssd: f64,
    pub ar_mspd: f64,
    pub ar_bop: f64,
    pub per_object: BTreeMap<u32, ObjectRecall>,
    pub target_count: usize,
    pub matched_count: usize,
    pub estimate_count: usize,
    pub detection: Option<MapReport>,
}

impl EvalReport {
    /// Text table with rows THR=50 … THR=05 and a closing AR block.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>8} {:>8} {:>8}", "THRESHOLD", "MSSD", "MSPD", "VSD");
        for k in (0..self.thresholds.len()).rev() {
            let label = format!("THR={:02}", (self.thresholds[k] * 100.0).round() as i64);
            let cell = |v: &[f64]| v.get(k).map_or("-".to_string(), |x| format!("{x:.4}"));
            let _ = writeln!(
                s,
                "{:<10} {:>8} {:>8} {:>8}",
                label,
                cell(&self.recall.mssd),
                cell(&self.recall.mspd),
                cell(&self.recall.vsd)
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "BOP19 AVG RECALL        {:.4}", self.ar_bop);
        let _ = writeln!(s, "BOP19 AVG RECALL (VSD)  {:.4}", self.ar_vsd);
        let _ = writeln!(s, "BOP19 AVG RECALL (MSPD) {:.4}", self.ar_mspd);
        let _ = writeln!(s, "BOP19 AVG RECALL (MSSD) {:.4}", self.ar_mssd);
        let _ = writeln!(s, "targets {}  matched {}  estimates {}", self.target_count, self.matched_count, self.estimate_count);
        if let Some(d) = &self.detection {
            let _ = writeln!(s, "mAP@{:.2} {:.4}", d.iou_threshold, d.map);
        }
        s
    }
}

struct TargetResult {
    category_id: u32,
    diameter: f64,
    width: usize,
    matched: bool,
    vsd: f64,
    mssd: f64,
    mspd: f64,
}

fn evaluate_image(
    image: &SceneImage,
    estimates: &[&EstimateRecord],
    models: &LoadedModels,
    config: &EvalConfig,
) -> Result<Vec<TargetResult>, MetricsError> {
    let a = &image.annotation;
    let targets: Vec<usize> = (0..a.instances.len())
        .filter(|&i| a.instances[i].visible_fraction >= config.min_visible_fraction)
        .collect();
    let mut results: Vec<TargetResult> = Vec::with_capacity(targets.len());
    let mut target_slot: BTreeMap<usize, usize> = BTreeMap::new();
    for &t in &targets {
        let inst = &a.instances[t];
        let mesh = models.meshes.get(&inst.category_id).ok_or(MetricsError::UnknownModel(inst.category_id))?;
        target_slot.insert(t, results.len());
        results.push(TargetResult {
            category_id: inst.category_id,
            diameter: mesh.diameter,
            width: a.cam.width,
            matched: false,
            vsd: f64::INFINITY,
            mssd: f64::INFINITY,
            mspd: f64::INFINITY,
        });
    }

    let mut order: Vec<&EstimateRecord> = estimates.to_vec();
    order.sort_by(|x, y| y.score.total_cmp(&x.score));
    for est in order {
        let Some(mesh) = models.meshes.get(&est.category_id) else { continue };
        let sym = models.symmetries(est.category_id);
        let pose = est.pose();
        let mut best: Option<(usize, f64)> = None;
        for &t in &targets {
            let inst = &a.instances[t];
            if inst.category_id != est.category_id || results[target_slot[&t]].matched {
                continue;
            }
            if let Ok(err) = e_mspd(&pose, &inst.pose, mesh, &sym, &a.cam) {
                if best.is_none_or(|(_, b)| err < b) {
                    best = Some((t, err));
                }
            }
        }
        let Some((t, mspd)) = best else { continue };
        let inst = &a.instances[t];
        let r = &mut results[target_slot[&t]];
        r.matched = true;
        r.mspd = mspd;
        r.mssd = e_mssd(&pose, &inst.pose, mesh, &sym);
        r.vsd = e_vsd(
            &pose,
            &inst.pose,
            mesh,
            &image.depth,
            &a.cam,
            config.vsd_tau_mm(mesh.diameter),
            config.visibility_delta,
        )?;
    }
    Ok(results)
}

fn recall_table(results: &[&TargetResult], config: &EvalConfig) -> Result<(RecallTable, AverageRecall), MetricsError> {
    let entries = |f: fn(&TargetResult) -> f64| -> Vec<ErrorEntry> {
        results.iter().map(|r| ErrorEntry { error: f(r), diameter: r.diameter, image_width: r.width }).collect()
    };
    let table = RecallTable {
        vsd: recall_curve(&entries(|r| r.vsd), MetricKind::Vsd, config)?,
        mssd: recall_curve(&entries(|r| r.mssd), MetricKind::Mssd, config)?,
        mspd: recall_curve(&entries(|r| r.mspd), MetricKind::Mspd, config)?,
    };
    let ar = bop19_average_recall(&RecallPartials {
        vsd: Some(table.vsd.clone()),
        mssd: Some(table.mssd.clone()),
        mspd: Some(table.mspd.clone()),
    })?;
    Ok((table, ar))
}

/// Scores `estimates` against every image of `scenes`.
///
/// Per image and class, estimates in descending score order each take the
/// unmatched target with the smallest MSPD; targets left unmatched count as
/// misses at every threshold.
pub fn evaluate(
    scenes: &[Scene],
    models: &LoadedModels,
    estimates: &[EstimateRecord],
    config: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    config.validate()?;
    let mut by_image: BTreeMap<(u32, u32), Vec<&EstimateRecord>> = BTreeMap::new();
    for e in estimates {
        by_image.entry((e.scene_id, e.image_id)).or_default().push(e);
    }
    let images: Vec<&SceneImage> = scenes.iter().flat_map(|s| s.images.iter()).collect();
    let per_image: Vec<Vec<TargetResult>> = images
        .par_iter()
        .map(|img| {
            let key = (img.annotation.scene_id, img.annotation.image_id);
            let ests = by_image.get(&key).map(Vec::as_slice).unwrap_or(&[]);
            evaluate_image(img, ests, models, config)
        })
        .collect::<Result<_, _>>()?;
    let all: Vec<&TargetResult> = per_image.iter().flatten().collect();
    let (recall, ar) = recall_table(&all, config)?;

    let mut per_object = BTreeMap::new();
    let mut classes: Vec<u32> = all.iter().map(|r| r.category_id).collect();
    classes.sort_unstable();
    classes.dedup();
    for c in classes {
        let subset: Vec<&TargetResult> = all.iter().copied().filter(|r| r.category_id == c).collect();
        let (table, avg) = recall_table(&subset, config)?;
        per_object.insert(c, ObjectRecall { targets: subset.len(), recall: table, average_recall: avg });
    }

    let detection = if estimates.iter().any(|e| e.bbox.is_some()) {
        let mut dets = Vec::with_capacity(images.len());
        let mut gts = Vec::with_capacity(images.len());
        for img in &images {
            let a = &img.annotation;
            let key = (a.scene_id, a.image_id);
            dets.push(
                by_image
                    .get(&key)
                    .map(|v| {
                        v.iter()
                            .filter_map(|e| {
                                e.bbox.map(|bbox| Detection {
                                    category_id: e.category_id,
                                    score: e.score,
                                    bbox,
                                    pose: Some(e.pose()),
                                })
                            })
                            .collect()
                    })
                    .unwrap_or_default(),
            );
            gts.push(
                a.instances
                    .iter()
                    .filter(|i| i.visible_fraction >= config.min_visible_fraction && i.bbox_visib[2] > 0)
                    .map(|i| GtBox { category_id: i.category_id, bbox: i.bbox_visib.map(|v| v as f64) })
                    .collect(),
            );
        }
        Some(map_at_iou(&dets, &gts, config.map_iou))
    } else {
        None
    };

    Ok(EvalReport {
        thresholds: config.mssd_thresholds.clone(),
        config: config.clone(),
        recall,
        ar_vsd: ar.vsd,
        ar_mssd: ar.mssd,
        ar_mspd: ar.mspd,
        ar_bop: ar.bop,
        per_object,
        target_count: all.len(),
        matched_count: all.iter().filter(|r| r.matched).count(),
        estimate_count: estimates.len(),
        detection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimates_round_trip_and_default_scene() {
        let text = r#"{"image_id":3,"category_id":2,"score":0.5,"R":[1,0,0,0,1,0,0,0,1],"t":[1,2,3]}

{"scene_id":4,"image_id":0,"category_id":1,"score":1.0,"R":[1,0,0,0,1,0,0,0,1],"t":[0,0,500],"bbox":[1,2,3,4]}
"#;
        let recs = read_estimates(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].scene_id, 0);
        assert_eq!(recs[1].bbox, Some([1.0, 2.0, 3.0, 4.0]));
        let mut buf = Vec::new();
        write_estimates(&mut buf, &recs).unwrap();
        assert_eq!(read_estimates(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = read_estimates("{\"image_id\":1}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, MetricsError::Estimates { line: 1, .. }));
    }
}

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::pose::Pose;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub category_id: u32,
    pub score: f64,
    /// `[x, y, w, h]` in pixels.
    pub bbox: [f64; 4],
    pub pose: Option<Pose>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub category_id: u32,
    pub bbox: [f64; 4],
}

pub fn iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let x0 = a[0].max(b[0]);
    let y0 = a[1].max(b[1]);
    let x1 = (a[0] + a[2]).min(b[0] + b[2]);
    let y1 = (a[1] + a[3]).min(b[1] + b[3]);
    let inter = (x1 - x0).max(0.0) * (y1 - y0).max(0.0);
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Ground-truth class vs the class of the best-scoring detection overlapping
/// it at the IoU threshold (0 = nothing detected).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionEntry {
    pub gt_class: u32,
    pub predicted_class: u32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub iou_threshold: f64,
    /// AP per class with at least one ground-truth box.
    pub per_class_ap: BTreeMap<u32, f64>,
    /// Classes that only appear among detections; excluded from the mean.
    pub classes_without_gt: Vec<u32>,
    pub map: f64,
    pub confusion: Vec<ConfusionEntry>,
}

/// Area under the all-point interpolated precision–recall curve for hits
/// listed in descending score order.
pub(crate) fn average_precision(hits: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(hits.len());
    for (k, &hit) in hits.iter().enumerate() {
        if hit {
            tp += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // Precision envelope from the right.
    for k in (0..points.len().saturating_sub(1)).rev() {
        points[k].1 = points[k].1.max(points[k + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in points {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    ap
}

/// Greedy per-image matching: detections in descending score order each
/// take the highest-IoU unmatched ground truth of their class with IoU at
/// least `iou_threshold`. Returns one hit flag per detection.
pub(crate) fn match_image(dets: &[Detection], gts: &[GtBox], iou_threshold: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut used = vec![false; gts.len()];
    let mut hits = vec![false; dets.len()];
    for &d in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] || gt.category_id != dets[d].category_id {
                continue;
            }
            let v = iou(&dets[d].bbox, &gt.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
            hits[d] = true;
        }
    }
    hits
}

/// Per-class AP and class-mean mAP over a set of images.
pub fn map_at_iou(detections: &[Vec<Detection>], gts: &[Vec<GtBox>], iou_threshold: f64) -> MapReport {
    let mut per_class: BTreeMap<u32, Vec<(f64, bool)>> = BTreeMap::new();
    let mut n_gt: BTreeMap<u32, usize> = BTreeMap::new();
    let mut confusion: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (img, dets) in detections.iter().enumerate() {
        let empty = Vec::new();
        let g = gts.get(img).unwrap_or(&empty);
        for gt in g {
            *n_gt.entry(gt.category_id).or_default() += 1;
            let predicted = dets
                .iter()
                .filter(|d| iou(&d.bbox, &gt.bbox) >= iou_threshold)
                .max_by(|a, b| a.score.total_cmp(&b.score))
                .map_or(0, |d| d.category_id);
            *confusion.entry((gt.category_id, predicted)).or_default() += 1;
        }
        let hits = match_image(dets, g, iou_threshold);
        for (d, hit) in dets.iter().zip(hits) {
            per_class.entry(d.category_id).or_default().push((d.score, hit));
        }
    }
    for g in gts.iter().skip(detections.len()) {
        for gt in g {
            *n_gt.entry(gt.category_id).or_default() += 1;
            *confusion.entry((gt.category_id, 0)).or_default() += 1;
        }
    }
    let mut per_class_ap = BTreeMap::new();
    for (&class, &n) in &n_gt {
        let mut list = per_class.get(&class).cloned().unwrap_or_default();
        // Stable: equal scores keep image order.
        list.sort_by(|a, b| b.0.total_cmp(&a.0));
        let hits: Vec<bool> = list.iter().map(|x| x.1).collect();
        per_class_ap.insert(class, average_precision(&hits, n));
    }
    let gt_classes: BTreeSet<u32> = n_gt.keys().copied().collect();
    let classes_without_gt = per_class.keys().filter(|c| !gt_classes.contains(c)).copied().collect();
    let map = if per_class_ap.is_empty() {
        0.0
    } else {
        per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64
    };
    MapReport {
        iou_threshold,
        per_class_ap,
        classes_without_gt,
        map,
        confusion: confusion
            .into_iter()
            .map(|((gt_class, predicted_class), count)| ConfusionEntry { gt_class, predicted_class, count })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(c: u32, s: f64, b: [f64; 4]) -> Detection {
        Detection { category_id: c, score: s, bbox: b, pose: None }
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&[0.0, 0.0, 10.0, 10.0], &[0.0, 0.0, 10.0, 10.0]), 1.0);
        assert_eq!(iou(&[0.0, 0.0, 10.0, 10.0], &[20.0, 0.0, 10.0, 10.0]), 0.0);
        assert!((iou(&[0.0, 0.0, 10.0, 10.0], &[5.0, 0.0, 10.0, 10.0]) - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_detections() {
        let gts = vec![
            vec![GtBox { category_id: 1, bbox: [0.0, 0.0, 10.0, 10.0] }, GtBox { category_id: 2, bbox: [50.0, 50.0, 5.0, 5.0] }],
            vec![GtBox { category_id: 1, bbox: [3.0, 3.0, 10.0, 10.0] }],
        ];
        let dets: Vec<Vec<Detection>> =
            gts.iter().map(|g| g.iter().map(|b| det(b.category_id, 0.9, b.bbox)).collect()).collect();
        let r = map_at_iou(&dets, &gts, 0.5);
        assert_eq!(r.map, 1.0);
        assert!(r.classes_without_gt.is_empty());
    }

    #[test]
    fn false_positive_below_true_positive_keeps_ap_one() {
        let gts = vec![vec![GtBox { category_id: 1, bbox: [0.0, 0.0, 10.0, 10.0] }]];
        let dets = vec![vec![det(1, 0.9, [0.0, 0.0, 10.0, 10.0]), det(1, 0.8, [40.0, 40.0, 10.0, 10.0])]];
        assert_eq!(map_at_iou(&dets, &gts, 0.5).per_class_ap[&1], 1.0);
        // Reversed scores: recall 1 reached at precision 1/2.
        let dets = vec![vec![det(1, 0.8, [0.0, 0.0, 10.0, 10.0]), det(1, 0.9, [40.0, 40.0, 10.0, 10.0])]];
        assert_eq!(map_at_iou(&dets, &gts, 0.5).per_class_ap[&1], 0.5);
    }

    #[test]
    fn hand_computed_curve() {
        // Hits in score order: T F T F, 3 gts.
        // PR points: (1/3, 1), (1/3, 1/2), (2/3, 2/3), (2/3, 1/2).
        // AP = 1/3·1 + 1/3·2/3.
        let ap = average_precision(&[true, false, true, false], 3);
        assert!((ap - (1.0 / 3.0 + 2.0 / 9.0)).abs() < 1e-12);
    }

    #[test]
    fn detection_only_classes_are_flagged() {
        let gts = vec![vec![GtBox { category_id: 1, bbox: [0.0, 0.0, 10.0, 10.0] }]];
        let dets = vec![vec![det(1, 0.9, [0.0, 0.0, 10.0, 10.0]), det(7, 0.5, [0.0, 0.0, 10.0, 10.0])]];
        let r = map_at_iou(&dets, &gts, 0.5);
        assert_eq!(r.classes_without_gt, vec![7]);
        assert_eq!(r.map, 1.0);
        assert_eq!(r.confusion, vec![ConfusionEntry { gt_class: 1, predicted_class: 1, count: 1 }]);
    }
}

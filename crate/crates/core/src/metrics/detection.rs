//! COCO-convention detection AP: greedy confidence-ordered matching and
//! 101-point interpolated precision.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::boxes::box_iou;
use crate::bbox::BBox;

pub const AP_RECALL_POINTS: usize = 101;
/// Operating point for the single precision/recall pair.
pub const DETECTION_CONF_CUTOFF: f64 = 0.25;

/// 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Marks each prediction as TP/FP within one frame. `order` lists indices
/// into `preds` by descending confidence.
fn match_frame(preds: &[BBox], gts: &[BBox], order: &[usize], thr: f64) -> Vec<bool> {
    let mut taken = vec![false; gts.len()];
    let mut is_tp = vec![false; preds.len()];
    for &pi in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let iou = box_iou(&preds[pi], g);
            if iou >= thr && best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
            is_tp[pi] = true;
        }
    }
    is_tp
}

fn confidence_order(preds: &[BBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    // stable: ties keep insertion order
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    order
}

/// AP pooled over frames, each item being one frame's (predictions,
/// ground truths) for a single class. `None` when there is neither ground
/// truth nor prediction; 0 when there are predictions but no ground truth.
pub fn average_precision_pooled(frames: &[(&[BBox], &[BBox])], iou_threshold: f64) -> Option<f64> {
    let n_gt: usize = frames.iter().map(|(_, g)| g.len()).sum();
    let n_pred: usize = frames.iter().map(|(p, _)| p.len()).sum();
    if n_gt == 0 {
        return (n_pred > 0).then_some(0.0);
    }
    // (confidence, frame index, index within frame, tp)
    let mut scored: Vec<(f64, usize, usize, bool)> = Vec::with_capacity(n_pred);
    for (fi, (preds, gts)) in frames.iter().enumerate() {
        let order = confidence_order(preds);
        let tp = match_frame(preds, gts, &order, iou_threshold);
        scored.extend(
            preds
                .iter()
                .enumerate()
                .map(|(i, p)| (p.confidence, fi, i, tp[i])),
        );
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut recall = Vec::with_capacity(scored.len());
    let mut precision = Vec::with_capacity(scored.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for s in &scored {
        if s.3 {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let sum: f64 = (0..AP_RECALL_POINTS)
        .map(|k| {
            let r = k as f64 / (AP_RECALL_POINTS - 1) as f64;
            let idx = recall.partition_point(|&rc| rc < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    Some(sum / AP_RECALL_POINTS as f64)
}

/// Single-frame, single-class AP.
pub fn average_precision(preds: &[BBox], gts: &[BBox], iou_threshold: f64) -> Option<f64> {
    average_precision_pooled(&[(preds, gts)], iou_threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub name: String,
    pub present_in_gt: bool,
    /// AP at each of the ten IoU thresholds.
    pub ap: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEval {
    pub per_class: BTreeMap<u32, ClassAp>,
    /// At IoU 0.5 over predictions with confidence ≥ the cutoff.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Mean over thresholds, then over classes present in ground truth.
    pub map50_95: Option<f64>,
}

fn split_by_class(boxes: &[BBox], class: u32) -> Vec<BBox> {
    boxes
        .iter()
        .filter(|b| b.class_id == class)
        .copied()
        .collect()
}

/// `preds[i]` and `gts[i]` belong to the same frame.
pub fn map50_95(preds: &[Vec<BBox>], gts: &[Vec<BBox>], class_names: &[String]) -> DetectionEval {
    assert_eq!(
        preds.len(),
        gts.len(),
        "one prediction list per ground-truth frame"
    );
    let gt_classes: BTreeSet<u32> = gts.iter().flatten().map(|b| b.class_id).collect();
    let all_classes: BTreeSet<u32> = gt_classes
        .iter()
        .copied()
        .chain(preds.iter().flatten().map(|b| b.class_id))
        .collect();

    let mut per_class = BTreeMap::new();
    let mut class_means = Vec::new();
    for &cls in &all_classes {
        let p: Vec<Vec<BBox>> = preds.iter().map(|f| split_by_class(f, cls)).collect();
        let g: Vec<Vec<BBox>> = gts.iter().map(|f| split_by_class(f, cls)).collect();
        let frames: Vec<(&[BBox], &[BBox])> = p
            .iter()
            .zip(&g)
            .map(|(a, b)| (a.as_slice(), b.as_slice()))
            .collect();
        let ap: Vec<Option<f64>> = iou_thresholds()
            .iter()
            .map(|&t| average_precision_pooled(&frames, t))
            .collect();
        let present = gt_classes.contains(&cls);
        if present {
            let vals: Vec<f64> = ap.iter().flatten().copied().collect();
            class_means.push(vals.iter().sum::<f64>() / vals.len() as f64);
        }
        let name = class_names
            .get(cls as usize)
            .cloned()
            .unwrap_or_else(|| format!("class_{cls}"));
        per_class.insert(
            cls,
            ClassAp {
                name,
                present_in_gt: present,
                ap,
            },
        );
    }

    // operating point
    let (mut tp, mut n_pred, mut n_gt) = (0usize, 0usize, 0usize);
    for (fp, fg) in preds.iter().zip(gts) {
        for &cls in &all_classes {
            let p: Vec<BBox> = fp
                .iter()
                .filter(|b| b.class_id == cls && b.confidence >= DETECTION_CONF_CUTOFF)
                .copied()
                .collect();
            let g = split_by_class(fg, cls);
            let hits = match_frame(&p, &g, &confidence_order(&p), 0.5);
            tp += hits.iter().filter(|&&h| h).count();
            n_pred += p.len();
            n_gt += g.len();
        }
    }

    DetectionEval {
        per_class,
        precision: (n_pred > 0).then(|| tp as f64 / n_pred as f64),
        recall: (n_gt > 0).then(|| tp as f64 / n_gt as f64),
        map50_95: (!class_means.is_empty())
            .then(|| class_means.iter().sum::<f64>() / class_means.len() as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::default_class_names;

    fn b(x0: u32, y0: u32, x1: u32, y1: u32, conf: f64) -> BBox {
        BBox::new(x0, y0, x1, y1, 0, conf).unwrap()
    }

    #[test]
    fn exact_prediction_scores_one() {
        let g = [b(10, 10, 40, 40, 1.0)];
        for t in iou_thresholds() {
            assert_eq!(average_precision(&g, &g, t), Some(1.0));
        }
    }

    #[test]
    fn false_positive_ranked_first_halves_ap() {
        let g = [b(10, 10, 40, 40, 1.0)];
        let p = [b(60, 60, 90, 90, 0.95), b(10, 10, 40, 40, 0.90)];
        assert_eq!(average_precision(&p, &g, 0.5), Some(0.5));
    }

    #[test]
    fn degenerate_inputs() {
        let g = [b(10, 10, 40, 40, 1.0)];
        assert_eq!(average_precision(&[], &g, 0.5), Some(0.0));
        assert_eq!(average_precision(&[], &[], 0.5), None);
        assert_eq!(average_precision(&g, &[], 0.5), Some(0.0));
    }

    #[test]
    fn oracle_map_is_one_and_empty_predictions_zero() {
        let gts = vec![
            vec![
                b(0, 0, 20, 20, 1.0),
                BBox::new(30, 30, 60, 50, 2, 1.0).unwrap(),
            ],
            vec![b(5, 5, 25, 45, 1.0)],
        ];
        let e = map50_95(&gts, &gts, &default_class_names());
        assert_eq!(e.map50_95, Some(1.0));
        assert_eq!((e.precision, e.recall), (Some(1.0), Some(1.0)));
        let e = map50_95(&[vec![], vec![]], &gts, &default_class_names());
        assert_eq!(e.map50_95, Some(0.0));
        assert_eq!(e.precision, None);
    }

    #[test]
    fn greedy_matching_prefers_highest_iou() {
        let gts = [b(0, 0, 10, 10, 1.0), b(2, 0, 12, 10, 1.0)];
        // overlaps the second GT better; must take it, leaving the first
        // for the next prediction
        let preds = [b(2, 0, 12, 10, 0.9), b(0, 0, 10, 10, 0.8)];
        assert_eq!(average_precision(&preds, &gts, 0.5), Some(1.0));
    }

    #[test]
    fn confidence_cutoff_applies_to_operating_point_only() {
        let gts = vec![vec![b(0, 0, 20, 20, 1.0)]];
        let preds = vec![vec![b(0, 0, 20, 20, 0.1)]];
        let e = map50_95(&preds, &gts, &default_class_names());
        assert_eq!(e.map50_95, Some(1.0));
        assert_eq!((e.precision, e.recall), (None, Some(0.0)));
    }
}

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;

fn intersection(a: &BBox, b: &BBox) -> u64 {
    let w = a.x_max.min(b.x_max).saturating_sub(a.x_min.max(b.x_min));
    let h = a.y_max.min(b.y_max).saturating_sub(a.y_min.max(b.y_min));
    u64::from(w) * u64::from(h)
}

/// Intersection over union with half-open extents; 0 for disjoint boxes.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection(a, b);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Complete-IoU decomposition. `ciou = iou - center_dist_sq / enclosing_diag_sq - alpha * v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CIoUTerms {
    pub iou: f64,
    pub center_dist_sq: f64,
    pub enclosing_diag_sq: f64,
    pub v: f64,
    pub alpha: f64,
    pub ciou: f64,
}

pub fn box_ciou(pred: &BBox, gt: &BBox) -> CIoUTerms {
    let iou = box_iou(pred, gt);
    let centre = |b: &BBox| {
        (
            (f64::from(b.x_min) + f64::from(b.x_max)) / 2.0,
            (f64::from(b.y_min) + f64::from(b.y_max)) / 2.0,
        )
    };
    let (pc, gc) = (centre(pred), centre(gt));
    let center_dist_sq = (pc.0 - gc.0).powi(2) + (pc.1 - gc.1).powi(2);
    let ex = f64::from(pred.x_max.max(gt.x_max) - pred.x_min.min(gt.x_min));
    let ey = f64::from(pred.y_max.max(gt.y_max) - pred.y_min.min(gt.y_min));
    let enclosing_diag_sq = ex * ex + ey * ey;
    let aspect = |b: &BBox| (f64::from(b.width()) / f64::from(b.height())).atan();
    let v =
        4.0 / (std::f64::consts::PI * std::f64::consts::PI) * (aspect(gt) - aspect(pred)).powi(2);
    let alpha = v / ((1.0 - iou) + v + 1e-9);
    let ciou = iou - center_dist_sq / enclosing_diag_sq - alpha * v;
    CIoUTerms {
        iou,
        center_dist_sq,
        enclosing_diag_sq,
        v,
        alpha,
        ciou,
    }
}

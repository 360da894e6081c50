//! Quantitative evaluation: pixel-level segmentation scores, box geometry,
//! COCO-style detection AP, and inpainting fidelity.

mod boxes;
mod detection;
mod fidelity;
mod pixel;

pub use boxes::{box_ciou, box_iou, CIoUTerms};
pub use detection::{
    average_precision, average_precision_pooled, iou_thresholds, map50_95, ClassAp, DetectionEval,
    AP_RECALL_POINTS, DETECTION_CONF_CUTOFF,
};
pub use fidelity::{inpaint_fidelity, FidelityScores, PSNR_CAP};
pub use pixel::{aggregate, pixel_confusion, pixel_scores, Aggregate, PixelConfusion, PixelScores};

//! Occlusion detectors and the box-to-mask step that feeds the inpainter.

use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, TRAFFIC_CLASSES};
use crate::error::{Error, Result};
use crate::manifest::FrameRecord;
use crate::morph;
use crate::raster::{RasterImage, RasterMask, MASK_ON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorMode {
    /// Ground-truth boxes from the manifest.
    Oracle,
    /// Change detection against the clear reference frame.
    Diff,
    /// A node process speaking the node protocol.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub mode: DetectorMode,
    pub diff_threshold: u8,
    pub min_component_area: u32,
    pub open_radius: u32,
    /// Class ids kept by the oracle and external detectors. Diff boxes carry
    /// no class and are never filtered.
    pub class_filter: Vec<u32>,
    pub box_dilation: u32,
    /// Boxes below this confidence are dropped before masking.
    pub confidence_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            mode: DetectorMode::Diff,
            diff_threshold: 12,
            min_component_area: 64,
            open_radius: 1,
            class_filter: (0..TRAFFIC_CLASSES.len() as u32).collect(),
            box_dilation: 2,
            confidence_threshold: 0.25,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.diff_threshold == 0 {
            return Err(Error::Params("diff_threshold must be at least 1".into()));
        }
        if self.min_component_area == 0 {
            return Err(Error::Params(
                "min_component_area must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Params(format!(
                "confidence_threshold {} outside [0, 1]",
                self.confidence_threshold
            )));
        }
        Ok(())
    }

    pub fn keeps_class(&self, class_id: u32) -> bool {
        self.class_filter.contains(&class_id)
    }

    /// Applies the class filter and confidence threshold to boxes coming
    /// back from an external node.
    pub fn filter(&self, boxes: Vec<BBox>) -> Vec<BBox> {
        boxes
            .into_iter()
            .filter(|b| self.keeps_class(b.class_id) && b.confidence >= self.confidence_threshold)
            .collect()
    }
}

pub fn detect_oracle(frame: &FrameRecord, cfg: &DetectorConfig) -> Result<Vec<BBox>> {
    if frame.occluded_image.is_none() && frame.occlusion_boxes.is_empty() {
        return Err(Error::Params(format!(
            "frame {:?} has no occlusion annotation",
            frame.id
        )));
    }
    Ok(frame
        .occlusion_boxes
        .iter()
        .filter(|b| cfg.keeps_class(b.class_id))
        .map(|b| b.with_confidence(1.0))
        .collect())
}

/// Binary mask of pixels whose largest per-channel difference reaches
/// `threshold`.
pub fn change_mask(a: &RasterImage, b: &RasterImage, threshold: u8) -> Result<RasterMask> {
    a.same_size(b)?;
    let data = a
        .data()
        .chunks_exact(3)
        .zip(b.data().chunks_exact(3))
        .map(|(p, q)| {
            let d = (0..3).map(|c| p[c].abs_diff(q[c])).max().unwrap_or(0);
            if d >= threshold {
                MASK_ON
            } else {
                0
            }
        })
        .collect();
    RasterMask::from_vec(a.width(), a.height(), data)
}

pub fn detect_diff(
    occluded: &RasterImage,
    clear_ref: &RasterImage,
    cfg: &DetectorConfig,
) -> Result<Vec<BBox>> {
    let changed = change_mask(occluded, clear_ref, cfg.diff_threshold)?;
    let opened = morph::open(&changed, cfg.open_radius);
    let min_area = cfg.min_component_area as usize;
    morph::connected_components(&opened)
        .into_iter()
        .filter(|c| c.area >= min_area)
        .map(|c| {
            let (x0, y0, x1, y1) = c.bounds;
            let conf = (c.area as f64 / (4.0 * min_area as f64)).min(1.0);
            BBox::new(x0, y0, x1, y1, 0, conf)
        })
        .collect()
}

/// Union of the boxes, each grown by `dilation` on every side and clipped to
/// the frame.
pub fn boxes_to_mask(boxes: &[BBox], size: (u32, u32), dilation: u32) -> RasterMask {
    let (w, h) = size;
    let mut m = RasterMask::empty(w, h);
    for b in boxes {
        let x0 = b.x_min.saturating_sub(dilation);
        let y0 = b.y_min.saturating_sub(dilation);
        let x1 = b.x_max.saturating_add(dilation).min(w);
        let y1 = b.y_max.saturating_add(dilation).min(h);
        for y in y0..y1 {
            let row = (y * w) as usize;
            m.data_mut()[row + x0 as usize..row + x1.max(x0) as usize].fill(MASK_ON);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x0: u32, y0: u32, x1: u32, y1: u32) -> BBox {
        BBox::new(x0, y0, x1, y1, 0, 1.0).unwrap()
    }

    fn record(boxes: Vec<BBox>) -> FrameRecord {
        FrameRecord {
            id: "f".into(),
            clear_image: "c.png".into(),
            occluded_image: Some("o.png".into()),
            lane_mask: "m.png".into(),
            occlusion_boxes: boxes,
            road_roi: None,
            seed: 0,
            source: String::new(),
        }
    }

    #[test]
    fn oracle_filters_by_class() {
        let mut boxes = vec![bx(0, 0, 4, 4), bx(5, 5, 9, 9), bx(1, 1, 3, 3)];
        boxes[1].class_id = 1;
        boxes[2].confidence = 0.4;
        let mut cfg = DetectorConfig::default();
        let all = detect_oracle(&record(boxes.clone()), &cfg).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.iter().all(|b| b.confidence == 1.0));
        cfg.class_filter = vec![0];
        assert_eq!(
            detect_oracle(&record(boxes.clone()), &cfg).unwrap().len(),
            2
        );
        cfg.class_filter.clear();
        assert!(detect_oracle(&record(boxes), &cfg).unwrap().is_empty());

        let mut bare = record(vec![]);
        bare.occluded_image = None;
        assert!(detect_oracle(&bare, &DetectorConfig::default()).is_err());
    }

    #[test]
    fn identical_frames_yield_nothing() {
        let img = RasterImage::filled(40, 30, [90, 90, 90]);
        assert!(detect_diff(&img, &img, &DetectorConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn diff_finds_square_with_tight_box() {
        let clear = RasterImage::filled(64, 48, [90, 90, 90]);
        let mut occ = clear.clone();
        for y in 10..30 {
            for x in 20..40 {
                occ.set_pixel(x, y, [200, 30, 30]);
            }
        }
        let boxes = detect_diff(&occ, &clear, &DetectorConfig::default()).unwrap();
        assert_eq!(boxes.len(), 1);
        let b = boxes[0];
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (20, 10, 40, 30));
        assert_eq!(b.confidence, 1.0);
        assert_eq!(b.class_id, 0);
    }

    #[test]
    fn diff_drops_small_and_thin_changes() {
        let clear = RasterImage::filled(64, 48, [90, 90, 90]);
        let mut occ = clear.clone();
        for y in 0..48 {
            occ.set_pixel(5, y, [255, 255, 255]); // one-pixel line, removed by opening
        }
        for y in 30..36 {
            for x in 30..36 {
                occ.set_pixel(x, y, [0, 0, 0]); // 36 px < 64
            }
        }
        assert!(detect_diff(&occ, &clear, &DetectorConfig::default())
            .unwrap()
            .is_empty());
        assert!(detect_diff(
            &occ,
            &RasterImage::filled(8, 8, [0; 3]),
            &DetectorConfig::default()
        )
        .is_err());
    }

    #[test]
    fn confidence_grows_with_area() {
        let clear = RasterImage::filled(64, 64, [90, 90, 90]);
        let mut occ = clear.clone();
        for y in 0..8 {
            for x in 0..12 {
                occ.set_pixel(x, y, [0, 0, 0]);
            }
        }
        let b = detect_diff(&occ, &clear, &DetectorConfig::default()).unwrap();
        assert_eq!(b[0].confidence, 96.0 / 256.0);
    }

    #[test]
    fn mask_examples() {
        let m = boxes_to_mask(&[bx(2, 2, 4, 4)], (8, 8), 0);
        assert_eq!(m.count_on(), 4);
        let m = boxes_to_mask(&[bx(2, 2, 4, 4)], (8, 8), 2);
        assert_eq!(m.count_on(), 36);
        assert!(m.is_on(0, 0) && m.is_on(5, 5) && !m.is_on(6, 6));
        let m = boxes_to_mask(&[bx(6, 6, 10, 10)], (8, 8), 3);
        assert_eq!(m.count_on(), 25, "clipped to the frame");
    }

    #[test]
    fn threshold_filter_for_external_boxes() {
        let cfg = DetectorConfig::default();
        let kept = cfg.filter(vec![
            bx(0, 0, 2, 2).with_confidence(0.2),
            bx(0, 0, 2, 2).with_confidence(0.3),
        ]);
        assert_eq!(kept.len(), 1);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0u32..20, 0u32..20, 1u32..10, 1u32..10).prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn mask_equals_dilated_rectangles(boxes in prop::collection::vec(arb_box(), 0..5), d in 0u32..4) {
            let (w, h) = (24, 24);
            let m = boxes_to_mask(&boxes, (w, h), d);
            let undilated = boxes_to_mask(&boxes, (w, h), 0);
            prop_assert_eq!(&m, &morph::dilate(&undilated, d));
            let sum: u64 = boxes.iter().map(|b| {
                let x1 = (b.x_max + d).min(w);
                let y1 = (b.y_max + d).min(h);
                u64::from(x1 - b.x_min.saturating_sub(d)) * u64::from(y1 - b.y_min.saturating_sub(d))
            }).sum();
            prop_assert!(m.count_on() as u64 <= sum);
        }

        #[test]
        fn diff_ignores_common_shift(shift in 0u8..12, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::seed::rng(seed);
            let clear = RasterImage::from_vec(32, 32, (0..32 * 32 * 3).map(|_| rng.random_range(40..200)).collect()).unwrap();
            let mut occ = clear.clone();
            for y in 8..20 { for x in 6..22 { occ.set_pixel(x, y, [230, 230, 0]); } }
            let cfg = DetectorConfig { min_component_area: 16, ..DetectorConfig::default() };
            let base = detect_diff(&occ, &clear, &cfg).unwrap();
            let bump = |im: &RasterImage| RasterImage::from_vec(32, 32, im.data().iter().map(|v| v.saturating_add(shift)).collect()).unwrap();
            prop_assert_eq!(base, detect_diff(&bump(&occ), &bump(&clear), &cfg).unwrap());
        }
    }
}

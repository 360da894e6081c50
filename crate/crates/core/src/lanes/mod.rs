//! Classical lane segmentation: candidate pixels, bottom-third histogram
//! peaks, sliding windows and a quadratic fit per lane.

mod fit;

use serde::{Deserialize, Serialize};

pub use fit::{lsq_polyfit, ransac_polyfit};

use crate::error::{Error, Result};
use crate::raster::{Polygon, RasterImage, RasterMask};
use crate::synthgen::{render_lane_mask, LaneModel, Quadratic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Lsq,
    Ransac,
}

/// Where the road region comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiSource {
    FromManifest,
    Polygon(Polygon),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaneFinderConfig {
    pub luma_threshold: u8,
    pub grad_threshold: f64,
    pub roi: RoiSource,
    pub n_windows: u32,
    pub window_halfwidth: u32,
    pub min_pixels_recenter: u32,
    pub fit: FitMethod,
    pub ransac_iters: u32,
    pub ransac_tol: f64,
    pub ransac_seed: u64,
    pub stroke: u32,
    pub min_peak_mass: u32,
}

impl Default for LaneFinderConfig {
    fn default() -> Self {
        LaneFinderConfig {
            luma_threshold: 170,
            grad_threshold: 60.0,
            roi: RoiSource::FromManifest,
            n_windows: 12,
            window_halfwidth: 20,
            min_pixels_recenter: 30,
            fit: FitMethod::Ransac,
            ransac_iters: 200,
            ransac_tol: 2.0,
            ransac_seed: 0,
            stroke: 5,
            min_peak_mass: 50,
        }
    }
}

impl LaneFinderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_windows < 4 {
            return Err(Error::Params(format!(
                "n_windows {} must be at least 4",
                self.n_windows
            )));
        }
        if self.stroke < 1 {
            return Err(Error::Params("stroke must be at least 1".into()));
        }
        if !(self.grad_threshold.is_finite() && self.grad_threshold >= 0.0) {
            return Err(Error::Params(format!(
                "grad_threshold {} must be non-negative",
                self.grad_threshold
            )));
        }
        if self.window_halfwidth == 0 {
            return Err(Error::Params("window_halfwidth must be at least 1".into()));
        }
        if self.ransac_tol.is_nan() || self.ransac_tol <= 0.0 {
            return Err(Error::Params(format!(
                "ransac_tol {} must be positive",
                self.ransac_tol
            )));
        }
        Ok(())
    }

    /// The configured polygon, else the frame's own ROI.
    pub fn resolve_roi<'a>(&'a self, from_frame: Option<&'a Polygon>) -> Result<&'a Polygon> {
        match &self.roi {
            RoiSource::Polygon(p) => Ok(p),
            RoiSource::FromManifest => from_frame.ok_or_else(|| {
                Error::Params("lane finder needs a road ROI but the frame has none".into())
            }),
        }
    }
}

/// 3×3 Sobel gradient magnitude with replicated borders.
pub fn sobel_magnitude(luma: &[f32], width: u32, height: u32) -> Vec<f32> {
    let (w, h) = (width as i64, height as i64);
    let at = |x: i64, y: i64| luma[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];
    let mut out = vec![0.0; luma.len()];
    for y in 0..h {
        for x in 0..w {
            let gx = at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x - 1, y)
                - at(x - 1, y + 1);
            let gy = at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x, y - 1)
                - at(x + 1, y - 1);
            out[(y * w + x) as usize] = gx.hypot(gy);
        }
    }
    out
}

/// Bright-or-edgy pixels inside the ROI.
pub fn candidate_mask(image: &RasterImage, roi: &Polygon, cfg: &LaneFinderConfig) -> RasterMask {
    let (w, h) = image.size();
    let luma = image.luma();
    let grad = sobel_magnitude(&luma, w, h);
    let inside = roi.rasterize(w, h);
    let mut m = RasterMask::empty(w, h);
    for i in 0..(w * h) as usize {
        let hit =
            luma[i] >= f32::from(cfg.luma_threshold) || f64::from(grad[i]) >= cfg.grad_threshold;
        if hit && inside.data()[i] != 0 {
            m.data_mut()[i] = 255;
        }
    }
    m
}

/// Column positions of histogram peaks over `rows`, strongest first.
fn find_peaks(cand: &RasterMask, rows: std::ops::Range<u32>, cfg: &LaneFinderConfig) -> Vec<u32> {
    let w = cand.width() as usize;
    let mut hist = vec![0u32; w];
    for y in rows {
        for (x, slot) in hist.iter_mut().enumerate() {
            *slot += u32::from(cand.is_on(x as u32, y));
        }
    }
    let hw = cfg.window_halfwidth as usize;
    let mut prefix = vec![0u32; w + 1];
    for x in 0..w {
        prefix[x + 1] = prefix[x] + hist[x];
    }
    let mass: Vec<u32> = (0..w)
        .map(|x| prefix[(x + hw + 1).min(w)] - prefix[x.saturating_sub(hw)])
        .collect();
    let mut local: Vec<usize> = (0..w)
        .filter(|&x| {
            mass[x] >= cfg.min_peak_mass
                && (x == 0 || mass[x] > mass[x - 1])
                && (x + 1 == w || mass[x] >= mass[x + 1])
        })
        .collect();
    local.sort_by(|&a, &b| mass[b].cmp(&mass[a]).then(a.cmp(&b)));
    let mut peaks: Vec<u32> = Vec::new();
    for x in local {
        if peaks
            .iter()
            .all(|&p| (p as i64 - x as i64).unsigned_abs() >= 2 * hw as u64)
        {
            peaks.push(x as u32);
        }
    }
    peaks
}

/// Candidate pixels `(x, y)` with `x` within `halfwidth` of `center`.
fn collect(
    cand: &RasterMask,
    rows: std::ops::Range<u32>,
    center: f64,
    halfwidth: f64,
) -> Vec<(f64, f64)> {
    let w = cand.width();
    let lo = (center - halfwidth).ceil().max(0.0) as u32;
    let hi = ((center + halfwidth).floor() + 1.0).clamp(0.0, f64::from(w)) as u32;
    let mut pts = Vec::new();
    for y in rows {
        for x in lo..hi {
            if cand.is_on(x, y) {
                pts.push((f64::from(x), f64::from(y)));
            }
        }
    }
    pts
}

/// Line `x = m·y + k` through the points, or `None` if they share one row.
fn line_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if syy == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let m = sxy / syy;
    Some((m, mx - m * my))
}

/// Midpoint of the longest run of candidates on row `y` within `halfwidth`
/// of `center` (ties to the run nearest the centre). Runs shorter than 2 or
/// wider than a lane plus its edge halo are ignored.
fn row_center(cand: &RasterMask, y: u32, center: f64, halfwidth: f64, max_run: u32) -> Option<f64> {
    let w = cand.width();
    let lo = (center - halfwidth).ceil().max(0.0) as u32;
    let hi = ((center + halfwidth).floor() + 1.0).clamp(0.0, f64::from(w)) as u32;
    let mut best: Option<(u32, f64)> = None;
    let mut x = lo;
    while x < hi {
        if !cand.is_on(x, y) {
            x += 1;
            continue;
        }
        let start = x;
        while x < hi && cand.is_on(x, y) {
            x += 1;
        }
        let len = x - start;
        if !(2..=max_run).contains(&len) {
            continue;
        }
        let mid = f64::from(start + x - 1) / 2.0;
        let better = best.is_none_or(|(bl, bm)| {
            len > bl || (len == bl && (mid - center).abs() < (bm - center).abs())
        });
        if better {
            best = Some((len, mid));
        }
    }
    best.map(|b| b.1)
}

/// Slides windows upward from the bottom row and returns one lane centre
/// per row where a stroke-like run was found. The first window position and
/// the initial drift come from a line through the peak's bottom-third
/// candidates; windows recentre on the mean x of their candidates.
fn track_lane(
    cand: &RasterMask,
    peak: u32,
    top: u32,
    third: u32,
    cfg: &LaneFinderConfig,
) -> Vec<(f64, f64)> {
    let h = cand.height();
    let hw = f64::from(cfg.window_halfwidth);
    let win_h = f64::from(h - top) / f64::from(cfg.n_windows);
    let max_run = 2 * cfg.stroke + 4;

    let seed_pts = collect(cand, third..h, f64::from(peak), hw);
    let (slope, offset) = line_fit(&seed_pts).unwrap_or((0.0, f64::from(peak)));
    let mut drift = -slope * win_h;

    let mut centers = Vec::new();
    let mut prev_center: Option<f64> = None;
    let mut center = 0.0;
    for i in 0..cfg.n_windows {
        let y1 = (f64::from(h) - f64::from(i) * win_h).round() as u32;
        let y0 = (f64::from(h) - f64::from(i + 1) * win_h)
            .round()
            .max(f64::from(top)) as u32;
        if y0 >= y1 {
            continue;
        }
        center = match prev_center {
            None => slope * (f64::from(y0 + y1) / 2.0) + offset,
            Some(_) => center + drift,
        };
        let pts = collect(cand, y0..y1, center, hw);
        for y in y0..y1 {
            if let Some(x) = row_center(cand, y, center, hw, max_run) {
                centers.push((x, f64::from(y)));
            }
        }
        if pts.len() >= cfg.min_pixels_recenter as usize {
            let mean = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            if let Some(prev) = prev_center {
                drift = 0.5 * drift + 0.5 * (mean - prev);
            }
            center = mean;
        }
        prev_center = Some(center);
    }
    centers
}

/// Segments lanes inside `roi`. No peaks yields an empty mask and an empty
/// model. The mask is exactly the rasterisation of the returned model.
pub fn segment_lanes(
    image: &RasterImage,
    roi: &Polygon,
    cfg: &LaneFinderConfig,
) -> Result<(RasterMask, LaneModel)> {
    cfg.validate()?;
    let (w, h) = image.size();
    if w == 0 || h == 0 {
        return Err(Error::InvalidRaster("empty image".into()));
    }
    let top = roi.top_row().unwrap_or(h).min(h);
    let empty = || (RasterMask::empty(w, h), LaneModel::empty(h));
    if top >= h {
        return Ok(empty());
    }
    let cand = candidate_mask(image, roi, cfg);
    let third = h - h / 3;
    let peaks = find_peaks(&cand, third..h, cfg);

    let mut lanes: Vec<Quadratic> = Vec::new();
    for (i, &peak) in peaks.iter().enumerate() {
        let pts = track_lane(&cand, peak, top, third, cfg);
        let fitted = match cfg.fit {
            FitMethod::Lsq => lsq_polyfit(&pts),
            FitMethod::Ransac => ransac_polyfit(
                &pts,
                cfg.ransac_iters,
                cfg.ransac_tol,
                fit::lane_seed(cfg.ransac_seed, i),
            ),
        };
        // a track with too little support is dropped, not fatal
        if let Ok(q) = fitted {
            lanes.push(q);
        }
    }
    if lanes.is_empty() {
        return Ok(empty());
    }
    let bottom = f64::from(h - 1);
    lanes.sort_by(|a, b| a.eval(bottom).total_cmp(&b.eval(bottom)));
    let model = LaneModel {
        lanes,
        y_start: top,
        y_end: h,
    };
    Ok((render_lane_mask(&model, (w, h), cfg.stroke), model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{pixel_confusion, pixel_scores};
    use crate::synthgen::{generate_corpus, generate_scene, SceneParams};

    #[test]
    fn black_image_gives_nothing() {
        let img = RasterImage::filled(64, 48, [0; 3]);
        let (m, model) =
            segment_lanes(&img, &Polygon::frame(64, 48), &LaneFinderConfig::default()).unwrap();
        assert!(!m.any_on());
        assert!(model.lanes.is_empty());
    }

    #[test]
    fn straight_scene_matches_ground_truth() {
        let p = SceneParams {
            curvature: 0.0,
            seed: 11,
            ..SceneParams::default()
        };
        let s = generate_scene(&p).unwrap();
        let (m, model) =
            segment_lanes(&s.clear, &s.road_roi, &LaneFinderConfig::default()).unwrap();
        assert_eq!(model.lanes.len(), 3);
        let iou = pixel_scores(&pixel_confusion(&m, &s.lane_gt).unwrap()).iou;
        assert!(iou >= 0.90, "iou {iou}");
    }

    #[test]
    fn curved_scenes_mean_iou() {
        let scenes = generate_corpus(&SceneParams::default(), 5, 20).unwrap();
        let total: f64 = scenes
            .iter()
            .map(|(_, s)| {
                let (m, _) =
                    segment_lanes(&s.clear, &s.road_roi, &LaneFinderConfig::default()).unwrap();
                pixel_scores(&pixel_confusion(&m, &s.lane_gt).unwrap()).iou
            })
            .sum();
        let mean = total / 20.0;
        assert!(mean >= 0.70, "mean iou {mean}");
    }

    #[test]
    fn deterministic_and_mask_is_rasterised_model() {
        let s = generate_scene(&SceneParams {
            seed: 4,
            ..SceneParams::default()
        })
        .unwrap();
        let cfg = LaneFinderConfig::default();
        let a = segment_lanes(&s.clear, &s.road_roi, &cfg).unwrap();
        let b = segment_lanes(&s.clear, &s.road_roi, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0, render_lane_mask(&a.1, s.clear.size(), cfg.stroke));
    }

    #[test]
    fn roi_resolution() {
        let cfg = LaneFinderConfig::default();
        assert!(cfg.resolve_roi(None).is_err());
        let p = Polygon::frame(4, 4);
        assert_eq!(cfg.resolve_roi(Some(&p)).unwrap(), &p);
        let fixed = LaneFinderConfig {
            roi: RoiSource::Polygon(Polygon::frame(2, 2)),
            ..cfg
        };
        assert_eq!(fixed.resolve_roi(Some(&p)).unwrap(), &Polygon::frame(2, 2));
        assert!(LaneFinderConfig {
            n_windows: 3,
            ..LaneFinderConfig::default()
        }
        .validate()
        .is_err());
    }

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn shrinking_roi_never_adds_positives(
            seed in 0u64..1000,
            (x0, x1) in (0.0f64..150.0, 170.0f64..320.0),
            (y0, y1) in (76.0f64..140.0, 150.0f64..192.0),
        ) {
            let s = generate_scene(&SceneParams { seed, ..SceneParams::default() }).unwrap();
            let cfg = LaneFinderConfig::default();
            let outer = rect(0.0, 76.0, 320.0, 192.0);
            let inner = rect(x0, y0, x1, y1);
            let big = candidate_mask(&s.clear, &outer, &cfg);
            let small = candidate_mask(&s.clear, &inner, &cfg);
            proptest::prop_assert!(small.data().iter().zip(big.data()).all(|(&a, &b)| a == 0 || b != 0));
            let (m_small, _) = segment_lanes(&s.clear, &inner, &cfg).unwrap();
            let top = inner.top_row().unwrap();
            proptest::prop_assert!((0..top).all(|y| (0..320).all(|x| !m_small.is_on(x, y))));
        }
    }
}

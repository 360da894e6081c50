//! Hole filling: Telea's fast-marching coarse fill, an SSD
//! patch refinement, and an oracle that copies from the clear frame.
//!
//! Every mode leaves pixels outside the hole untouched.

mod fmm;
mod refine;

use serde::{Deserialize, Serialize};

pub use fmm::{fmm_distance, DistanceField};
pub use refine::{refine_patches, RefineOutcome};

use crate::error::{Error, Result};
use crate::raster::{RasterImage, RasterMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InpaintMode {
    #[serde(rename = "fmm")]
    Fmm,
    #[serde(rename = "fmm+refine")]
    FmmRefine,
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "external")]
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InpaintConfig {
    pub mode: InpaintMode,
    pub fmm_radius: u32,
    pub patch_size: u32,
    pub search_window: u32,
    pub refine_passes: u32,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        InpaintConfig {
            mode: InpaintMode::Fmm,
            fmm_radius: 5,
            patch_size: 9,
            search_window: 64,
            refine_passes: 1,
        }
    }
}

impl InpaintConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 3 || self.patch_size.is_multiple_of(2) {
            return Err(Error::Params(format!(
                "patch_size {} must be odd and at least 3",
                self.patch_size
            )));
        }
        if self.fmm_radius < 1 {
            return Err(Error::Params("fmm_radius must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fills hole pixels in fast-marching order (Telea). Each value is a
/// normalised weighted mean, over already-known pixels `q` within
/// `fmm_radius`, of the first-order estimate `I(q) + ∇L(q)·(p - q)`, where
/// `L` is luma: one weight set and one brightness slope shared by the three
/// channels, so no colour fringes. Each result is clamped to the per-channel
/// range of the neighbours it was computed from.
///
/// Slopes are least-squares plane fits on the original known pixels. A
/// filled pixel inherits the weighted mean of its neighbours' slopes rather
/// than differencing filled values, which would feed noise back into the
/// front.
pub fn inpaint_coarse(
    image: &RasterImage,
    hole: &RasterMask,
    cfg: &InpaintConfig,
) -> Result<RasterImage> {
    cfg.validate()?;
    image.same_size(hole)?;
    let field = fmm_distance(hole)?;
    let (w, h) = (image.width() as i64, image.height() as i64);
    let r = i64::from(cfg.fmm_radius);
    let mut known: Vec<bool> = hole.data().iter().map(|&v| v == 0).collect();

    let luma: Vec<f64> = image.luma().into_iter().map(f64::from).collect();
    let near = crate::morph::dilate(hole, cfg.fmm_radius);
    let mut slope: Vec<[f64; 2]> = (0..(w * h))
        .map(|i| {
            if known[i as usize] && near.data()[i as usize] != 0 {
                plane_slope(&luma, &known, (w, h), i % w, i / w)
            } else {
                [0.0; 2]
            }
        })
        .collect();
    let mut value: Vec<[f64; 3]> = image
        .data()
        .chunks_exact(3)
        .map(|p| [p[0], p[1], p[2]].map(f64::from))
        .collect();

    for &p in &field.order {
        let (px, py) = ((p as i64) % w, (p as i64) / w);
        let (gx, gy) = field.gradient(px as u32, py as u32);
        let gnorm = gx.hypot(gy);
        let tp = field.t[p];
        let mut acc = [0.0f64; 3];
        let mut sacc = [0.0f64; 2];
        let mut total = 0.0;
        let mut lo = [f64::MAX; 3];
        let mut hi = [f64::MIN; 3];
        for qy in (py - r).max(0)..=(py + r).min(h - 1) {
            for qx in (px - r).max(0)..=(px + r).min(w - 1) {
                let q = (qy * w + qx) as usize;
                let (dx, dy) = ((px - qx) as f64, (py - qy) as f64);
                let d2 = dx * dx + dy * dy;
                if !known[q] || d2 == 0.0 || d2 > (r * r) as f64 {
                    continue;
                }
                let mut dir = if gnorm > 0.0 {
                    ((dx * gx + dy * gy) / (d2.sqrt() * gnorm)).abs()
                } else {
                    1.0
                };
                if dir <= 0.01 {
                    dir = 1e-6;
                }
                let lev = 1.0 / (1.0 + (field.t[q] - tp).abs());
                let wgt = dir * lev / d2;
                let [sx, sy] = slope[q];
                let step = sx * dx + sy * dy;
                for c in 0..3 {
                    acc[c] += wgt * (value[q][c] + step);
                    lo[c] = lo[c].min(value[q][c]);
                    hi[c] = hi[c].max(value[q][c]);
                }
                sacc[0] += wgt * sx;
                sacc[1] += wgt * sy;
                total += wgt;
            }
        }
        // a frozen pixel always has a known 4-neighbour, so total > 0
        value[p] = std::array::from_fn(|c| (acc[c] / total).clamp(lo[c], hi[c]));
        slope[p] = sacc.map(|s| s / total);
        known[p] = true;
    }
    let data = value
        .iter()
        .flat_map(|v| v.map(|c| c.round() as u8))
        .collect();
    RasterImage::from_vec(image.width(), image.height(), data)
}

/// Slope of the least-squares plane through the known values of the 5×5
/// window at `(x, y)`: exact on linear images and far less noisy than a
/// central difference. Zero when the known pixels are collinear.
fn plane_slope(values: &[f64], known: &[bool], (w, h): (i64, i64), x: i64, y: i64) -> [f64; 2] {
    const K: i64 = 2;
    // normal equations for v = a + sx·dx + sy·dy
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for qy in (y - K).max(0)..=(y + K).min(h - 1) {
        for qx in (x - K).max(0)..=(x + K).min(w - 1) {
            let q = (qy * w + qx) as usize;
            if known[q] {
                let row = nalgebra::Vector3::new(1.0, (qx - x) as f64, (qy - y) as f64);
                ata += row * row.transpose();
                atb += row * values[q];
            }
        }
    }
    if ata.determinant().abs() < 1e-9 {
        return [0.0; 2];
    }
    match ata.try_inverse() {
        Some(inv) => {
            let sol = inv * atb;
            [sol[1], sol[2]]
        }
        None => [0.0; 2],
    }
}

/// Hole pixels from `clear`, everything else from `occluded`.
pub fn inpaint_oracle(
    occluded: &RasterImage,
    hole: &RasterMask,
    clear: &RasterImage,
) -> Result<RasterImage> {
    occluded.same_size(hole)?;
    occluded.same_size(clear)?;
    let mut out = occluded.clone();
    for (i, &m) in hole.data().iter().enumerate() {
        if m != 0 {
            out.data_mut()[3 * i..3 * i + 3].copy_from_slice(&clear.data()[3 * i..3 * i + 3]);
        }
    }
    Ok(out)
}

/// In-process inpainting for the `fmm` and `fmm+refine` modes. Returns the
/// filled image and the number of refine queries that found no source.
pub fn inpaint(
    image: &RasterImage,
    hole: &RasterMask,
    cfg: &InpaintConfig,
) -> Result<(RasterImage, usize)> {
    if !hole.any_on() {
        image.same_size(hole)?;
        return Ok((image.clone(), 0));
    }
    let coarse = inpaint_coarse(image, hole, cfg)?;
    match cfg.mode {
        InpaintMode::Fmm => Ok((coarse, 0)),
        InpaintMode::FmmRefine => {
            let r = refine_patches(&coarse, hole, cfg)?;
            Ok((r.image, r.unmatched))
        }
        m => Err(Error::Params(format!(
            "{m:?} inpainting needs the pipeline, not the in-process filler"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::MASK_ON;
    use proptest::prelude::*;

    fn disk(w: u32, h: u32, cx: f64, cy: f64, r: f64) -> RasterMask {
        let mut m = RasterMask::empty(w, h);
        for y in 0..h {
            for x in 0..w {
                if (f64::from(x) - cx).hypot(f64::from(y) - cy) <= r {
                    m.set(x, y, MASK_ON);
                }
            }
        }
        m
    }

    #[test]
    fn constant_image_filled_exactly() {
        let img = RasterImage::filled(40, 30, [17, 140, 201]);
        let hole = disk(40, 30, 20.0, 15.0, 9.0);
        let mut occ = img.clone();
        for y in 0..30 {
            for x in 0..40 {
                if hole.is_on(x, y) {
                    occ.set_pixel(x, y, [0, 0, 0]);
                }
            }
        }
        assert_eq!(
            inpaint_coarse(&occ, &hole, &InpaintConfig::default()).unwrap(),
            img
        );
    }

    #[test]
    fn empty_hole_is_identity() {
        let img = RasterImage::from_vec(4, 2, (0..24).collect()).unwrap();
        let hole = RasterMask::empty(4, 2);
        assert_eq!(
            inpaint_coarse(&img, &hole, &InpaintConfig::default()).unwrap(),
            img
        );
        assert_eq!(
            inpaint(&img, &hole, &InpaintConfig::default()).unwrap().0,
            img
        );
    }

    #[test]
    fn ramp_disk_error_is_small() {
        // one intensity level per column
        let (w, h) = (256, 64);
        let mut img = RasterImage::filled(w, h, [0; 3]);
        for y in 0..h {
            for x in 0..w {
                img.set_pixel(x, y, [x as u8; 3]);
            }
        }
        let hole = disk(w, h, 128.0, 32.0, 8.0);
        let out = inpaint_coarse(&img, &hole, &InpaintConfig::default()).unwrap();
        let worst = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| hole.is_on(x, y))
            .map(|(x, y)| (i32::from(out.pixel(x, y)[0]) - x as i32).abs())
            .max()
            .unwrap();
        assert!(worst <= 2, "max ramp error {worst}");
    }

    #[test]
    fn oracle_selects_per_pixel() {
        let occ = RasterImage::filled(3, 2, [1, 1, 1]);
        let clear = RasterImage::filled(3, 2, [9, 9, 9]);
        let mut hole = RasterMask::empty(3, 2);
        hole.set(1, 0, MASK_ON);
        let out = inpaint_oracle(&occ, &hole, &clear).unwrap();
        assert_eq!(out.pixel(1, 0), [9, 9, 9]);
        assert_eq!(out.pixel(0, 0), [1, 1, 1]);
        assert!(inpaint_oracle(&occ, &RasterMask::empty(2, 2), &clear).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = InpaintConfig::default();
        assert!(c.validate().is_ok());
        c.patch_size = 8;
        assert!(c.validate().is_err());
        c.patch_size = 9;
        c.fmm_radius = 0;
        assert!(c.validate().is_err());
        let j = serde_json::to_string(&InpaintMode::FmmRefine).unwrap();
        assert_eq!(j, "\"fmm+refine\"");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn coarse_fill_is_bounded_and_preserves_known(
            seed in any::<u64>(),
            cx in 4.0f64..28.0, cy in 4.0f64..20.0, r in 1.0f64..7.0,
        ) {
            use rand::Rng;
            let mut rng = crate::seed::rng(seed);
            let img = RasterImage::from_vec(32, 24, (0..32 * 24 * 3).map(|_| rng.random_range(30..220)).collect()).unwrap();
            let hole = disk(32, 24, cx, cy, r);
            let out = inpaint_coarse(&img, &hole, &InpaintConfig::default()).unwrap();
            let again = inpaint_coarse(&img, &hole, &InpaintConfig::default()).unwrap();
            prop_assert_eq!(&out, &again);
            for c in 0..3 {
                let known: Vec<u8> = (0..32 * 24).filter(|&i| hole.data()[i] == 0).map(|i| img.data()[3 * i + c]).collect();
                let (lo, hi) = (*known.iter().min().unwrap(), *known.iter().max().unwrap());
                for i in 0..32 * 24 {
                    let v = out.data()[3 * i + c];
                    if hole.data()[i] == 0 {
                        prop_assert_eq!(v, img.data()[3 * i + c]);
                    } else {
                        prop_assert!(lo <= v && v <= hi);
                    }
                }
            }
        }
    }
}

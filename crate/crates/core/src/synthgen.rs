//! Procedural road scenes with exact lane ground truth.
//!
//! Lanes are quadratics `x = a·y² + b·y + c` in image coordinates that
//! converge on a vanishing point at `horizon_y`; a shared curvature term
//! `a·(H-1-y)²` bends all of them without moving their bottom ends. The road
//! is the polygon that hugs the outermost lanes with a perspective-growing
//! margin.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::manifest::{write_manifest, DatasetManifest, FrameRecord};
use crate::raster::{Polygon, RasterImage, RasterMask, MASK_ON};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub width: u32,
    pub height: u32,
    pub lane_count: u32,
    /// Half-width of the uniform range the curvature coefficient is drawn from.
    pub curvature: f64,
    pub lane_stroke: u32,
    pub horizon_y: u32,
    pub road_brightness: f64,
    pub lane_brightness: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            width: 320,
            height: 192,
            lane_count: 3,
            curvature: 2e-4,
            lane_stroke: 5,
            horizon_y: 76,
            road_brightness: 90.0,
            lane_brightness: 230.0,
            noise_sigma: 6.0,
            seed: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Params(m));
        if self.width < 16 || self.height < 16 {
            return fail(format!("frame {}x{} too small", self.width, self.height));
        }
        if !(2..=5).contains(&self.lane_count) {
            return fail(format!("lane_count {} outside 2..=5", self.lane_count));
        }
        if self.horizon_y + 8 >= self.height {
            return fail(format!(
                "horizon_y {} leaves no road below it",
                self.horizon_y
            ));
        }
        if self.lane_stroke == 0 {
            return fail("lane_stroke must be at least 1".into());
        }
        if !(self.curvature.is_finite() && self.curvature >= 0.0) {
            return fail(format!(
                "curvature {} must be finite and non-negative",
                self.curvature
            ));
        }
        for (name, v) in [
            ("road_brightness", self.road_brightness),
            ("lane_brightness", self.lane_brightness),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(0.0..=255.0).contains(&v) {
                return fail(format!("{name} {v} outside 0..=255"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        (self.a * y + self.b) * y + self.c
    }
}

/// Lane curves plus the half-open row range `[y_start, y_end)` they are
/// defined on. Curves are ordered left to right at the bottom row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneModel {
    pub lanes: Vec<Quadratic>,
    pub y_start: u32,
    pub y_end: u32,
}

impl LaneModel {
    pub fn empty(height: u32) -> Self {
        LaneModel {
            lanes: Vec::new(),
            y_start: height,
            y_end: height,
        }
    }
}

/// Columns painted for a curve centred at `xc`: the half-open interval
/// `[xc - stroke/2, xc + stroke/2)`, which always holds `stroke` integers.
#[inline]
pub fn stroke_span(xc: f64, stroke: u32, width: u32) -> Option<(u32, u32)> {
    let half = f64::from(stroke) / 2.0;
    let lo = (xc - half).ceil().max(0.0);
    let hi = (xc + half).ceil().min(f64::from(width));
    (lo < hi).then_some((lo as u32, hi as u32))
}

pub fn render_lane_mask(model: &LaneModel, size: (u32, u32), stroke: u32) -> RasterMask {
    let (w, h) = size;
    let mut m = RasterMask::empty(w, h);
    for y in model.y_start..model.y_end.min(h) {
        for lane in &model.lanes {
            if let Some((lo, hi)) = stroke_span(lane.eval(f64::from(y)), stroke, w) {
                for x in lo..hi {
                    m.set(x, y, MASK_ON);
                }
            }
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub clear: RasterImage,
    pub lane_gt: RasterMask,
    pub model: LaneModel,
    pub road_roi: Polygon,
}

const SKY_TOP: [f64; 3] = [150.0, 185.0, 225.0];
const SKY_HORIZON: [f64; 3] = [200.0, 212.0, 228.0];
/// Verge colour, chosen with nearly the road's luma so the road edge itself
/// does not read as a lane.
const VERGE: [f64; 3] = [84.0, 98.0, 66.0];

pub fn generate_scene(params: &SceneParams) -> Result<Scene> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    let (wf, hz) = (f64::from(w), f64::from(params.horizon_y));
    let bottom = f64::from(h - 1);
    let run = bottom - hz;
    let stroke = f64::from(params.lane_stroke);

    let mut geo = seed::rng_for(params.seed, "geometry");
    let vx = wf / 2.0 + geo.random_range(-0.08..=0.08) * wf;
    let a = if params.curvature > 0.0 {
        geo.random_range(-params.curvature..=params.curvature)
    } else {
        0.0
    };
    let max_hw = vx.min(wf - 1.0 - vx) - stroke;
    let hw = (geo.random_range(0.30..=0.42) * wf).min(max_hw);
    if hw <= stroke {
        return Err(Error::Params(
            "frame too narrow for the requested lanes".into(),
        ));
    }

    let n = params.lane_count as usize;
    let lanes: Vec<Quadratic> = (0..n)
        .map(|i| {
            let xb = vx - hw + 2.0 * hw * i as f64 / (n - 1) as f64;
            let slope = (xb - vx) / run;
            // vx + slope·(y - hz) + a·(bottom - y)², expanded.
            Quadratic {
                a,
                b: slope - 2.0 * a * bottom,
                c: vx - slope * hz + a * bottom * bottom,
            }
        })
        .collect();

    for (i, lane) in lanes.iter().enumerate() {
        for y in params.horizon_y..h {
            let x = lane.eval(f64::from(y));
            if !(0.0..=wf - 1.0).contains(&x) {
                return Err(Error::Params(format!(
                    "lane {i} leaves the frame at row {y} (x = {x:.1}); reduce curvature or lane spread"
                )));
            }
        }
    }

    let model = LaneModel {
        lanes,
        y_start: params.horizon_y,
        y_end: h,
    };
    let road_roi = road_polygon(&model, params, hz, run);
    let lane_gt = render_lane_mask(&model, (w, h), params.lane_stroke);
    let clear = paint(params, &road_roi, &lane_gt);
    Ok(Scene {
        clear,
        lane_gt,
        model,
        road_roi,
    })
}

fn road_polygon(model: &LaneModel, params: &SceneParams, hz: f64, run: f64) -> Polygon {
    const SAMPLES: usize = 12;
    let wf = f64::from(params.width);
    let hf = f64::from(params.height);
    let left = model.lanes.first().expect("at least two lanes");
    let right = model.lanes.last().expect("at least two lanes");
    let margin =
        |y: f64| f64::from(params.lane_stroke) + 3.0 + 0.12 * wf * ((y - hz) / run).clamp(0.0, 1.0);
    let ys: Vec<f64> = (0..=SAMPLES)
        .map(|k| hz + (hf - hz) * k as f64 / SAMPLES as f64)
        .collect();
    let mut pts: Vec<[f64; 2]> = ys
        .iter()
        .map(|&y| [(left.eval(y) - margin(y)).clamp(0.0, wf), y])
        .collect();
    pts.extend(
        ys.iter()
            .rev()
            .map(|&y| [(right.eval(y) + margin(y)).clamp(0.0, wf), y]),
    );
    Polygon(pts)
}

fn paint(params: &SceneParams, roi: &Polygon, lanes: &RasterMask) -> RasterImage {
    let (w, h) = (params.width, params.height);
    let mut noise_rng = seed::rng_for(params.seed, "noise");
    let normal = Normal::new(0.0, params.noise_sigma.max(1e-9)).expect("finite sigma");
    let road = roi.rasterize(w, h);
    let mut img = RasterImage::filled(w, h, [0; 3]);
    for y in 0..h {
        for x in 0..w {
            let base = if y < params.horizon_y {
                let t = f64::from(y) / f64::from(params.horizon_y.max(1));
                [0, 1, 2].map(|c| SKY_TOP[c] + (SKY_HORIZON[c] - SKY_TOP[c]) * t)
            } else if lanes.is_on(x, y) {
                [params.lane_brightness; 3]
            } else if road.is_on(x, y) {
                [params.road_brightness; 3]
            } else {
                VERGE
            };
            let px = base.map(|v| {
                let n = if params.noise_sigma > 0.0 {
                    normal.sample(&mut noise_rng)
                } else {
                    0.0
                };
                (v + n).round().clamp(0.0, 255.0) as u8
            });
            img.set_pixel(x, y, px);
        }
    }
    img
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:04}")
}

/// Parameters for scene `index` of a corpus: the base parameters with a
/// per-scene seed derived from the corpus seed.
pub fn corpus_params(base: &SceneParams, corpus_seed: u64, index: usize) -> SceneParams {
    SceneParams {
        seed: seed::derive(corpus_seed, &scene_id(index)),
        ..base.clone()
    }
}

/// Scenes of a seeded corpus, in memory.
pub fn generate_corpus(
    base: &SceneParams,
    corpus_seed: u64,
    count: usize,
) -> Result<Vec<(String, Scene)>> {
    (0..count)
        .map(|i| {
            Ok((
                scene_id(i),
                generate_scene(&corpus_params(base, corpus_seed, i))?,
            ))
        })
        .collect()
}

/// Writes `frames/<id>.png`, `masks/<id>.png` and `manifest.json` under
/// `out_dir` and returns the manifest.
pub fn write_corpus(
    out_dir: &Path,
    base: &SceneParams,
    corpus_seed: u64,
    count: usize,
) -> Result<DatasetManifest> {
    if count == 0 {
        return Err(Error::Params("scene count must be at least 1".into()));
    }
    let mut manifest = DatasetManifest::default();
    for i in 0..count {
        let params = corpus_params(base, corpus_seed, i);
        let scene = generate_scene(&params)?;
        let id = scene_id(i);
        let clear_rel = format!("frames/{id}.png");
        let mask_rel = format!("masks/{id}.png");
        io::save_image(&scene.clear, out_dir.join(&clear_rel))?;
        io::save_mask(&scene.lane_gt, out_dir.join(&mask_rel))?;
        manifest.frames.push(FrameRecord {
            id,
            clear_image: clear_rel,
            occluded_image: None,
            lane_mask: mask_rel,
            occlusion_boxes: Vec::new(),
            road_roi: Some(scene.road_roi),
            seed: params.seed,
            source: "synthgen".into(),
        });
    }
    write_manifest(&manifest, out_dir.join("manifest.json"))?;
    Ok(manifest)
}

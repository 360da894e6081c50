//! Occluder compositing and the occlusion-augmented dataset builder.
//!
//! Lane ground truth is never touched: an augmented frame keeps the mask of
//! its clear frame, so labels persist underneath the occluders.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, TRAFFIC_CLASSES};
use crate::error::{Error, Result};
use crate::io;
use crate::manifest::{write_manifest, DatasetManifest, FrameRecord};
use crate::metrics::box_iou;
use crate::raster::{Polygon, RasterImage, RasterMask, RgbaImage};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct OccluderSprite {
    pub image: RgbaImage,
    pub class_id: u32,
    /// On-screen width at the bottom of the frame, before perspective scaling.
    pub nominal_base_width: u32,
}

impl OccluderSprite {
    pub fn new(image: RgbaImage, class_id: u32, nominal_base_width: u32) -> Result<Self> {
        if !image.has_visible_pixel() {
            return Err(Error::Augment("sprite has no pixel with alpha > 0".into()));
        }
        if nominal_base_width == 0 {
            return Err(Error::Augment(
                "sprite nominal width must be positive".into(),
            ));
        }
        Ok(OccluderSprite {
            image,
            class_id,
            nominal_base_width,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct SpriteLibrary {
    pub sprites: Vec<OccluderSprite>,
}

impl SpriteLibrary {
    /// Loads every `<class>_<n>.png` in `dir`, in file-name order. The class
    /// must be one of `class_names`; the nominal width is the file's width.
    pub fn load_dir(dir: &Path, class_names: &[String]) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        paths.sort();
        let mut sprites = Vec::new();
        for p in paths {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let class = stem.rsplit_once('_').map_or(stem, |(c, _)| c);
            let class_id = class_names.iter().position(|c| c == class).ok_or_else(|| {
                Error::Augment(format!("{}: unknown sprite class {class:?}", p.display()))
            })?;
            let image = io::load_rgba(&p)?;
            let width = image.width();
            sprites.push(
                OccluderSprite::new(image, class_id as u32, width)
                    .map_err(|e| Error::Augment(format!("{}: {e}", p.display())))?,
            );
        }
        if sprites.is_empty() {
            return Err(Error::Augment(format!(
                "no sprite PNGs in {}",
                dir.display()
            )));
        }
        Ok(SpriteLibrary { sprites })
    }

    /// Writes the library as `<class>_<n>.png`, numbering per class.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        let mut counters = [0usize; TRAFFIC_CLASSES.len()];
        for s in &self.sprites {
            let cls = s.class_id as usize;
            let name = TRAFFIC_CLASSES.get(cls).copied().unwrap_or("car");
            let n = counters.get_mut(cls).map_or(0, |c| {
                *c += 1;
                *c - 1
            });
            io::save_rgba(&s.image, dir.join(format!("{name}_{n}.png")))?;
        }
        Ok(())
    }
}

/// A sprite resampled to its on-screen size and anchored at a top-left
/// position, which may lie outside the frame.
struct Placement {
    sprite: RgbaImage,
    x: i64,
    y: i64,
}

impl Placement {
    fn new(sprite: &OccluderSprite, position: (i64, i64), scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Augment(format!("invalid sprite scale {scale}")));
        }
        let img = &sprite.image;
        let sw = (f64::from(img.width()) * scale).round().max(1.0) as u32;
        let sh = (f64::from(img.height()) * scale).round().max(1.0) as u32;
        let sprite = if (sw, sh) == img.size() {
            img.clone()
        } else {
            img.resize_nearest(sw, sh)
        };
        Ok(Placement {
            sprite,
            x: position.0,
            y: position.1,
        })
    }

    /// Visits in-frame pixels with alpha > 0 as (frame x, frame y, rgba).
    fn for_each_visible(&self, frame: (u32, u32), mut f: impl FnMut(u32, u32, [u8; 4])) {
        let (fw, fh) = (i64::from(frame.0), i64::from(frame.1));
        for sy in 0..self.sprite.height() {
            let y = self.y + i64::from(sy);
            if y < 0 || y >= fh {
                continue;
            }
            for sx in 0..self.sprite.width() {
                let x = self.x + i64::from(sx);
                if x < 0 || x >= fw {
                    continue;
                }
                let px = self.sprite.pixel(sx, sy);
                if px[3] > 0 {
                    f(x as u32, y as u32, px);
                }
            }
        }
    }

    fn footprint_box(&self, frame: (u32, u32), class_id: u32) -> Option<BBox> {
        let mut b: Option<(u32, u32, u32, u32)> = None;
        self.for_each_visible(frame, |x, y, _| {
            b = Some(match b {
                None => (x, y, x + 1, y + 1),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
            });
        });
        b.map(|(x0, y0, x1, y1)| BBox {
            x_min: x0,
            y_min: y0,
            x_max: x1,
            y_max: y1,
            class_id,
            confidence: 1.0,
        })
    }

    fn touches(&self, frame: (u32, u32), region: &RasterMask) -> bool {
        let mut hit = false;
        self.for_each_visible(frame, |x, y, _| hit |= region.is_on(x, y));
        hit
    }

    fn composite(&self, img: &mut RasterImage) {
        let size = img.size();
        self.for_each_visible(size, |x, y, px| {
            let dst = img.pixel(x, y);
            img.set_pixel(x, y, [0, 1, 2].map(|c| alpha_over(px[c], dst[c], px[3])));
        });
    }
}

/// `round((src·α + dst·(255-α)) / 255)` in integer arithmetic.
#[inline]
pub fn alpha_over(src: u8, dst: u8, alpha: u8) -> u8 {
    let a = u32::from(alpha);
    ((u32::from(src) * a + u32::from(dst) * (255 - a) + 127) / 255) as u8
}

/// Alpha-composites `sprite` (scaled by `scale`, nearest neighbour) with its
/// top-left corner at `position`. Returns the occluded frame and the tight
/// box of the composited footprint, clipped to the frame.
pub fn composite_occluder(
    clear: &RasterImage,
    sprite: &OccluderSprite,
    position: (i64, i64),
    scale: f64,
) -> Result<(RasterImage, BBox)> {
    let placement = Placement::new(sprite, position, scale)?;
    let bbox = placement
        .footprint_box(clear.size(), sprite.class_id)
        .ok_or_else(|| Error::Augment("sprite footprint does not intersect the frame".into()))?;
    let mut out = clear.clone();
    placement.composite(&mut out);
    Ok((out, bbox))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementPolicy {
    /// Inclusive `[min, max]` number of occluders per frame.
    pub occluders_per_frame: [u32; 2],
    pub scale_by_y: bool,
    pub max_mutual_iou: f64,
    pub require_road_intersection: bool,
    pub max_retries: u32,
    pub seed: u64,
}

impl Default for PlacementPolicy {
    fn default() -> Self {
        PlacementPolicy {
            occluders_per_frame: [1, 3],
            scale_by_y: true,
            max_mutual_iou: 0.3,
            require_road_intersection: true,
            max_retries: 50,
            seed: 0,
        }
    }
}

impl PlacementPolicy {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.occluders_per_frame;
        if lo < 1 || hi < lo {
            return Err(Error::Params(format!(
                "occluders_per_frame [{lo}, {hi}] must satisfy 1 <= min <= max"
            )));
        }
        if !(0.0..=1.0).contains(&self.max_mutual_iou) {
            return Err(Error::Params(format!(
                "max_mutual_iou {} outside [0, 1]",
                self.max_mutual_iou
            )));
        }
        if self.max_retries == 0 {
            return Err(Error::Params("max_retries must be at least 1".into()));
        }
        Ok(())
    }
}

/// Perspective scale: 0.35 at the top of the road, 1.0 at the bottom row.
pub fn perspective_scale(base_y: f64, top: f64, height: f64) -> f64 {
    let t = ((base_y - top) / (height - top).max(1.0)).clamp(0.0, 1.0);
    0.35 + 0.65 * t
}

/// Places occluders on one frame by rejection sampling. The random stream is
/// derived from `(policy.seed, frame_id)`, so frames are independent.
pub fn augment_frame(
    clear: &RasterImage,
    road_roi: Option<&Polygon>,
    sprites: &SpriteLibrary,
    policy: &PlacementPolicy,
    frame_id: &str,
) -> Result<(RasterImage, Vec<BBox>)> {
    policy.validate()?;
    if sprites.sprites.is_empty() {
        return Err(Error::Augment("sprite library is empty".into()));
    }
    let size = clear.size();
    let (w, h) = (f64::from(size.0), f64::from(size.1));
    let road = match (road_roi, policy.require_road_intersection) {
        (Some(p), _) => Some(p.rasterize(size.0, size.1)),
        (None, true) => {
            return Err(Error::Augment(format!(
                "frame {frame_id:?} has no road_roi to place occluders on"
            )))
        }
        (None, false) => None,
    };
    let top = road_roi.and_then(Polygon::top_row).map_or(0.0, f64::from);

    let mut rng = seed::rng_for(policy.seed, frame_id);
    let [lo, hi] = policy.occluders_per_frame;
    let count = rng.random_range(lo..=hi);
    let mut out = clear.clone();
    let mut boxes: Vec<BBox> = Vec::with_capacity(count as usize);

    for k in 0..count {
        let mut placed = false;
        for _ in 0..policy.max_retries {
            let sprite = &sprites.sprites[rng.random_range(0..sprites.sprites.len())];
            let t: f64 = rng.random();
            let base_y = top + t * (h - top);
            let mut scale = f64::from(sprite.nominal_base_width) / f64::from(sprite.image.width());
            if policy.scale_by_y {
                scale *= perspective_scale(base_y, top, h);
            }
            let sw = (f64::from(sprite.image.width()) * scale).round().max(1.0);
            let sh = (f64::from(sprite.image.height()) * scale).round().max(1.0);
            let cx: f64 = rng.random_range(0.0..w);
            let pos = ((cx - sw / 2.0).round() as i64, (base_y - sh).round() as i64);
            let placement = Placement::new(sprite, pos, scale)?;
            let Some(bbox) = placement.footprint_box(size, sprite.class_id) else {
                continue;
            };
            if let Some(road) = &road {
                if policy.require_road_intersection && !placement.touches(size, road) {
                    continue;
                }
            }
            if boxes
                .iter()
                .any(|b| box_iou(b, &bbox) > policy.max_mutual_iou)
            {
                continue;
            }
            placement.composite(&mut out);
            boxes.push(bbox);
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Augment(format!(
                "frame {frame_id:?}: could not place occluder {} of {count} within {} attempts",
                k + 1,
                policy.max_retries
            )));
        }
    }
    Ok((out, boxes))
}

#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    pub manifest: DatasetManifest,
    /// One line per skipped frame.
    pub warnings: Vec<String>,
}

/// Builds an occlusion-augmented copy of `clear_manifest` under `out_root`.
///
/// Occluded frames go to `frames/<id>_occ.png`; clear frames and lane masks
/// are copied to the same relative paths they had, so the lane mask path of
/// every record is unchanged. Frames whose placement fails are skipped with a
/// warning. The manifest is written to `out_root/manifest.json`.
pub fn build_augmented_dataset(
    clear_manifest: &DatasetManifest,
    clear_root: &Path,
    sprites: &SpriteLibrary,
    policy: &PlacementPolicy,
    out_root: &Path,
) -> Result<AugmentOutcome> {
    policy.validate()?;
    if sprites.sprites.is_empty() {
        return Err(Error::Augment("sprite library is empty".into()));
    }
    let same_root = same_dir(clear_root, out_root);
    let mut manifest = DatasetManifest {
        frames: Vec::with_capacity(clear_manifest.frames.len()),
        ..clear_manifest.clone()
    };
    let mut warnings = Vec::new();
    for frame in &clear_manifest.frames {
        let clear = io::load_image(clear_root.join(&frame.clear_image))?;
        let (occluded, boxes) =
            match augment_frame(&clear, frame.road_roi.as_ref(), sprites, policy, &frame.id) {
                Ok(r) => r,
                Err(e) => {
                    warnings.push(format!("skipped {}: {e}", frame.id));
                    continue;
                }
            };
        if !same_root {
            for rel in [&frame.clear_image, &frame.lane_mask] {
                let (src, dst) = (clear_root.join(rel), out_root.join(rel));
                if let Some(parent) = dst.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                std::fs::copy(&src, &dst).map_err(|e| Error::io(&src, e))?;
            }
        }
        let occ_rel = format!("frames/{}_occ.png", frame.id);
        io::save_image(&occluded, out_root.join(&occ_rel))?;
        manifest.frames.push(FrameRecord {
            occluded_image: Some(occ_rel),
            occlusion_boxes: boxes,
            ..frame.clone()
        });
    }
    write_manifest(&manifest, out_root.join("manifest.json"))?;
    Ok(AugmentOutcome { manifest, warnings })
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

// ---------------------------------------------------------------------------
// Procedural sprite library
// ---------------------------------------------------------------------------

const BODY_COLOURS: [[u8; 3]; 6] = [
    [178, 34, 34],
    [30, 64, 160],
    [222, 190, 40],
    [28, 28, 32],
    [210, 210, 214],
    [40, 120, 70],
];
const GLASS: [u8; 3] = [44, 56, 78];
const TYRE: [u8; 3] = [18, 18, 20];

struct Canvas(RgbaImage);

impl Canvas {
    fn new(w: u32, h: u32) -> Self {
        Canvas(RgbaImage::filled(w, h, [0; 4]))
    }

    fn rect(&mut self, x0: u32, y0: u32, x1: u32, y1: u32, c: [u8; 3]) {
        for y in y0..y1.min(self.0.height()) {
            for x in x0..x1.min(self.0.width()) {
                self.0.set_pixel(x, y, [c[0], c[1], c[2], 255]);
            }
        }
    }

    fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, c: [u8; 3]) {
        for y in 0..self.0.height() {
            for x in 0..self.0.width() {
                let dx = (f64::from(x) + 0.5 - cx) / rx;
                let dy = (f64::from(y) + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    self.0.set_pixel(x, y, [c[0], c[1], c[2], 255]);
                }
            }
        }
    }

    /// Half-transparent rim on every visible pixel bordering transparency.
    fn soften(mut self) -> RgbaImage {
        let src = self.0.clone();
        let (w, h) = src.size();
        for y in 0..h {
            for x in 0..w {
                let p = src.pixel(x, y);
                if p[3] == 0 {
                    continue;
                }
                let edge = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
                    .iter()
                    .any(|(dx, dy)| {
                        let (nx, ny) = (i64::from(x) + dx, i64::from(y) + dy);
                        nx < 0
                            || ny < 0
                            || nx >= i64::from(w)
                            || ny >= i64::from(h)
                            || src.pixel(nx as u32, ny as u32)[3] == 0
                    });
                if edge {
                    self.0.set_pixel(x, y, [p[0], p[1], p[2], 160]);
                }
            }
        }
        self.0
    }
}

fn car(body: [u8; 3]) -> RgbaImage {
    let mut c = Canvas::new(80, 46);
    c.rect(14, 2, 66, 20, body);
    c.rect(18, 5, 62, 18, GLASS);
    c.rect(2, 17, 78, 40, body);
    c.rect(0, 22, 80, 38, body);
    c.rect(4, 24, 12, 29, [240, 220, 150]);
    c.rect(68, 24, 76, 29, [240, 220, 150]);
    c.ellipse(18.0, 39.0, 8.0, 7.0, TYRE);
    c.ellipse(62.0, 39.0, 8.0, 7.0, TYRE);
    c.soften()
}

fn truck(body: [u8; 3]) -> RgbaImage {
    let mut c = Canvas::new(96, 70);
    c.rect(0, 0, 66, 58, [196, 196, 188]);
    c.rect(66, 18, 96, 58, body);
    c.rect(72, 22, 92, 36, GLASS);
    c.rect(0, 52, 96, 60, [60, 60, 64]);
    for x in [14.0, 34.0, 80.0] {
        c.ellipse(x, 61.0, 9.0, 9.0, TYRE);
    }
    c.soften()
}

fn bus(body: [u8; 3]) -> RgbaImage {
    let mut c = Canvas::new(112, 64);
    c.rect(0, 0, 112, 54, body);
    c.rect(6, 8, 106, 26, GLASS);
    c.rect(0, 48, 112, 54, [50, 50, 54]);
    c.ellipse(22.0, 55.0, 9.0, 9.0, TYRE);
    c.ellipse(90.0, 55.0, 9.0, 9.0, TYRE);
    c.soften()
}

fn pedestrian(body: [u8; 3]) -> RgbaImage {
    let mut c = Canvas::new(18, 48);
    c.ellipse(9.0, 5.5, 4.5, 5.0, [196, 150, 120]);
    c.rect(3, 11, 15, 30, body);
    c.rect(4, 30, 8, 48, [40, 40, 60]);
    c.rect(10, 30, 14, 48, [40, 40, 60]);
    c.soften()
}

fn two_wheeler(body: [u8; 3], w: u32, h: u32) -> RgbaImage {
    let mut c = Canvas::new(w, h);
    let (wf, hf) = (f64::from(w), f64::from(h));
    c.ellipse(wf / 2.0, 6.0, 5.0, 5.5, [196, 150, 120]);
    c.rect(w / 2 - 5, 11, w / 2 + 5, h - 16, body);
    c.rect(2, h - 18, w - 2, h - 12, [70, 70, 74]);
    c.ellipse(wf * 0.22, hf - 8.0, 6.5, 7.5, TYRE);
    c.ellipse(wf * 0.78, hf - 8.0, 6.5, 7.5, TYRE);
    c.soften()
}

/// A small seeded library of vehicle-like sprites covering six of the
/// traffic classes (no train).
pub fn procedural_library(seed_value: u64) -> SpriteLibrary {
    let mut rng = seed::rng_for(seed_value, "sprites");
    let mut colour = || BODY_COLOURS[rng.random_range(0..BODY_COLOURS.len())];
    let class = |name: &str| {
        TRAFFIC_CLASSES
            .iter()
            .position(|c| *c == name)
            .expect("known class") as u32
    };
    let items = vec![
        (car(colour()), class("car")),
        (car(colour()), class("car")),
        (car(colour()), class("car")),
        (truck(colour()), class("truck")),
        (bus(colour()), class("bus")),
        (pedestrian(colour()), class("pedestrian")),
        (two_wheeler(colour(), 34, 42), class("motorcycle")),
        (two_wheeler(colour(), 28, 38), class("bicycle")),
    ];
    SpriteLibrary {
        sprites: items
            .into_iter()
            .map(|(image, class_id)| {
                let w = image.width();
                OccluderSprite::new(image, class_id, w).expect("procedural sprites are visible")
            })
            .collect(),
    }
}

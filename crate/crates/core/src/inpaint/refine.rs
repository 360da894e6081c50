//! SSD patch matching over a coarse fill.

use super::InpaintConfig;
use crate::error::Result;
use crate::raster::{RasterImage, RasterMask};

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub image: RasterImage,
    /// Query patches with no hole-free source inside the search window; their
    /// pixels keep the coarse values.
    pub unmatched: usize,
}

/// Summed-area table of hole pixels, for O(1) "is this patch hole-free".
struct HoleCounts {
    w: usize,
    sums: Vec<u32>,
}

impl HoleCounts {
    fn new(hole: &RasterMask) -> Self {
        let (w, h) = (hole.width() as usize, hole.height() as usize);
        let mut sums = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0;
            for x in 0..w {
                row += u32::from(hole.data()[y * w + x] != 0);
                sums[(y + 1) * (w + 1) + x + 1] = sums[y * (w + 1) + x + 1] + row;
            }
        }
        HoleCounts { w, sums }
    }

    /// Hole pixels in `[x0, x1) × [y0, y1)`.
    fn count(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u32 {
        let s = |x: usize, y: usize| self.sums[y * (self.w + 1) + x];
        s(x1, y1) + s(x0, y0) - s(x0, y1) - s(x1, y0)
    }
}

struct Query {
    cx: i64,
    cy: i64,
    bounds: (i64, i64, i64, i64),
}

/// Replaces hole pixels patch by patch with the best-matching hole-free
/// source patch. Query centres lie on a grid of step `patch_size / 2` and are
/// visited in raster order; a query is any grid patch that touches the hole.
/// All matching in a pass reads from the image as it was when the pass
/// started, so the searches run in parallel and only the writes are ordered.
/// Ties go to the source with the smallest `(y, x)`.
pub fn refine_patches(
    image: &RasterImage,
    hole: &RasterMask,
    cfg: &InpaintConfig,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    image.same_size(hole)?;
    hole.ensure_binary()?;
    let (w, h) = (image.width() as i64, image.height() as i64);
    let half = i64::from(cfg.patch_size / 2);
    let stride = half.max(1) as usize;
    let counts = HoleCounts::new(hole);
    let is_hole = |x: i64, y: i64| hole.data()[(y * w + x) as usize] != 0;

    let mut queries = Vec::new();
    for cy in (0..h).step_by(stride) {
        for cx in (0..w).step_by(stride) {
            let (x0, y0) = ((cx - half).max(0), (cy - half).max(0));
            let (x1, y1) = ((cx + half + 1).min(w), (cy + half + 1).min(h));
            if counts.count(x0 as usize, y0 as usize, x1 as usize, y1 as usize) > 0 {
                queries.push(Query {
                    cx,
                    cy,
                    bounds: (x0, y0, x1, y1),
                });
            }
        }
    }

    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(queries.len().max(1));
    let mut out = image.clone();
    let mut unmatched = 0;
    for _ in 0..cfg.refine_passes {
        let snap = out.clone();
        let chunk = queries.len().div_ceil(threads).max(1);
        let matches: Vec<Option<(i64, i64)>> = std::thread::scope(|s| {
            let handles: Vec<_> = queries
                .chunks(chunk)
                .map(|qs| {
                    let (snap, counts) = (&snap, &counts);
                    s.spawn(move || {
                        qs.iter()
                            .map(|q| best_source(snap, hole, counts, q, half, cfg))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|t| t.join().expect("patch search does not panic"))
                .collect()
        });
        for (q, m) in queries.iter().zip(matches) {
            let Some((sx, sy)) = m else {
                unmatched += 1;
                continue;
            };
            let (x0, y0, x1, y1) = q.bounds;
            for y in y0..y1 {
                for x in x0..x1 {
                    if is_hole(x, y) {
                        let v = snap.pixel((sx + x - q.cx) as u32, (sy + y - q.cy) as u32);
                        out.set_pixel(x as u32, y as u32, v);
                    }
                }
            }
        }
    }
    Ok(RefineOutcome {
        image: out,
        unmatched,
    })
}

/// Centre of the lowest-SSD hole-free source for one query.
fn best_source(
    snap: &RasterImage,
    hole: &RasterMask,
    counts: &HoleCounts,
    q: &Query,
    half: i64,
    cfg: &InpaintConfig,
) -> Option<(i64, i64)> {
    let (w, h) = (snap.width() as i64, snap.height() as i64);
    let data = snap.data();
    let (x0, y0, x1, y1) = q.bounds;
    // compared offsets, as flat pixel deltas from the centre: the query's
    // known pixels, or the whole coarse query when it has none
    let mut deltas: Vec<i64> = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            if hole.data()[(y * w + x) as usize] == 0 {
                deltas.push((y - q.cy) * w + (x - q.cx));
            }
        }
    }
    if deltas.is_empty() {
        deltas = (y0..y1)
            .flat_map(|y| (x0..x1).map(move |x| (y - q.cy) * w + (x - q.cx)))
            .collect();
    }
    let centre = q.cy * w + q.cx;
    let query: Vec<[i32; 3]> = deltas
        .iter()
        .map(|d| {
            let i = 3 * (centre + d) as usize;
            [data[i], data[i + 1], data[i + 2]].map(i32::from)
        })
        .collect();

    let search = i64::from(cfg.search_window);
    let side = (2 * half + 1) as usize;
    let mut best: Option<(u64, i64, i64)> = None;
    for sy in (q.cy - search).max(half)..=(q.cy + search).min(h - 1 - half) {
        for sx in (q.cx - search).max(half)..=(q.cx + search).min(w - 1 - half) {
            if counts.count(
                (sx - half) as usize,
                (sy - half) as usize,
                (sx - half) as usize + side,
                (sy - half) as usize + side,
            ) != 0
            {
                continue;
            }
            let base = sy * w + sx;
            let bound = best.map_or(u64::MAX, |b| b.0);
            let mut ssd = 0u64;
            for (k, d) in deltas.iter().enumerate() {
                let i = 3 * (base + d) as usize;
                let qv = query[k];
                for c in 0..3 {
                    let diff = i32::from(data[i + c]) - qv[c];
                    ssd += (diff * diff) as u64;
                }
                if ssd >= bound {
                    break;
                }
            }
            if ssd < bound {
                best = Some((ssd, sx, sy));
            }
        }
    }
    best.map(|(_, x, y)| (x, y))
}

#[cfg(test)]
mod tests {
    use super::super::inpaint_coarse;
    use super::*;
    use crate::raster::MASK_ON;

    fn stripes(w: u32, h: u32, period: u32) -> RasterImage {
        let mut img = RasterImage::filled(w, h, [0; 3]);
        for y in 0..h {
            for x in 0..w {
                // sawtooth, so every column of a period is distinct
                let v = (40 + 16 * (x % period)) as u8;
                img.set_pixel(x, y, [v, v / 2, 255 - v]);
            }
        }
        img
    }

    fn rect(w: u32, h: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> RasterMask {
        let mut m = RasterMask::empty(w, h);
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, MASK_ON);
            }
        }
        m
    }

    #[test]
    fn counts_match_brute_force() {
        let hole = rect(10, 8, 2, 3, 7, 6);
        let c = HoleCounts::new(&hole);
        assert_eq!(c.count(0, 0, 10, 8), 15);
        assert_eq!(c.count(3, 4, 5, 5), 2);
        assert_eq!(c.count(7, 0, 10, 8), 0);
    }

    #[test]
    fn stripes_are_reproduced() {
        let (w, h) = (96, 48);
        let clear = stripes(w, h, 10);
        // narrow enough that every query patch sees known pixels
        let hole = rect(w, h, 42, 10, 50, 38);
        let coarse = inpaint_coarse(&clear, &hole, &InpaintConfig::default()).unwrap();
        let r = refine_patches(&coarse, &hole, &InpaintConfig::default()).unwrap();
        assert_eq!(r.unmatched, 0);
        let worst = r
            .image
            .data()
            .iter()
            .zip(clear.data())
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap();
        assert!(worst <= 4, "worst stripe error {worst}");
    }

    #[test]
    fn uniform_and_empty_are_identity() {
        let img = RasterImage::filled(30, 30, [77, 88, 99]);
        let hole = rect(30, 30, 10, 10, 20, 20);
        assert_eq!(
            refine_patches(&img, &hole, &InpaintConfig::default())
                .unwrap()
                .image,
            img
        );
        let noisy = stripes(30, 20, 6);
        let r = refine_patches(
            &noisy,
            &RasterMask::empty(30, 20),
            &InpaintConfig::default(),
        )
        .unwrap();
        assert_eq!(r.image, noisy);
    }

    #[test]
    fn no_source_is_counted() {
        // every 9x9 window overlaps the hole
        let img = RasterImage::filled(12, 12, [5, 5, 5]);
        let hole = rect(12, 12, 4, 4, 8, 8);
        let r = refine_patches(&img, &hole, &InpaintConfig::default()).unwrap();
        assert!(r.unmatched > 0);
        assert_eq!(r.image, img);
    }
}

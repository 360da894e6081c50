//! Fast-marching solution of `|∇T| = 1` inside a hole.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::raster::RasterMask;

/// Arrival times over the whole frame (0 outside the hole) and the order in
/// which hole pixels were frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub width: u32,
    pub height: u32,
    pub t: Vec<f64>,
    /// Linear pixel indices in nondecreasing `t`.
    pub order: Vec<usize>,
}

impl DistanceField {
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.t[(y * self.width + x) as usize]
    }

    /// Central differences, one-sided at the frame border.
    pub fn gradient(&self, x: u32, y: u32) -> (f64, f64) {
        let (w, h) = (self.width, self.height);
        let diff = |lo: f64, hi: f64, span: u32| {
            if span == 0 {
                0.0
            } else {
                (hi - lo) / f64::from(span)
            }
        };
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        (
            diff(self.at(xl, y), self.at(xr, y), xr - xl),
            diff(self.at(x, yu), self.at(x, yd), yd - yu),
        )
    }
}

#[derive(PartialEq)]
struct Entry {
    t: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on t, ties to the lower index
        other.t.total_cmp(&self.t).then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Upwind update from the smaller frozen neighbour on each axis.
fn solve(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if hi - lo >= 1.0 {
        lo + 1.0
    } else {
        (lo + hi + (2.0 - (hi - lo) * (hi - lo)).sqrt()) / 2.0
    }
}

pub fn fmm_distance(hole: &RasterMask) -> Result<DistanceField> {
    hole.ensure_binary()?;
    let (w, h) = (hole.width() as usize, hole.height() as usize);
    let in_hole: Vec<bool> = hole.data().iter().map(|&v| v != 0).collect();
    if w * h > 0 && in_hole.iter().all(|&v| v) {
        return Err(Error::Inpaint(
            "hole covers the whole frame; nothing to propagate from".into(),
        ));
    }
    let mut t = vec![f64::INFINITY; w * h];
    let mut frozen = vec![false; w * h];
    for i in 0..w * h {
        if !in_hole[i] {
            t[i] = 0.0;
            frozen[i] = true;
        }
    }

    let neighbours = |i: usize| {
        let (x, y) = (i % w, i / w);
        [
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
            (y > 0).then(|| i - w),
            (y + 1 < h).then(|| i + w),
        ]
    };
    let update = |i: usize, t: &[f64], frozen: &[bool]| {
        let [l, r, u, d] = neighbours(i);
        let pick = |n: Option<usize>| n.filter(|&j| frozen[j]).map_or(f64::INFINITY, |j| t[j]);
        solve(pick(l).min(pick(r)), pick(u).min(pick(d)))
    };

    let mut heap = BinaryHeap::new();
    for i in 0..w * h {
        if in_hole[i] && neighbours(i).into_iter().flatten().any(|j| !in_hole[j]) {
            t[i] = update(i, &t, &frozen);
            heap.push(Entry { t: t[i], idx: i });
        }
    }

    let mut order = Vec::new();
    while let Some(Entry { t: ti, idx }) = heap.pop() {
        if frozen[idx] || ti > t[idx] {
            continue;
        }
        frozen[idx] = true;
        order.push(idx);
        for j in neighbours(idx).into_iter().flatten() {
            if frozen[j] {
                continue;
            }
            let tj = update(j, &t, &frozen);
            if tj < t[j] {
                t[j] = tj;
                heap.push(Entry { t: tj, idx: j });
            }
        }
    }
    Ok(DistanceField {
        width: w as u32,
        height: h as u32,
        t,
        order,
    })
}

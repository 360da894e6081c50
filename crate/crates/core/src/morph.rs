//! Binary morphology with square structuring elements, and 8-connected
//! component labelling.
//!
//! Windows are clipped to the frame: pixels outside the image neither
//! contribute to a dilation nor veto an erosion.

use crate::raster::{RasterMask, MASK_OFF, MASK_ON};

#[derive(Clone, Copy)]
enum Op {
    Dilate,
    Erode,
}

fn pass_1d(
    src: &[bool],
    len: usize,
    stride: usize,
    count: usize,
    r: usize,
    op: Op,
    dst: &mut [bool],
) {
    // src/dst hold `count` lines of `len` elements; elements of a line are
    // `stride` apart and consecutive lines are 1 (columns) or `len` (rows) apart.
    let line_step = if stride == 1 { len } else { 1 };
    let mut prefix = vec![0u32; len + 1];
    for line in 0..count {
        let base = line * line_step;
        for i in 0..len {
            prefix[i + 1] = prefix[i] + u32::from(src[base + i * stride]);
        }
        for i in 0..len {
            let lo = i.saturating_sub(r);
            let hi = (i + r + 1).min(len);
            let on = prefix[hi] - prefix[lo];
            dst[base + i * stride] = match op {
                Op::Dilate => on > 0,
                Op::Erode => on as usize == hi - lo,
            };
        }
    }
}

fn separable(mask: &RasterMask, radius: u32, op: Op) -> RasterMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let r = radius as usize;
    let src: Vec<bool> = mask.data().iter().map(|&v| v == MASK_ON).collect();
    let mut tmp = vec![false; w * h];
    pass_1d(&src, w, 1, h, r, op, &mut tmp);
    let mut out = vec![false; w * h];
    pass_1d(&tmp, h, w, w, r, op, &mut out);
    let data = out
        .into_iter()
        .map(|b| if b { MASK_ON } else { MASK_OFF })
        .collect();
    RasterMask::from_vec(mask.width(), mask.height(), data).expect("same dims")
}

/// Square (Chebyshev) dilation: output is positive iff any positive input
/// lies within the (2r+1)×(2r+1) window.
pub fn dilate(mask: &RasterMask, radius: u32) -> RasterMask {
    separable(mask, radius, Op::Dilate)
}

pub fn erode(mask: &RasterMask, radius: u32) -> RasterMask {
    separable(mask, radius, Op::Erode)
}

/// Erosion followed by dilation with the same radius.
pub fn open(mask: &RasterMask, radius: u32) -> RasterMask {
    dilate(&erode(mask, radius), radius)
}

/// One 8-connected component of positive pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub area: usize,
    /// Half-open pixel bounds `(x_min, y_min, x_max, y_max)`.
    pub bounds: (u32, u32, u32, u32),
}

/// Components in raster order of their first pixel.
pub fn connected_components(mask: &RasterMask) -> Vec<Component> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let data = mask.data();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || data[start] != MASK_ON {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut area = 0;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            area += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if !seen[j] && data[j] == MASK_ON {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(Component {
            area,
            bounds: (x0 as u32, y0 as u32, x1 as u32 + 1, y1 as u32 + 1),
        });
    }
    out
}

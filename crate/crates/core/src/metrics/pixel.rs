use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{RasterMask, MASK_ON};

/// Per-pixel confusion counts. Counts add, so per-frame results can be
/// reduced in any order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelConfusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl PixelConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for PixelConfusion {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        PixelConfusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for PixelConfusion {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for PixelConfusion {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// `iou` and `dice` are always set; when prediction and ground truth are
/// both empty they are 1.0 by convention and `empty` is raised. Precision
/// and recall are `None` when their denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelScores {
    pub iou: f64,
    pub dice: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub empty: bool,
}

pub fn pixel_confusion(pred: &RasterMask, gt: &RasterMask) -> Result<PixelConfusion> {
    pred.same_size(gt)?;
    pred.ensure_binary()?;
    gt.ensure_binary()?;
    let mut c = PixelConfusion::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p == MASK_ON, g == MASK_ON) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn pixel_scores(c: &PixelConfusion) -> PixelScores {
    let union = c.tp + c.fp + c.fn_;
    if union == 0 {
        return PixelScores {
            iou: 1.0,
            dice: 1.0,
            precision: None,
            recall: None,
            empty: true,
        };
    }
    PixelScores {
        iou: c.tp as f64 / union as f64,
        dice: (2 * c.tp) as f64 / (2 * c.tp + c.fp + c.fn_) as f64,
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        empty: false,
    }
}

/// Dataset-level scores. `macro_scores` averages per-frame scores over frames
/// that are not empty-vs-empty (those are counted in `excluded_empty`);
/// precision and recall average over frames where they are defined.
/// `micro` scores the summed confusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(rename = "macro")]
    pub macro_scores: PixelScores,
    pub micro: PixelScores,
    pub frames: usize,
    pub excluded_empty: usize,
    pub confusion: PixelConfusion,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate(per_frame: &[PixelConfusion]) -> Result<Aggregate> {
    if per_frame.is_empty() {
        return Err(Error::Metrics(
            "cannot aggregate an empty list of frames".into(),
        ));
    }
    let scores: Vec<PixelScores> = per_frame.iter().map(pixel_scores).collect();
    let defined: Vec<&PixelScores> = scores.iter().filter(|s| !s.empty).collect();
    let macro_scores = match mean(defined.iter().map(|s| s.iou)) {
        None => pixel_scores(&PixelConfusion::default()),
        Some(iou) => PixelScores {
            iou,
            dice: mean(defined.iter().map(|s| s.dice)).unwrap_or(iou),
            precision: mean(defined.iter().filter_map(|s| s.precision)),
            recall: mean(defined.iter().filter_map(|s| s.recall)),
            empty: false,
        },
    };
    let confusion: PixelConfusion = per_frame.iter().copied().sum();
    Ok(Aggregate {
        macro_scores,
        micro: pixel_scores(&confusion),
        frames: per_frame.len(),
        excluded_empty: scores.len() - defined.len(),
        confusion,
    })
}

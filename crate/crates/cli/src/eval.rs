//! Mask-versus-mask scoring, paired by frame id.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;
use serde_json::json;

use occlane_core::io;
use occlane_core::manifest::{manifest_root, read_manifest};
use occlane_core::metrics::{
    aggregate, pixel_confusion, pixel_scores, Aggregate, PixelConfusion, PixelScores,
};
use occlane_core::morph;
use occlane_core::pipeline::{emit_report, MetricsRow, ReportFormat, Tabular};
use occlane_core::raster::binarize;

use crate::commands::print_table;
use crate::config::write_snapshot;
use crate::{usage, CmdResult, EvalArgs};

#[derive(Debug, Serialize)]
struct EvalFrame {
    id: String,
    confusion: PixelConfusion,
    scores: PixelScores,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    pairs: usize,
    /// Predictions without ground truth.
    unmatched_pred: Vec<String>,
    /// Ground truth without a prediction.
    unmatched_gt: Vec<String>,
    frames: Vec<EvalFrame>,
    aggregate: Aggregate,
}

impl Tabular for EvalReport {
    fn label_header(&self) -> &'static str {
        "Average"
    }

    fn rows(&self) -> Vec<MetricsRow> {
        vec![
            MetricsRow {
                label: "macro".into(),
                scores: self.aggregate.macro_scores,
            },
            MetricsRow {
                label: "micro".into(),
                scores: self.aggregate.micro,
            },
        ]
    }
}

/// `<id>.png` files of a directory, keyed by id.
fn png_index(dir: &Path) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

pub fn eval(a: EvalArgs) -> CmdResult {
    let preds = png_index(&a.pred).map_err(usage)?;
    let gts: BTreeMap<String, PathBuf> = match (&a.gt, &a.manifest) {
        (Some(dir), _) => png_index(dir).map_err(usage)?,
        (None, Some(m)) => {
            let root = manifest_root(m);
            read_manifest(m)?
                .frames
                .into_iter()
                .map(|f| {
                    let p = root.join(&f.lane_mask);
                    (f.id, p)
                })
                .collect()
        }
        (None, None) => return Err(usage(anyhow!("one of --gt or --manifest is required"))),
    };
    let unmatched_pred: Vec<String> = preds
        .keys()
        .filter(|k| !gts.contains_key(*k))
        .cloned()
        .collect();
    let unmatched_gt: Vec<String> = gts
        .keys()
        .filter(|k| !preds.contains_key(*k))
        .cloned()
        .collect();
    for id in &unmatched_pred {
        eprintln!("occlane: unmatched prediction {id}");
    }
    for id in &unmatched_gt {
        eprintln!("occlane: unmatched ground truth {id}");
    }

    let mut frames = Vec::new();
    for (id, pred_path) in &preds {
        let Some(gt_path) = gts.get(id) else { continue };
        let pred = binarize(&io::load_mask(pred_path)?, a.threshold);
        let mut gt = binarize(&io::load_mask(gt_path)?, a.threshold);
        if a.dilation > 0 {
            gt = morph::dilate(&gt, a.dilation);
        }
        let confusion = pixel_confusion(&pred, &gt).with_context(|| format!("frame {id}"))?;
        frames.push(EvalFrame {
            id: id.clone(),
            confusion,
            scores: pixel_scores(&confusion),
        });
    }
    if frames.is_empty() {
        return Err(anyhow!("no prediction/ground-truth pairs matched by id").into());
    }
    let confusions: Vec<PixelConfusion> = frames.iter().map(|f| f.confusion).collect();
    let report = EvalReport {
        pairs: frames.len(),
        unmatched_pred,
        unmatched_gt,
        aggregate: aggregate(&confusions)?,
        frames,
    };
    print_table(&report);
    if let Some(out) = &a.out {
        let dir = out.join("reports");
        emit_report(&report, dir.join("eval.csv"), ReportFormat::Csv)?;
        emit_report(&report, dir.join("eval.json"), ReportFormat::Json)?;
        write_snapshot(
            out,
            &json!({
                "command": "eval",
                "pred": a.pred,
                "gt": a.gt,
                "manifest": a.manifest,
                "threshold": a.threshold,
                "dilation": a.dilation,
            }),
        )?;
    }
    Ok(())
}

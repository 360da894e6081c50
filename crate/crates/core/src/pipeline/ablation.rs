use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::snapshot;
use super::{
    load_assets, parallel_map, run_frame_assets, score, segment_stage, AtStage, FrameAssets,
    NodeSet, PipelineConfig, StageError,
};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, FrameRecord};
use crate::metrics::{aggregate, Aggregate, PixelConfusion, PixelScores};
use crate::nodeproto::NodeOptions;
use crate::raster::{RasterImage, RasterMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Clear,
    Occluded,
    InpaintedDetector,
    InpaintedGt,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Clear,
        Condition::Occluded,
        Condition::InpaintedDetector,
        Condition::InpaintedGt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Clear => "clear",
            Condition::Occluded => "occluded",
            Condition::InpaintedDetector => "inpainted_detector",
            Condition::InpaintedGt => "inpainted_gt",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionScore {
    pub confusion: PixelConfusion,
    pub scores: PixelScores,
}

/// One frame's scores under each condition, in [`Condition::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationFrame {
    pub id: String,
    pub detector_boxes: Vec<BBox>,
    pub conditions: Vec<ConditionScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub aggregate: Aggregate,
}

/// A frame left out of every condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: String,
    pub condition: Option<Condition>,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub corpus_seed: Option<u64>,
    pub config: PipelineConfig,
    pub conditions: Vec<ConditionSummary>,
    /// Sorted by frame id.
    pub frames: Vec<AblationFrame>,
    pub excluded: Vec<Exclusion>,
}

impl AblationReport {
    pub fn summary(&self, c: Condition) -> &Aggregate {
        &self
            .conditions
            .iter()
            .find(|s| s.condition == c)
            .expect("reports carry all four conditions")
            .aggregate
    }
}

/// Rasters produced for one frame, handed to the ablation sink.
#[derive(Debug, Clone)]
pub struct AblationOutput {
    pub id: String,
    pub clear: RasterImage,
    pub occluded: RasterImage,
    pub gt: RasterMask,
    pub detector_inpainted: RasterImage,
    pub oracle_inpainted: RasterImage,
    /// Predicted masks in [`Condition::ALL`] order.
    pub masks: [RasterMask; 4],
}

fn exclusion(id: &str, condition: Option<Condition>, e: StageError) -> Exclusion {
    Exclusion {
        id: id.to_string(),
        condition,
        stage: e.stage.into(),
        message: e.error.to_string(),
    }
}

fn ablate_frame(
    frame: &FrameRecord,
    assets: &FrameAssets,
    cfg: &PipelineConfig,
    oracle_cfg: &PipelineConfig,
    nodes: &mut NodeSet,
) -> std::result::Result<(AblationFrame, AblationOutput), Exclusion> {
    let occluded = assets.occluded.clone().expect("checked before the run");
    let direct = |image: &RasterImage, c: Condition, nodes: &mut NodeSet| {
        segment_stage(image, frame, assets, cfg, nodes)
            .and_then(|m| score(&m, assets, cfg).map(|s| (m, s)))
            .at("segment")
            .map_err(|e| exclusion(&frame.id, Some(c), e))
    };
    let (clear_mask, clear_score) = direct(&assets.clear, Condition::Clear, nodes)?;
    let (occ_mask, occ_score) = direct(&occluded, Condition::Occluded, nodes)?;
    let det = run_frame_assets(frame, assets, cfg, nodes)
        .map_err(|e| exclusion(&frame.id, Some(Condition::InpaintedDetector), e))?;
    let gt = run_frame_assets(frame, assets, oracle_cfg, nodes)
        .map_err(|e| exclusion(&frame.id, Some(Condition::InpaintedGt), e))?;

    let as_score = |(c, s): (PixelConfusion, PixelScores)| ConditionScore {
        confusion: c,
        scores: s,
    };
    let row = AblationFrame {
        id: frame.id.clone(),
        detector_boxes: det.boxes.clone(),
        conditions: vec![
            as_score(clear_score),
            as_score(occ_score),
            as_score((det.confusion, det.scores)),
            as_score((gt.confusion, gt.scores)),
        ],
    };
    let out = AblationOutput {
        id: frame.id.clone(),
        clear: assets.clear.clone(),
        occluded,
        gt: assets.gt.clone(),
        detector_inpainted: det.inpainted,
        oracle_inpainted: gt.inpainted,
        masks: [clear_mask, occ_mask, det.predicted, gt.predicted],
    };
    Ok((row, out))
}

/// Scores every frame under the four conditions with one segmenter:
/// the clear frame, the occluded frame, the full pipeline with the
/// configured detector, and the full pipeline with ground-truth boxes.
///
/// A frame whose manifest entry has no occluded image is an error. A frame
/// that fails at run time, in any condition, is dropped from all four and
/// listed in `excluded`.
pub fn run_ablation(
    manifest: &DatasetManifest,
    root: &Path,
    cfg: &PipelineConfig,
    node_opts: &NodeOptions,
    corpus_seed: Option<u64>,
    sink: &(dyn Fn(&AblationOutput) -> Result<()> + Sync),
) -> Result<AblationReport> {
    cfg.validate()?;
    manifest.validate()?;
    if manifest.frames.is_empty() {
        return Err(Error::Manifest("manifest has no frames".into()));
    }
    if let Some(f) = manifest.frames.iter().find(|f| f.occluded_image.is_none()) {
        return Err(Error::Manifest(format!(
            "frame {:?} has no occluded image or ground-truth boxes; ablation needs an augmented manifest",
            f.id
        )));
    }
    let oracle_cfg = cfg.with_oracle_boxes();

    let outcomes = parallel_map(
        &manifest.frames,
        cfg.workers,
        || NodeSet::new(node_opts.clone()),
        |nodes, frame| {
            let assets = load_assets(frame, root)
                .at("load")
                .map_err(|e| exclusion(&frame.id, None, e))?;
            let (row, out) = ablate_frame(frame, &assets, cfg, &oracle_cfg, nodes)?;
            sink(&out)
                .at("write")
                .map_err(|e| exclusion(&frame.id, None, e))?;
            Ok::<_, Exclusion>(row)
        },
    );

    let mut frames = Vec::new();
    let mut excluded = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => frames.push(r),
            Err(e) => excluded.push(e),
        }
    }
    frames.sort_by(|a, b| a.id.cmp(&b.id));
    excluded.sort_by(|a, b| a.id.cmp(&b.id));
    if frames.is_empty() {
        let first = &excluded[0];
        return Err(Error::Params(format!(
            "every frame was excluded; first: {} ({}{} stage): {}",
            first.id,
            first
                .condition
                .map(|c| format!("{c}, "))
                .unwrap_or_default(),
            first.stage,
            first.message
        )));
    }

    let conditions = Condition::ALL
        .iter()
        .enumerate()
        .map(|(i, &condition)| {
            let confusions: Vec<PixelConfusion> =
                frames.iter().map(|f| f.conditions[i].confusion).collect();
            Ok(ConditionSummary {
                condition,
                aggregate: aggregate(&confusions)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(AblationReport {
        corpus_seed,
        config: snapshot(cfg),
        conditions,
        frames,
        excluded,
    })
}

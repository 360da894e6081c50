//! Detect → mask → inpaint → segment orchestration, dataset runs, the
//! four-condition ablation, and the reports and panels they produce.

mod ablation;
mod dataset;
mod panel;
mod report;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use ablation::{
    run_ablation, AblationFrame, AblationOutput, AblationReport, Condition, ConditionScore,
    ConditionSummary, Exclusion,
};
pub use dataset::{run_dataset, FrameFailure, FrameSummary, RunReport};
pub use panel::{compose_panel, emit_panel, PanelTile};
pub use report::{
    emit_report, to_csv, MetricsRow, ReportFormat, StageTiming, Tabular, TimingReport,
};

use crate::bbox::BBox;
use crate::detect::{boxes_to_mask, detect_diff, detect_oracle, DetectorConfig, DetectorMode};
use crate::error::{Error, Result};
use crate::inpaint::{inpaint, inpaint_oracle, InpaintConfig, InpaintMode};
use crate::io;
use crate::lanes::{segment_lanes, LaneFinderConfig};
use crate::manifest::FrameRecord;
use crate::metrics::{pixel_confusion, pixel_scores, PixelConfusion, PixelScores};
use crate::morph;
use crate::nodeproto::{spawn_node, NodeHandle, NodeOptions, Role};
use crate::raster::{binarize, RasterImage, RasterMask};

/// How to launch an external node for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalNode {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    /// Extra request parameters, merged over the per-frame context.
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub call_timeout_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalNodes {
    pub detect: Option<ExternalNode>,
    pub inpaint: Option<ExternalNode>,
    pub segment: Option<ExternalNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmenterMode {
    #[default]
    Classical,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub inpainter: InpaintConfig,
    pub segmenter: LaneFinderConfig,
    pub segmenter_mode: SegmenterMode,
    pub nodes: ExternalNodes,
    pub mask_binarize_threshold: u8,
    /// Ground-truth dilation radius applied before scoring.
    pub eval_dilation: u32,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            detector: DetectorConfig::default(),
            inpainter: InpaintConfig::default(),
            segmenter: LaneFinderConfig::default(),
            segmenter_mode: SegmenterMode::Classical,
            nodes: ExternalNodes::default(),
            mask_binarize_threshold: 128,
            eval_dilation: 0,
            workers: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.inpainter.validate()?;
        self.segmenter.validate()?;
        let need = |mode_external: bool, node: &Option<ExternalNode>, role: &str| {
            if mode_external && node.as_ref().is_none_or(|n| n.command.is_empty()) {
                return Err(Error::Params(format!(
                    "{role} mode is external but nodes.{role} has no command"
                )));
            }
            Ok(())
        };
        need(
            self.detector.mode == DetectorMode::External,
            &self.nodes.detect,
            "detect",
        )?;
        need(
            self.inpainter.mode == InpaintMode::External,
            &self.nodes.inpaint,
            "inpaint",
        )?;
        need(
            self.segmenter_mode == SegmenterMode::External,
            &self.nodes.segment,
            "segment",
        )?;
        if self.workers == 0 {
            return Err(Error::Params("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// The condition-4 variant: ground-truth boxes for every class, with the
    /// same dilation as the configured detector.
    pub fn with_oracle_boxes(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.detector = DetectorConfig {
            mode: DetectorMode::Oracle,
            class_filter: DetectorConfig::default().class_filter,
            box_dilation: self.detector.box_dilation,
            ..self.detector.clone()
        };
        c
    }
}

/// Per-stage wall-clock times in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub detect_ms: f64,
    pub mask_ms: f64,
    pub inpaint_ms: f64,
    pub segment_ms: f64,
    pub total_ms: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub frame_id: String,
    pub boxes: Vec<BBox>,
    pub occlusion_mask: RasterMask,
    pub inpainted: RasterImage,
    pub predicted: RasterMask,
    pub timings: Timings,
    pub confusion: PixelConfusion,
    pub scores: PixelScores,
    /// Refinement queries that found no source patch.
    pub unmatched_patches: usize,
}

/// Pipeline stage names used in failure attribution.
pub const STAGES: [&str; 5] = ["load", "detect", "inpaint", "segment", "score"];

/// A stage-attributed failure.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage: {}", self.stage, self.error)
    }
}

trait AtStage<T> {
    fn at(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// Node processes owned by one worker, spawned on first use and replaced
/// after a poisoning failure.
pub struct NodeSet {
    opts: NodeOptions,
    detect: Option<NodeHandle>,
    inpaint: Option<NodeHandle>,
    segment: Option<NodeHandle>,
}

impl NodeSet {
    pub fn new(opts: NodeOptions) -> Self {
        NodeSet {
            opts,
            detect: None,
            inpaint: None,
            segment: None,
        }
    }

    fn handle(&mut self, role: Role, spec: &ExternalNode) -> Result<&mut NodeHandle> {
        let slot = match role {
            Role::Detect => &mut self.detect,
            Role::Inpaint => &mut self.inpaint,
            Role::Segment => &mut self.segment,
        };
        if slot.as_ref().is_some_and(|h| h.is_poisoned()) {
            *slot = None;
        }
        if slot.is_none() {
            let mut opts = self.opts.clone();
            if let Some(t) = spec.call_timeout_s {
                opts.call_timeout = Duration::from_secs_f64(t);
            }
            *slot = Some(spawn_node(&spec.command, role, &opts)?);
        }
        Ok(slot.as_mut().expect("just filled"))
    }

    pub fn shutdown(&mut self) {
        for h in [&mut self.detect, &mut self.inpaint, &mut self.segment]
            .into_iter()
            .flatten()
        {
            h.shutdown();
        }
    }
}

impl Drop for NodeSet {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Everything a frame needs from disk.
#[derive(Debug, Clone)]
pub struct FrameAssets {
    pub clear: RasterImage,
    pub occluded: Option<RasterImage>,
    pub gt: RasterMask,
    pub clear_path: PathBuf,
}

pub fn load_assets(frame: &FrameRecord, root: &Path) -> Result<FrameAssets> {
    let clear_path =
        std::path::absolute(root.join(&frame.clear_image)).map_err(|e| Error::io(root, e))?;
    let clear = io::load_image(&clear_path)?;
    let occluded = frame
        .occluded_image
        .as_ref()
        .map(|p| io::load_image(root.join(p)))
        .transpose()?;
    let gt = binarize(&io::load_mask(root.join(&frame.lane_mask))?, 128);
    clear.same_size(&gt)?;
    if let Some(o) = &occluded {
        clear.same_size(o)?;
    }
    Ok(FrameAssets {
        clear,
        occluded,
        gt,
        clear_path,
    })
}

fn context(
    frame: &FrameRecord,
    assets: &FrameAssets,
    extra: &serde_json::Map<String, serde_json::Value>,
) -> serde_json::Map<String, serde_json::Value> {
    let mut m = serde_json::Map::new();
    m.insert("frame_id".into(), frame.id.clone().into());
    m.insert(
        "clear".into(),
        assets.clear_path.display().to_string().into(),
    );
    m.insert(
        "gt_boxes".into(),
        serde_json::to_value(&frame.occlusion_boxes).expect("boxes serialize"),
    );
    if let Some(roi) = &frame.road_roi {
        m.insert(
            "road_roi".into(),
            serde_json::to_value(roi).expect("polygon serializes"),
        );
    }
    for (k, v) in extra {
        m.insert(k.clone(), v.clone());
    }
    m
}

fn external<'a>(spec: &'a Option<ExternalNode>, role: &str) -> Result<&'a ExternalNode> {
    spec.as_ref()
        .ok_or_else(|| Error::Params(format!("no external {role} node configured")))
}

/// Runs the segmenter and returns a binary mask.
pub fn segment_stage(
    image: &RasterImage,
    frame: &FrameRecord,
    assets: &FrameAssets,
    cfg: &PipelineConfig,
    nodes: &mut NodeSet,
) -> Result<RasterMask> {
    match cfg.segmenter_mode {
        SegmenterMode::Classical => {
            let roi = cfg.segmenter.resolve_roi(frame.road_roi.as_ref())?;
            Ok(segment_lanes(image, roi, &cfg.segmenter)?.0)
        }
        SegmenterMode::External => {
            let spec = external(&cfg.nodes.segment, "segment")?;
            let raw = nodes
                .handle(Role::Segment, spec)?
                .segment(image, context(frame, assets, &spec.params))?;
            Ok(binarize(&raw, cfg.mask_binarize_threshold))
        }
    }
}

fn detect_stage(
    image: &RasterImage,
    frame: &FrameRecord,
    assets: &FrameAssets,
    cfg: &PipelineConfig,
    nodes: &mut NodeSet,
) -> Result<Vec<BBox>> {
    let d = &cfg.detector;
    let boxes = match d.mode {
        DetectorMode::Oracle => detect_oracle(frame, d)?,
        DetectorMode::Diff => detect_diff(image, &assets.clear, d)?,
        DetectorMode::External => {
            let spec = external(&cfg.nodes.detect, "detect")?;
            let raw = nodes
                .handle(Role::Detect, spec)?
                .detect(image, context(frame, assets, &spec.params))?;
            return Ok(d.filter(raw));
        }
    };
    Ok(boxes
        .into_iter()
        .filter(|b| b.confidence >= d.confidence_threshold)
        .collect())
}

fn inpaint_stage(
    image: &RasterImage,
    hole: &RasterMask,
    frame: &FrameRecord,
    assets: &FrameAssets,
    cfg: &PipelineConfig,
    nodes: &mut NodeSet,
) -> Result<(RasterImage, usize)> {
    if !hole.any_on() {
        return Ok((image.clone(), 0));
    }
    match cfg.inpainter.mode {
        InpaintMode::Fmm | InpaintMode::FmmRefine => inpaint(image, hole, &cfg.inpainter),
        InpaintMode::Oracle => Ok((inpaint_oracle(image, hole, &assets.clear)?, 0)),
        InpaintMode::External => {
            let spec = external(&cfg.nodes.inpaint, "inpaint")?;
            let filled = nodes.handle(Role::Inpaint, spec)?.inpaint(
                image,
                hole,
                context(frame, assets, &spec.params),
            )?;
            Ok((filled, 0))
        }
    }
}

/// Ground truth as scored: dilated by `eval_dilation` when configured.
pub fn scoring_gt(gt: &RasterMask, cfg: &PipelineConfig) -> RasterMask {
    if cfg.eval_dilation > 0 {
        morph::dilate(gt, cfg.eval_dilation)
    } else {
        gt.clone()
    }
}

/// Scores a predicted mask against the frame's ground truth.
pub fn score(
    pred: &RasterMask,
    assets: &FrameAssets,
    cfg: &PipelineConfig,
) -> Result<(PixelConfusion, PixelScores)> {
    let c = pixel_confusion(pred, &scoring_gt(&assets.gt, cfg))?;
    Ok((c, pixel_scores(&c)))
}

/// Runs the full pipeline on already-loaded assets. The input is the
/// occluded frame when there is one, else the clear frame.
pub fn run_frame_assets(
    frame: &FrameRecord,
    assets: &FrameAssets,
    cfg: &PipelineConfig,
    nodes: &mut NodeSet,
) -> std::result::Result<PipelineResult, StageError> {
    let start = Instant::now();
    let input = assets.occluded.as_ref().unwrap_or(&assets.clear);

    let t = Instant::now();
    let boxes = detect_stage(input, frame, assets, cfg, nodes).at("detect")?;
    let detect_ms = ms(t.elapsed());

    let t = Instant::now();
    let hole = boxes_to_mask(&boxes, input.size(), cfg.detector.box_dilation);
    let mask_ms = ms(t.elapsed());

    let t = Instant::now();
    let (inpainted, unmatched) =
        inpaint_stage(input, &hole, frame, assets, cfg, nodes).at("inpaint")?;
    let inpaint_ms = ms(t.elapsed());

    let t = Instant::now();
    let predicted = segment_stage(&inpainted, frame, assets, cfg, nodes).at("segment")?;
    let segment_ms = ms(t.elapsed());

    let (confusion, scores) = score(&predicted, assets, cfg).at("score")?;
    Ok(PipelineResult {
        frame_id: frame.id.clone(),
        boxes,
        occlusion_mask: hole,
        inpainted,
        predicted,
        timings: Timings {
            detect_ms,
            mask_ms,
            inpaint_ms,
            segment_ms,
            total_ms: ms(start.elapsed()),
        },
        confusion,
        scores,
        unmatched_patches: unmatched,
    })
}

/// Loads the frame's files relative to `root` and runs the pipeline.
pub fn run_frame(
    frame: &FrameRecord,
    root: &Path,
    cfg: &PipelineConfig,
    nodes: &mut NodeSet,
) -> std::result::Result<PipelineResult, StageError> {
    let assets = load_assets(frame, root).at("load")?;
    run_frame_assets(frame, &assets, cfg, nodes)
}

/// Applies `f` to every item on `workers` threads, each with its own state
/// from `init`. Results come back in item order.
pub(crate) fn parallel_map<T: Sync, S, R: Send>(
    items: &[T],
    workers: usize,
    init: impl Fn() -> S + Sync,
    f: impl Fn(&mut S, &T) -> R + Sync,
) -> Vec<R> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| {
                let mut state = init();
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= items.len() {
                        break;
                    }
                    let r = f(&mut state, &items[i]);
                    slots
                        .lock()
                        .expect("no worker panics while holding the lock")[i] = Some(r);
                }
            });
        }
    });
    slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}

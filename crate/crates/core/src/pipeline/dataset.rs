use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::TimingReport;
use super::{parallel_map, run_frame, NodeSet, PipelineConfig, PipelineResult, Timings};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;
use crate::metrics::{aggregate, Aggregate, PixelConfusion, PixelScores};
use crate::nodeproto::NodeOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub id: String,
    pub boxes: Vec<BBox>,
    pub confusion: PixelConfusion,
    pub scores: PixelScores,
    pub unmatched_patches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub id: String,
    pub stage: String,
    pub message: String,
}

/// Everything about a dataset run that does not depend on scheduling.
/// Timings live in a separate [`TimingReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub corpus_seed: Option<u64>,
    pub config: PipelineConfig,
    /// Sorted by frame id.
    pub frames: Vec<FrameSummary>,
    pub failures: Vec<FrameFailure>,
    /// `None` when every frame failed.
    pub aggregate: Option<Aggregate>,
}

impl RunReport {
    pub fn attempted(&self) -> usize {
        self.frames.len() + self.failures.len()
    }

    /// More than half the frames failed.
    pub fn mostly_failed(&self) -> bool {
        2 * self.failures.len() > self.attempted()
    }
}

/// Config as recorded in reports: the worker count is reset so that it
/// cannot make two otherwise identical reports differ.
pub(crate) fn snapshot(cfg: &PipelineConfig) -> PipelineConfig {
    PipelineConfig {
        workers: 1,
        ..cfg.clone()
    }
}

/// Runs every frame of `manifest` (paths relative to `root`) on
/// `cfg.workers` threads. `sink` sees each successful result as it is
/// produced; a sink error fails that frame at the `write` stage.
pub fn run_dataset(
    manifest: &DatasetManifest,
    root: &Path,
    cfg: &PipelineConfig,
    node_opts: &NodeOptions,
    corpus_seed: Option<u64>,
    sink: &(dyn Fn(&PipelineResult) -> Result<()> + Sync),
) -> Result<(RunReport, TimingReport)> {
    cfg.validate()?;
    manifest.validate()?;
    if manifest.frames.is_empty() {
        return Err(Error::Manifest("manifest has no frames".into()));
    }
    let outcomes = parallel_map(
        &manifest.frames,
        cfg.workers,
        || NodeSet::new(node_opts.clone()),
        |nodes, frame| {
            let r = run_frame(frame, root, cfg, nodes).map_err(|e| FrameFailure {
                id: frame.id.clone(),
                stage: e.stage.into(),
                message: e.error.to_string(),
            })?;
            sink(&r).map_err(|e| FrameFailure {
                id: frame.id.clone(),
                stage: "write".into(),
                message: e.to_string(),
            })?;
            Ok::<_, FrameFailure>((
                FrameSummary {
                    id: r.frame_id,
                    boxes: r.boxes,
                    confusion: r.confusion,
                    scores: r.scores,
                    unmatched_patches: r.unmatched_patches,
                },
                r.timings,
            ))
        },
    );

    let mut frames = Vec::new();
    let mut timings: Vec<(String, Timings)> = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok((s, t)) => {
                timings.push((s.id.clone(), t));
                frames.push(s);
            }
            Err(f) => failures.push(f),
        }
    }
    frames.sort_by(|a, b| a.id.cmp(&b.id));
    failures.sort_by(|a, b| a.id.cmp(&b.id));
    timings.sort_by(|a, b| a.0.cmp(&b.0));

    let confusions: Vec<PixelConfusion> = frames.iter().map(|f| f.confusion).collect();
    let report = RunReport {
        corpus_seed,
        config: snapshot(cfg),
        aggregate: aggregate(&confusions).ok(),
        frames,
        failures,
    };
    let timing = TimingReport::from_frames(timings.iter().map(|(_, t)| *t));
    Ok((report, timing))
}

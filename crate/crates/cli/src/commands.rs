use std::collections::BTreeSet;
use std::io::{stdin, stdout};
use std::path::Path;

use anyhow::{anyhow, Context};
use serde_json::json;

use occlane_core::augment::{
    build_augmented_dataset, procedural_library, PlacementPolicy, SpriteLibrary,
};
use occlane_core::bbox::default_class_names;
use occlane_core::io;
use occlane_core::manifest::{manifest_root, read_manifest, DatasetManifest};
use occlane_core::nodeproto::{serve, Behavior, NodeOptions, Role};
use occlane_core::pipeline::{
    emit_panel, emit_report, run_ablation, run_dataset, AblationOutput, Condition, PanelTile,
    PipelineConfig, PipelineResult, ReportFormat, Tabular,
};
use occlane_core::synthgen::{write_corpus, SceneParams};

use crate::config::{self, write_snapshot};
use crate::{
    usage, AblateArgs, AugmentArgs, CmdResult, PipelineArgs, RunArgs, ServeNodeArgs, SpritesArgs,
    SynthArgs,
};

pub fn synth(a: SynthArgs) -> CmdResult {
    let mut p: SceneParams = config::load(a.config.as_deref())?;
    p.width = a.width.unwrap_or(p.width);
    p.height = a.height.unwrap_or(p.height);
    p.horizon_y = a.horizon_y.unwrap_or(p.horizon_y);
    p.lane_count = a.lane_count.unwrap_or(p.lane_count);
    p.curvature = a.curvature.unwrap_or(p.curvature);
    p.lane_stroke = a.lane_stroke.unwrap_or(p.lane_stroke);
    p.noise_sigma = a.noise_sigma.unwrap_or(p.noise_sigma);
    p.validate().map_err(usage)?;
    if a.count == 0 {
        return Err(usage(anyhow!("--count must be at least 1")));
    }
    let m = write_corpus(&a.out, &p, a.seed, a.count)?;
    write_snapshot(
        &a.out,
        &json!({"command": "synth", "corpus_seed": a.seed, "count": a.count, "scene": p}),
    )?;
    println!("wrote {} scenes to {}", m.frames.len(), a.out.display());
    Ok(())
}

pub fn sprites(a: SpritesArgs) -> CmdResult {
    let lib = procedural_library(a.seed);
    lib.save_dir(&a.out)?;
    write_snapshot(&a.out, &json!({"command": "sprites", "seed": a.seed}))?;
    println!("wrote {} sprites to {}", lib.sprites.len(), a.out.display());
    Ok(())
}

pub fn augment(a: AugmentArgs) -> CmdResult {
    let mut policy: PlacementPolicy = config::load(a.config.as_deref())?;
    policy.seed = a.seed;
    policy.occluders_per_frame[0] = a.min_occluders.unwrap_or(policy.occluders_per_frame[0]);
    policy.occluders_per_frame[1] = a.max_occluders.unwrap_or(policy.occluders_per_frame[1]);
    policy.max_mutual_iou = a.max_mutual_iou.unwrap_or(policy.max_mutual_iou);
    policy.max_retries = a.max_retries.unwrap_or(policy.max_retries);
    policy.scale_by_y &= !a.no_perspective;
    policy.validate().map_err(usage)?;

    let manifest = read_manifest(&a.manifest)?;
    let root = manifest_root(&a.manifest);
    let lib = SpriteLibrary::load_dir(&a.sprites, &default_class_names())?;
    let outcome = build_augmented_dataset(&manifest, &root, &lib, &policy, &a.out)?;
    for w in &outcome.warnings {
        eprintln!("occlane: warning: {w}");
    }
    write_snapshot(
        &a.out,
        &json!({
            "command": "augment",
            "corpus_seed": config::corpus_seed(&root),
            "policy": policy,
            "sprites": lib.sprites.len(),
        }),
    )?;
    println!(
        "augmented {} of {} frames into {}",
        outcome.manifest.frames.len(),
        manifest.frames.len(),
        a.out.display()
    );
    if outcome.manifest.frames.is_empty() {
        return Err(anyhow!("no frame could be augmented").into());
    }
    Ok(())
}

struct Prepared {
    manifest: DatasetManifest,
    root: std::path::PathBuf,
    cfg: PipelineConfig,
    nodes: NodeOptions,
    corpus_seed: Option<u64>,
}

fn prepare(a: &PipelineArgs) -> Result<Prepared, crate::Failure> {
    let mut cfg: PipelineConfig = config::load(a.config.as_deref())?;
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    cfg.validate().map_err(usage)?;
    let manifest = read_manifest(&a.manifest)?;
    let root = manifest_root(&a.manifest);
    let nodes = NodeOptions {
        keep_scratch: a.keep_scratch,
        scratch_root: Some(a.out.join("scratch")),
        ..NodeOptions::default()
    };
    let corpus_seed = config::corpus_seed(&root);
    Ok(Prepared {
        manifest,
        root,
        cfg,
        nodes,
        corpus_seed,
    })
}

fn snapshot(command: &str, p: &Prepared, a: &PipelineArgs) -> serde_json::Value {
    let mut cfg = p.cfg.clone();
    cfg.workers = 1;
    json!({
        "command": command,
        "corpus_seed": p.corpus_seed,
        "manifest": a.manifest,
        "config": cfg,
    })
}

pub fn print_table<R: Tabular>(report: &R) {
    println!(
        "{:<20} {:>9} {:>9} {:>9} {:>9}",
        report.label_header(),
        "IOU",
        "Precision",
        "Recall",
        "Dice"
    );
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    for r in report.rows() {
        let s = r.scores;
        println!(
            "{:<20} {:>9} {:>9} {:>9} {:>9}",
            r.label,
            cell(Some(s.iou)),
            cell(s.precision),
            cell(s.recall),
            cell(Some(s.dice))
        );
    }
}

fn write_reports<R: Tabular>(report: &R, out: &Path, stem: &str) -> anyhow::Result<()> {
    let dir = out.join("reports");
    emit_report(report, dir.join(format!("{stem}.csv")), ReportFormat::Csv)?;
    emit_report(report, dir.join(format!("{stem}.json")), ReportFormat::Json)?;
    Ok(())
}

pub fn run(a: RunArgs) -> CmdResult {
    let a = a.pipeline;
    let p = prepare(&a)?;
    write_snapshot(&a.out, &snapshot("run", &p, &a))?;
    let out = a.out.clone();
    let sink = |r: &PipelineResult| -> occlane_core::Result<()> {
        io::save_mask(
            &r.predicted,
            out.join("masks").join(format!("{}.png", r.frame_id)),
        )?;
        io::save_mask(
            &r.occlusion_mask,
            out.join("masks")
                .join("occlusion")
                .join(format!("{}.png", r.frame_id)),
        )?;
        io::save_image(
            &r.inpainted,
            out.join("frames")
                .join(format!("{}_inpainted.png", r.frame_id)),
        )
    };
    let (report, timing) =
        run_dataset(&p.manifest, &p.root, &p.cfg, &p.nodes, p.corpus_seed, &sink)?;
    write_reports(&report, &a.out, "run")?;
    timing.write(a.out.join("reports").join("timings.json"))?;
    print_table(&report);
    for f in &report.failures {
        eprintln!(
            "occlane: frame {} failed at {}: {}",
            f.id, f.stage, f.message
        );
    }
    if report.mostly_failed() {
        return Err(anyhow!(
            "{} of {} frames failed",
            report.failures.len(),
            report.attempted()
        )
        .into());
    }
    Ok(())
}

fn panel_tiles(o: &AblationOutput) -> Vec<PanelTile> {
    let mut tiles = vec![
        PanelTile::image("clear", o.clear.clone()),
        PanelTile::image("occluded", o.occluded.clone()),
        PanelTile::image("inpainted det", o.detector_inpainted.clone()),
        PanelTile::image("inpainted gt", o.oracle_inpainted.clone()),
        PanelTile::mask("ground truth", &o.gt),
    ];
    tiles.extend(
        Condition::ALL
            .iter()
            .zip(&o.masks)
            .map(|(c, m)| PanelTile::mask(c.as_str(), m)),
    );
    tiles
}

pub fn ablate(a: AblateArgs) -> CmdResult {
    let panels = a.panels;
    let a = a.pipeline;
    let p = prepare(&a)?;
    let mut snap = snapshot("ablate", &p, &a);
    snap["panels"] = json!(panels);
    write_snapshot(&a.out, &snap)?;

    let panel_ids: BTreeSet<&str> = p
        .manifest
        .frames
        .iter()
        .take(panels)
        .map(|f| f.id.as_str())
        .collect();
    let out = a.out.clone();
    let sink = |o: &AblationOutput| -> occlane_core::Result<()> {
        for (c, m) in Condition::ALL.iter().zip(&o.masks) {
            io::save_mask(m, out.join("masks").join(format!("{}_{c}.png", o.id)))?;
        }
        let frames = out.join("frames");
        io::save_image(
            &o.detector_inpainted,
            frames.join(format!("{}_inpainted_detector.png", o.id)),
        )?;
        io::save_image(
            &o.oracle_inpainted,
            frames.join(format!("{}_inpainted_gt.png", o.id)),
        )?;
        if panel_ids.contains(o.id.as_str()) {
            emit_panel(
                &panel_tiles(o),
                out.join("panels").join(format!("{}.png", o.id)),
            )?;
        }
        Ok(())
    };
    let report = run_ablation(&p.manifest, &p.root, &p.cfg, &p.nodes, p.corpus_seed, &sink)
        .context("ablation failed")?;
    write_reports(&report, &a.out, "ablation")?;
    print_table(&report);
    for e in &report.excluded {
        eprintln!(
            "occlane: frame {} excluded at {}: {}",
            e.id, e.stage, e.message
        );
    }
    if let Some(c) = Condition::ALL
        .into_iter()
        .find(|&c| report.summary(c).frames == 0)
    {
        return Err(anyhow!("condition {c} produced no scored frame").into());
    }
    Ok(())
}

pub fn serve_node(a: ServeNodeArgs) -> CmdResult {
    let role: Role = a.role.parse().map_err(|e: String| usage(anyhow!(e)))?;
    let behavior = match a.behavior {
        Some(b) => b.parse::<Behavior>().map_err(|e| usage(anyhow!(e)))?,
        None if role == Role::Segment => Behavior::Identity,
        None => Behavior::Oracle,
    };
    serve(role, behavior, stdin().lock(), stdout().lock())?;
    Ok(())
}

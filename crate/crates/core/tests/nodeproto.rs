use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use occlane_core::inpaint::inpaint_oracle;
use occlane_core::nodeproto::{spawn_node, NodeOptions, Role};
use occlane_core::raster::{RasterImage, RasterMask};
use occlane_core::{io, BBox, Error};
use serde_json::json;

fn refnode(role: &str, behavior: &str) -> Vec<String> {
    vec![
        env!("CARGO_BIN_EXE_occlane-refnode").to_string(),
        "--role".into(),
        role.into(),
        "--behavior".into(),
        behavior.into(),
    ]
}

fn opts(dir: &tempfile::TempDir) -> NodeOptions {
    NodeOptions {
        scratch_root: Some(dir.path().to_path_buf()),
        ..NodeOptions::default()
    }
}

fn gradient_image(w: u32, h: u32) -> RasterImage {
    let data = (0..w * h).flat_map(|i| {
        let v = ((i * 7) % 256) as u8;
        [v, 255 - v, v / 2]
    });
    RasterImage::from_vec(w, h, data.collect()).unwrap()
}

#[test]
fn identity_segment_returns_binarized_luma() {
    let dir = tempfile::tempdir().unwrap();
    let mut node = spawn_node(&refnode("segment", "identity"), Role::Segment, &opts(&dir)).unwrap();
    let img = gradient_image(23, 11);
    let mask = node.segment(&img, Default::default()).unwrap();
    let expected: Vec<u8> = img
        .luma()
        .iter()
        .map(|&l| if l.round() >= 128.0 { 255 } else { 0 })
        .collect();
    assert_eq!(mask.data(), expected.as_slice());

    let black = node
        .segment(&RasterImage::filled(8, 8, [0; 3]), Default::default())
        .unwrap();
    assert!(!black.any_on());
    let status = node.shutdown().expect("exit status");
    assert!(status.success());
    assert_eq!(node.shutdown(), Some(status), "second shutdown is a no-op");
}

#[test]
fn oracle_inpaint_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let mut node = spawn_node(&refnode("inpaint", "oracle"), Role::Inpaint, &opts(&dir)).unwrap();
    let occluded = gradient_image(20, 16);
    let clear = RasterImage::filled(20, 16, [9, 99, 199]);
    let mut hole = RasterMask::empty(20, 16);
    for (x, y) in [(0, 0), (5, 5), (6, 5), (19, 15)] {
        hole.set(x, y, 255);
    }
    let clear_path = dir.path().join("clear.png");
    io::save_image(&clear, &clear_path).unwrap();
    let params = json!({"clear": clear_path.display().to_string()});
    let out = node
        .inpaint(&occluded, &hole, params.as_object().unwrap().clone())
        .unwrap();
    assert_eq!(out, inpaint_oracle(&occluded, &hole, &clear).unwrap());
}

#[test]
fn detect_nodes_return_param_boxes() {
    let dir = tempfile::tempdir().unwrap();
    let boxes = vec![BBox::new(1, 2, 10, 12, 3, 0.75).unwrap()];
    for (behavior, key) in [("constant", "boxes"), ("oracle", "gt_boxes")] {
        let mut node = spawn_node(&refnode("detect", behavior), Role::Detect, &opts(&dir)).unwrap();
        let mut params = serde_json::Map::new();
        params.insert(key.into(), serde_json::to_value(&boxes).unwrap());
        let got = node
            .detect(&RasterImage::filled(16, 16, [1; 3]), params)
            .unwrap();
        assert_eq!(got, boxes);
    }
}

#[test]
fn handshake_failures() {
    let dir = tempfile::tempdir().unwrap();
    let e = spawn_node(
        &refnode("segment", "wrong-role"),
        Role::Segment,
        &opts(&dir),
    )
    .err()
    .unwrap()
    .to_string();
    assert!(e.contains("mismatch"), "{e}");

    let e = spawn_node(&refnode("inpaint", "oracle"), Role::Segment, &opts(&dir))
        .err()
        .unwrap()
        .to_string();
    assert!(e.contains("refused"), "{e}");

    let missing = vec!["/nonexistent/occlane-node".to_string()];
    let e = spawn_node(&missing, Role::Segment, &opts(&dir))
        .err()
        .unwrap()
        .to_string();
    assert!(e.contains("cannot start"), "{e}");
    assert!(spawn_node(&[], Role::Segment, &opts(&dir)).is_err());
}

#[test]
fn malformed_line_is_reported_verbatim_and_poisons() {
    let dir = tempfile::tempdir().unwrap();
    let mut node = spawn_node(&refnode("segment", "garbage"), Role::Segment, &opts(&dir)).unwrap();
    let e = node
        .segment(&RasterImage::filled(4, 4, [0; 3]), Default::default())
        .unwrap_err();
    assert!(
        e.to_string().contains("this is not json (request 1)"),
        "{e}"
    );
    assert!(node.is_poisoned());
    assert!(matches!(
        node.segment(&RasterImage::filled(4, 4, [0; 3]), Default::default()),
        Err(Error::NodePoisoned)
    ));
}

#[test]
fn hung_call_times_out_and_poisons() {
    let dir = tempfile::tempdir().unwrap();
    let o = NodeOptions {
        call_timeout: Duration::from_millis(300),
        ..opts(&dir)
    };
    let mut node = spawn_node(&refnode("segment", "hang"), Role::Segment, &o).unwrap();
    let t = Instant::now();
    let e = node
        .segment(&RasterImage::filled(4, 4, [0; 3]), Default::default())
        .unwrap_err();
    assert!(matches!(e, Error::NodeTimeout(_)), "{e}");
    assert!(t.elapsed() < Duration::from_secs(5));
    assert!(node.is_poisoned());
    node.shutdown();
    node.shutdown();
}

#[test]
fn error_response_keeps_handle_usable() {
    let dir = tempfile::tempdir().unwrap();
    let mut node = spawn_node(&refnode("segment", "fail"), Role::Segment, &opts(&dir)).unwrap();
    for _ in 0..2 {
        let e = node
            .segment(&RasterImage::filled(4, 4, [0; 3]), Default::default())
            .unwrap_err();
        assert!(e.to_string().contains("configured to fail"), "{e}");
        assert!(!node.is_poisoned());
    }
}

#[test]
fn stubborn_node_is_killed_within_bound() {
    let dir = tempfile::tempdir().unwrap();
    let o = NodeOptions {
        shutdown_timeout: Duration::from_millis(300),
        ..opts(&dir)
    };
    let mut node = spawn_node(&refnode("detect", "stubborn"), Role::Detect, &o).unwrap();
    let t = Instant::now();
    let status = node.shutdown().expect("status after kill");
    assert!(!status.success());
    assert!(t.elapsed() < Duration::from_secs(3));
}

#[test]
fn scratch_is_removed_unless_kept() {
    let dir = tempfile::tempdir().unwrap();
    let mut node = spawn_node(&refnode("segment", "identity"), Role::Segment, &opts(&dir)).unwrap();
    node.segment(&RasterImage::filled(4, 4, [200; 3]), Default::default())
        .unwrap();
    let scratch = node.scratch_dir().to_path_buf();
    assert!(scratch.starts_with(dir.path()));
    assert!(std::fs::read_dir(&scratch).unwrap().count() >= 2);
    drop(node);
    assert!(!scratch.exists());

    let keep = NodeOptions {
        keep_scratch: true,
        ..opts(&dir)
    };
    let mut node = spawn_node(&refnode("segment", "identity"), Role::Segment, &keep).unwrap();
    node.segment(&RasterImage::filled(4, 4, [200; 3]), Default::default())
        .unwrap();
    let scratch = node.scratch_dir().to_path_buf();
    node.shutdown();
    assert!(scratch.exists());
}

#[test]
fn missing_inputs_are_rejected_before_sending() {
    let dir = tempfile::tempdir().unwrap();
    let mut node = spawn_node(&refnode("segment", "identity"), Role::Segment, &opts(&dir)).unwrap();
    let inputs = BTreeMap::from([("image".to_string(), "/nonexistent.png".to_string())]);
    assert!(node.call(inputs, Default::default()).is_err());
    assert!(!node.is_poisoned());
}

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AblationReport, RunReport, Timings};
use crate::error::{Error, Result};
use crate::manifest::to_canonical_json;
use crate::metrics::PixelScores;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Params(format!(
                "unknown report format {other:?} (csv or json)"
            ))),
        }
    }
}

/// One CSV row: a label and the four headline scores.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub label: String,
    pub scores: PixelScores,
}

/// Reports that flatten to a score table.
pub trait Tabular: Serialize {
    /// Name of the label column.
    fn label_header(&self) -> &'static str;
    fn rows(&self) -> Vec<MetricsRow>;
}

impl Tabular for AblationReport {
    fn label_header(&self) -> &'static str {
        "Condition"
    }

    fn rows(&self) -> Vec<MetricsRow> {
        self.conditions
            .iter()
            .map(|c| MetricsRow {
                label: c.condition.as_str().into(),
                scores: c.aggregate.macro_scores,
            })
            .collect()
    }
}

impl Tabular for RunReport {
    fn label_header(&self) -> &'static str {
        "Average"
    }

    fn rows(&self) -> Vec<MetricsRow> {
        self.aggregate
            .iter()
            .flat_map(|a| {
                [
                    MetricsRow {
                        label: "macro".into(),
                        scores: a.macro_scores,
                    },
                    MetricsRow {
                        label: "micro".into(),
                        scores: a.micro,
                    },
                ]
            })
            .collect()
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Score table with columns IOU, Precision, Recall, Dice after the label.
/// Undefined values are empty cells.
pub fn to_csv(header: &str, rows: &[MetricsRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Params(format!("csv: {e}"));
    w.write_record([header, "IOU", "Precision", "Recall", "Dice"])
        .map_err(csv_err)?;
    for r in rows {
        let s = &r.scores;
        w.write_record([
            r.label.clone(),
            cell(Some(s.iou)),
            cell(s.precision),
            cell(s.recall),
            cell(Some(s.dice)),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Params(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields is utf-8"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// CSV gets the score table; JSON the whole report with sorted keys.
pub fn emit_report<R: Tabular>(
    report: &R,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => to_csv(report.label_header(), &report.rows())?,
        ReportFormat::Json => to_canonical_json(report)?,
    };
    write_text(path.as_ref(), &text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub mean: f64,
    pub median: f64,
}

/// Per-stage wall-clock statistics over successful frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub unit: String,
    pub frames: usize,
    pub stages: BTreeMap<String, StageTiming>,
}

fn stats(mut v: Vec<f64>) -> StageTiming {
    if v.is_empty() {
        return StageTiming {
            mean: 0.0,
            median: 0.0,
        };
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    StageTiming {
        mean: v.iter().sum::<f64>() / n as f64,
        median,
    }
}

impl TimingReport {
    pub fn from_frames(frames: impl IntoIterator<Item = Timings>) -> Self {
        let all: Vec<Timings> = frames.into_iter().collect();
        let pick = |f: fn(&Timings) -> f64| stats(all.iter().map(f).collect());
        let stages = [
            ("detect", pick(|t| t.detect_ms)),
            ("mask", pick(|t| t.mask_ms)),
            ("inpaint", pick(|t| t.inpaint_ms)),
            ("segment", pick(|t| t.segment_ms)),
            ("total", pick(|t| t.total_ms)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        TimingReport {
            unit: "ms".into(),
            frames: all.len(),
            stages,
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &to_canonical_json(self)?)
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rank-sweep reports and their serialized form.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::container::{self, MAGIC_REPORT};
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::probe::Projection;
use crate::task::TaskKind;

pub const REPORT_SCHEMA: u32 = 1;

/// What was probed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub name: String,
    pub kind: TaskKind,
    pub control: bool,
    pub num_labels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<u32>,
}

impl TaskDescriptor {
    pub fn new(name: &str, kind: TaskKind, control: bool, num_labels: usize) -> Self {
        TaskDescriptor {
            name: name.to_string(),
            kind,
            control,
            num_labels,
            model_id: None,
            layer: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub d: usize,
    pub dev_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs: usize,
}

/// Reference accuracy the tolerance is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineRule {
    /// Accuracy of the rank-`D` probe.
    FullRank,
    /// Best accuracy over every rank in the sweep.
    MaxOverSweep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceReport {
    pub task: TaskDescriptor,
    pub repr_width: usize,
    pub schedule: Vec<usize>,
    /// One record per scheduled rank, ascending in `d`.
    pub records: Vec<RankRecord>,
    pub selected_rank: usize,
    pub alpha: f64,
    pub baseline_rule: BaselineRule,
    pub baseline_accuracy: f64,
    /// No scheduled rank met the tolerance; `selected_rank` is then `D`.
    pub saturated: bool,
    pub seed: u64,
    pub restarts: usize,
    pub notes: Vec<String>,
    pub projection: Option<Projection>,
    pub manifest: Option<RunManifest>,
}

/// Smallest recorded rank whose test accuracy is within `alpha` of
/// `baseline`. Records must be sorted by `d`.
pub fn smallest_within_tolerance(records: &[RankRecord], baseline: f64, alpha: f64) -> Option<usize> {
    records
        .iter()
        .find(|r| r.test_accuracy >= baseline - alpha)
        .map(|r| r.d)
}

impl SubspaceReport {
    pub fn record(&self, d: usize) -> Option<&RankRecord> {
        self.records.iter().find(|r| r.d == d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidReport(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("tolerance {} outside (0, 1)", self.alpha));
        }
        if self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad("schedule is not strictly increasing".into());
        }
        if self.records.windows(2).any(|w| w[0].d >= w[1].d) {
            return bad("rank records are not distinct and ascending".into());
        }
        if let Some(r) = self.records.iter().find(|r| !self.schedule.contains(&r.d)) {
            return bad(format!("record for d={} is not in the schedule", r.d));
        }
        let found = smallest_within_tolerance(&self.records, self.baseline_accuracy, self.alpha);
        match (self.saturated, found) {
            (false, Some(d)) if d == self.selected_rank => {}
            (false, Some(d)) => {
                return bad(format!(
                    "selected d*={} but the smallest rank within tolerance is {d}",
                    self.selected_rank
                ))
            }
            (false, None) => {
                return bad(format!(
                    "selected d*={} does not satisfy accuracy >= {} - {}",
                    self.selected_rank, self.baseline_accuracy, self.alpha
                ))
            }
            (true, None) if self.selected_rank == self.repr_width => {}
            (true, _) => return bad("saturation flag inconsistent with records".into()),
        }
        if let Some(p) = &self.projection {
            if p.rank() != self.selected_rank || p.input_width() != self.repr_width {
                return bad(format!(
                    "stored projection is {}x{}, expected {}x{}",
                    p.rank(),
                    p.input_width(),
                    self.selected_rank,
                    self.repr_width
                ));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header = ReportHeader {
            schema_version: REPORT_SCHEMA,
            task: self.task.clone(),
            repr_width: self.repr_width,
            schedule: self.schedule.clone(),
            records: self.records.clone(),
            selected_rank: self.selected_rank,
            alpha: self.alpha,
            baseline_rule: self.baseline_rule,
            baseline_accuracy: self.baseline_accuracy,
            saturated: self.saturated,
            seed: self.seed,
            restarts: self.restarts,
            notes: self.notes.clone(),
            projection_shape: self.projection.as_ref().map(|p| (p.rank(), p.input_width())),
            manifest: self.manifest.clone(),
        };
        let payload: Vec<f32> = self
            .projection
            .as_ref()
            .map(|p| p.matrix().iter().copied().collect())
            .unwrap_or_default();
        container::encode(MAGIC_REPORT, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let framed = container::decode::<ReportHeader>(bytes, MAGIC_REPORT, origin)?;
        let h = framed.header;
        if h.schema_version != REPORT_SCHEMA {
            return Err(Error::SchemaVersion {
                expected: REPORT_SCHEMA,
                found: h.schema_version,
            });
        }
        let projection = match h.projection_shape {
            Some((r, c)) => {
                let values = container::floats(&framed.payload, r * c)?;
                let m = Array2::from_shape_vec((r, c), values).map_err(|e| Error::Shape(e.to_string()))?;
                Some(Projection::new(m)?)
            }
            None => {
                container::floats(&framed.payload, 0)?;
                None
            }
        };
        let report = SubspaceReport {
            task: h.task,
            repr_width: h.repr_width,
            schedule: h.schedule,
            records: h.records,
            selected_rank: h.selected_rank,
            alpha: h.alpha,
            baseline_rule: h.baseline_rule,
            baseline_accuracy: h.baseline_accuracy,
            saturated: h.saturated,
            seed: h.seed,
            restarts: h.restarts,
            notes: h.notes,
            projection,
            manifest: h.manifest,
        };
        report.validate()?;
        Ok(report)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReportHeader {
    schema_version: u32,
    task: TaskDescriptor,
    repr_width: usize,
    schedule: Vec<usize>,
    records: Vec<RankRecord>,
    selected_rank: usize,
    alpha: f64,
    baseline_rule: BaselineRule,
    baseline_accuracy: f64,
    saturated: bool,
    seed: u64,
    restarts: usize,
    notes: Vec<String>,
    projection_shape: Option<(usize, usize)>,
    manifest: Option<RunManifest>,
}

pub fn save_report(report: &SubspaceReport, path: &Path) -> Result<()> {
    let bytes = report.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_report(path: &Path) -> Result<SubspaceReport> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    SubspaceReport::from_bytes(&bytes, path)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn sample_report() -> SubspaceReport {
        // accuracy .93 at d = 5 on a 1024-wide layer
        SubspaceReport {
            task: TaskDescriptor::new("pos", TaskKind::SingleToken, false, 45),
            repr_width: 1024,
            schedule: vec![5],
            records: vec![RankRecord {
                d: 5,
                dev_accuracy: 0.9312,
                test_accuracy: 0.93,
                epochs: 17,
            }],
            selected_rank: 5,
            alpha: 0.05,
            baseline_rule: BaselineRule::MaxOverSweep,
            baseline_accuracy: 0.93,
            saturated: false,
            seed: 0,
            restarts: 1,
            notes: vec![],
            projection: Some(Projection::new(Array2::from_shape_fn((5, 1024), |(i, j)| {
                ((i * 31 + j) as f32).sin() / 3.0
            }))
            .unwrap()),
            manifest: None,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let r = sample_report();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.bin");
        save_report(&r, &path).unwrap();
        let back = load_report(&path).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.records[0].test_accuracy.to_bits(), 0.93f64.to_bits());
    }

    fn rewrite_header(bytes: &[u8], edit: impl Fn(&mut serde_json::Value)) -> Vec<u8> {
        let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let mut header: serde_json::Value = serde_json::from_slice(&bytes[9..9 + len]).unwrap();
        edit(&mut header);
        let json = serde_json::to_vec(&header).unwrap();
        let mut out = bytes[..5].to_vec();
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&bytes[9 + len..]);
        out
    }

    #[test]
    fn hand_edited_selection_rejected() {
        let mut r = sample_report();
        r.schedule = vec![1, 2, 5];
        r.records.insert(
            0,
            RankRecord {
                d: 1,
                dev_accuracy: 0.5,
                test_accuracy: 0.5,
                epochs: 9,
            },
        );
        r.records.insert(
            1,
            RankRecord {
                d: 2,
                dev_accuracy: 0.6,
                test_accuracy: 0.6,
                epochs: 9,
            },
        );
        r.projection = None;
        let bytes = r.to_bytes().unwrap();
        assert!(SubspaceReport::from_bytes(&bytes, Path::new("mem")).is_ok());
        let edited = rewrite_header(&bytes, |h| h["selected_rank"] = 2.into());
        assert!(matches!(
            SubspaceReport::from_bytes(&edited, Path::new("mem")),
            Err(Error::InvalidReport(_))
        ));
        let edited = rewrite_header(&bytes, |h| h["schema_version"] = 7.into());
        assert!(matches!(
            SubspaceReport::from_bytes(&edited, Path::new("mem")),
            Err(Error::SchemaVersion { found: 7, .. })
        ));
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Probe checkpoints: JSON header plus `f32` parameter payload.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::container::{self, MAGIC_CHECKPOINT};
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::probe::model::{Classifier, ClassifierKind, LinearProbe, MlpProbe, ProbeParams};
use crate::probe::train::{TrainConfig, TrainTrace, TrainedProbe};
use crate::report::TaskDescriptor;
use crate::task::TaskKind;

pub const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    pub task_kind: TaskKind,
    pub classifier: ClassifierKind,
    pub has_projection: bool,
    /// `(rows, cols)` of every tensor in payload order.
    pub shapes: Vec<(usize, usize)>,
    pub task: TaskDescriptor,
    pub config: TrainConfig,
    pub trace: TrainTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

pub fn save_checkpoint(
    path: &Path,
    probe: &TrainedProbe,
    task: TaskDescriptor,
    config: &TrainConfig,
    manifest: Option<RunManifest>,
) -> Result<()> {
    let p = &probe.params;
    let header = CheckpointHeader {
        schema_version: CHECKPOINT_SCHEMA,
        task_kind: p.kind,
        classifier: p.classifier.kind(),
        has_projection: p.projection.is_some(),
        shapes: p.tensors().iter().map(|t| t.dim()).collect(),
        task,
        config: config.clone(),
        trace: probe.trace.clone(),
        manifest,
    };
    let payload: Vec<f32> = p.tensors().iter().flat_map(|t| t.iter().copied()).collect();
    container::write(path, MAGIC_CHECKPOINT, &header, &payload)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, TrainedProbe)> {
    let framed = container::read::<CheckpointHeader>(path, MAGIC_CHECKPOINT)?;
    let h = framed.header;
    if h.schema_version != CHECKPOINT_SCHEMA {
        return Err(Error::SchemaVersion {
            expected: CHECKPOINT_SCHEMA,
            found: h.schema_version,
        });
    }
    let expected_tensors = usize::from(h.has_projection) + 2;
    if h.shapes.len() != expected_tensors {
        return Err(Error::MalformedHeader(format!(
            "expected {expected_tensors} tensor shapes, found {}",
            h.shapes.len()
        )));
    }
    let total: usize = h.shapes.iter().map(|(r, c)| r * c).sum();
    let values = container::floats(&framed.payload, total)?;
    container::check_finite(&values)?;
    let mut tensors = Vec::new();
    let mut at = 0;
    for &(r, c) in &h.shapes {
        tensors.push(
            Array2::from_shape_vec((r, c), values[at..at + r * c].to_vec())
                .map_err(|e| Error::Shape(e.to_string()))?,
        );
        at += r * c;
    }
    let mut it = tensors.into_iter();
    let projection = if h.has_projection { it.next() } else { None };
    let (a, b) = (it.next().unwrap(), it.next().unwrap());
    let classifier = match h.classifier {
        ClassifierKind::Mlp => Classifier::Mlp(MlpProbe { w1: a, w2: b }),
        ClassifierKind::Linear => Classifier::Linear(LinearProbe { w: a, b }),
    };
    let probe = TrainedProbe {
        params: ProbeParams {
            kind: h.task_kind,
            projection,
            classifier,
        },
        trace: h.trace.clone(),
    };
    Ok((h, probe))
}

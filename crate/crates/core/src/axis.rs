// SPDX-License-Identifier: MIT OR Apache-2.0

//! Greedy neuron ablation of a trained rank-constrained probe.
//!
//! Zeroing representation component `j` is the same as zeroing column `j`
//! of the projection, so every step masks one more column and re-scores
//! the unchanged probe.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{self, MAGIC_TRACE};
use crate::corpus::Split;
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::probe::{evaluate_examples, ProbeParams, TrainedProbe};
use crate::report::TaskDescriptor;
use crate::repr::ReprMatrix;
use crate::task::TaskDataset;

pub const TRACE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisConfig {
    /// Cap on dev examples scored per candidate.
    pub dev_subsample: usize,
    pub seed: u64,
}

impl Default for AxisConfig {
    fn default() -> Self {
        AxisConfig {
            dev_subsample: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationStep {
    pub axis: usize,
    /// Dev accuracy (on the scoring subsample) that won the selection.
    pub dev_accuracy: f64,
    /// Test accuracy once the axis is permanently zeroed.
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTrace {
    pub schema_version: u32,
    pub task: TaskDescriptor,
    pub rank: usize,
    pub repr_width: usize,
    pub initial_dev_accuracy: f64,
    pub initial_test_accuracy: f64,
    /// Dev examples used for selection, after subsampling.
    pub dev_examples: usize,
    pub config: AxisConfig,
    pub steps: Vec<AblationStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

/// Copy of `params` with the given projection columns zeroed.
pub fn mask_columns(params: &ProbeParams<f32>, axes: &[usize]) -> ProbeParams<f32> {
    let mut out = params.clone();
    if let Some(p) = out.projection.as_mut() {
        for &j in axes {
            p.column_mut(j).fill(0.0);
        }
    }
    out
}

fn dev_sample(task: &TaskDataset, cfg: &AxisConfig) -> Vec<usize> {
    let dev = task.indices(Split::Dev);
    if dev.len() <= cfg.dev_subsample {
        return dev;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picked = sample(&mut rng, dev.len(), cfg.dev_subsample).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| dev[i]).collect()
}

/// Zero one axis per step, each time the one whose removal leaves the
/// highest dev accuracy (lowest index on ties), until all `D` are gone.
pub fn greedy_axis_ablation(
    probe: &TrainedProbe,
    task: &TaskDataset,
    reprs: &ReprMatrix,
    cfg: &AxisConfig,
) -> Result<AblationTrace> {
    let params = &probe.params;
    let Some(projection) = params.projection.as_ref() else {
        return Err(Error::Config("axis ablation needs a rank-constrained probe".into()));
    };
    if probe.trace.best_epoch == 0 {
        return Err(Error::UntrainedProbe);
    }
    if cfg.dev_subsample == 0 {
        return Err(Error::Config("dev subsample must be positive".into()));
    }
    let dim = params.repr_width();
    let rank = projection.nrows();
    let dev = dev_sample(task, cfg);
    let test = task.indices(Split::Test);
    if dev.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset(format!("{}: dev or test split is empty", task.name)));
    }
    let initial_dev_accuracy = evaluate_examples(params, task, reprs, &dev)?;
    let initial_test_accuracy = evaluate_examples(params, task, reprs, &test)?;

    let mut zeroed: Vec<usize> = Vec::with_capacity(dim);
    let mut remaining: Vec<usize> = (0..dim).collect();
    let mut steps = Vec::with_capacity(dim);
    let mut current = params.clone();
    while !remaining.is_empty() {
        let scores = remaining
            .par_iter()
            .map(|&j| evaluate_examples(&mask_columns(&current, &[j]), task, reprs, &dev))
            .collect::<Result<Vec<f64>>>()?;
        let mut best = 0;
        for (k, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = k;
            }
        }
        let axis = remaining.remove(best);
        zeroed.push(axis);
        current = mask_columns(&current, &[axis]);
        steps.push(AblationStep {
            axis,
            dev_accuracy: scores[best],
            test_accuracy: evaluate_examples(&current, task, reprs, &test)?,
        });
    }
    let mut descriptor = TaskDescriptor::new(
        &task.name,
        task.kind,
        task.name.ends_with("-control"),
        task.num_labels(),
    );
    descriptor.model_id = Some(reprs.model_id.clone());
    descriptor.layer = Some(reprs.layer);
    Ok(AblationTrace {
        schema_version: TRACE_SCHEMA,
        task: descriptor,
        rank,
        repr_width: dim,
        initial_dev_accuracy,
        initial_test_accuracy,
        dev_examples: dev.len(),
        config: cfg.clone(),
        steps,
        manifest: None,
    })
}

impl AblationTrace {
    /// Axes zeroed after `k` steps.
    pub fn zeroed(&self, k: usize) -> Vec<usize> {
        self.steps[..k].iter().map(|s| s.axis).collect()
    }

    /// Test accuracy of the original probe with the first `k` recorded
    /// axes zeroed, recomputed from scratch.
    pub fn replay(&self, params: &ProbeParams<f32>, task: &TaskDataset, reprs: &ReprMatrix, k: usize) -> Result<f64> {
        let test = task.indices(Split::Test);
        evaluate_examples(&mask_columns(params, &self.zeroed(k)), task, reprs, &test)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,axis,nonzero_axes,dev_accuracy,test_accuracy\n");
        let _ = writeln!(
            out,
            "0,,{},{},{}",
            self.repr_width, self.initial_dev_accuracy, self.initial_test_accuracy
        );
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                s.axis,
                self.repr_width - i - 1,
                s.dev_accuracy,
                s.test_accuracy
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write(path, MAGIC_TRACE, self, &[])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let framed = container::read::<AblationTrace>(path, MAGIC_TRACE)?;
        container::floats(&framed.payload, 0)?;
        let t = framed.header;
        if t.schema_version != TRACE_SCHEMA {
            return Err(Error::SchemaVersion {
                expected: TRACE_SCHEMA,
                found: t.schema_version,
            });
        }
        let mut seen = vec![false; t.repr_width];
        for s in &t.steps {
            if s.axis >= t.repr_width || std::mem::replace(&mut seen[s.axis], true) {
                return Err(Error::MalformedHeader(format!("axis {} repeated or out of range", s.axis)));
            }
        }
        Ok(t)
    }
}

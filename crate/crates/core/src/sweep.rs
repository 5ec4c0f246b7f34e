// SPDX-License-Identifier: MIT OR Apache-2.0

//! Minimal-rank search: one probe per scheduled rank, then the smallest
//! rank whose test accuracy is within `alpha` of the baseline.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{self, MAGIC_RANK_CACHE};
use crate::corpus::Split;
use crate::error::{Error, Result};
use crate::probe::{evaluate, train_linear, train_mlp, ClassifierKind, Projection, TrainConfig, TrainedProbe};
use crate::report::{smallest_within_tolerance, BaselineRule, RankRecord, SubspaceReport, TaskDescriptor};
use crate::repr::ReprMatrix;
use crate::task::{type_hash, TaskDataset, TaskKind};

/// `1, 2, ..., 32`, then doubling from 64, always ending at `dim`.
pub fn default_schedule(dim: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (1..=dim.min(32)).collect();
    let mut d = 64;
    while d < dim {
        s.push(d);
        d *= 2;
    }
    if s.last() != Some(&dim) {
        s.push(dim);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub schedule: Vec<usize>,
    pub alpha: f64,
    pub baseline_rule: BaselineRule,
    pub classifier: ClassifierKind,
    pub train: TrainConfig,
    pub seed: u64,
    /// Independent seeds per rank; the run with the median test accuracy
    /// is kept.
    pub restarts: usize,
}

impl SweepConfig {
    /// Default settings for representations of width `dim`.
    pub fn for_width(dim: usize) -> Self {
        SweepConfig {
            schedule: default_schedule(dim),
            alpha: 0.05,
            baseline_rule: BaselineRule::MaxOverSweep,
            classifier: ClassifierKind::Mlp,
            train: TrainConfig::default(),
            seed: 0,
            restarts: 1,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::Config("rank schedule is empty".into()));
        }
        if self.schedule[0] == 0 || self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("rank schedule must be positive and strictly increasing".into()));
        }
        if *self.schedule.last().unwrap() > dim {
            return Err(Error::Config(format!(
                "schedule reaches rank {} but representations have width {dim}",
                self.schedule.last().unwrap()
            )));
        }
        if self.baseline_rule == BaselineRule::FullRank && *self.schedule.last().unwrap() != dim {
            return Err(Error::Config(format!("full-rank baseline needs rank {dim} in the schedule")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("tolerance {} outside (0, 1)", self.alpha)));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        self.train.validate()
    }
}

/// Outcome of training at one rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankResult {
    pub record: RankRecord,
    pub projection: Projection,
}

/// Storage for finished ranks so an interrupted sweep can resume.
pub trait RankCache: Sync {
    fn get(&self, d: usize) -> Option<RankResult>;
    fn put(&self, d: usize, result: &RankResult) -> Result<()>;
}

/// One file per rank under a directory, tagged with a fingerprint of the
/// run configuration; entries with another fingerprint are ignored.
pub struct DirCache {
    dir: PathBuf,
    fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    fingerprint: String,
    record: RankRecord,
    shape: (usize, usize),
}

impl DirCache {
    pub fn new(dir: &Path, fingerprint: impl Into<String>) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(DirCache {
            dir: dir.to_path_buf(),
            fingerprint: fingerprint.into(),
        })
    }

    fn path(&self, d: usize) -> PathBuf {
        self.dir.join(format!("rank-{d:05}.bin"))
    }
}

impl RankCache for DirCache {
    fn get(&self, d: usize) -> Option<RankResult> {
        let framed = container::read::<CacheHeader>(&self.path(d), MAGIC_RANK_CACHE).ok()?;
        let h = framed.header;
        if h.fingerprint != self.fingerprint || h.record.d != d || h.shape.0 != d {
            return None;
        }
        let values = container::floats(&framed.payload, h.shape.0 * h.shape.1).ok()?;
        let m = Array2::from_shape_vec(h.shape, values).ok()?;
        Some(RankResult {
            record: h.record,
            projection: Projection::new(m).ok()?,
        })
    }

    fn put(&self, d: usize, result: &RankResult) -> Result<()> {
        let header = CacheHeader {
            fingerprint: self.fingerprint.clone(),
            record: result.record,
            shape: result.projection.matrix().dim(),
        };
        let payload: Vec<f32> = result.projection.matrix().iter().copied().collect();
        // write then rename so a killed run never leaves a torn entry
        let tmp = self.dir.join(format!("rank-{d:05}.tmp"));
        container::write(&tmp, MAGIC_RANK_CACHE, &header, &payload)?;
        let dest = self.path(d);
        std::fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))
    }
}

/// Seed of the `restart`-th run at rank `d`.
pub fn rank_seed(seed: u64, d: usize, restart: usize) -> u64 {
    type_hash(seed, &["rank", &d.to_string(), &restart.to_string()])
}

/// Train one probe of the configured kind at rank `d`.
pub fn train_rank(
    task: &TaskDataset,
    reprs: &ReprMatrix,
    d: usize,
    classifier: ClassifierKind,
    cfg: &TrainConfig,
) -> Result<TrainedProbe> {
    match classifier {
        ClassifierKind::Mlp => train_mlp(d, task, reprs, cfg),
        ClassifierKind::Linear => train_linear(d, task, reprs, cfg),
    }
}

fn run_rank(task: &TaskDataset, reprs: &ReprMatrix, cfg: &SweepConfig, d: usize) -> Result<RankResult> {
    let mut runs = (0..cfg.restarts)
        .map(|r| {
            let train_cfg = cfg.train.with_seed(rank_seed(cfg.seed, d, r));
            let trained = train_rank(task, reprs, d, cfg.classifier, &train_cfg)?;
            let record = RankRecord {
                d,
                dev_accuracy: evaluate(&trained.params, task, reprs, Split::Dev)?,
                test_accuracy: evaluate(&trained.params, task, reprs, Split::Test)?,
                epochs: trained.epochs_run(),
            };
            let matrix = trained.params.projection.expect("rank-constrained probe has a projection");
            Ok(RankResult {
                record,
                projection: Projection::new(matrix)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| a.record.test_accuracy.total_cmp(&b.record.test_accuracy));
    Ok(runs.swap_remove((runs.len() - 1) / 2))
}

/// Train at every scheduled rank and select `d*`.
///
/// Ranks run as independent jobs on the current rayon pool; each job is
/// single-threaded with its own derived seed, so the report does not depend
/// on the worker count.
pub fn run_sweep(
    task: &TaskDataset,
    reprs: &ReprMatrix,
    cfg: &SweepConfig,
    cache: Option<&dyn RankCache>,
) -> Result<SubspaceReport> {
    cfg.validate(reprs.dim())?;
    task.validate()?;
    let results = cfg
        .schedule
        .par_iter()
        .map(|&d| {
            if let Some(hit) = cache.and_then(|c| c.get(d)) {
                return Ok(hit);
            }
            let result = run_rank(task, reprs, cfg, d)?;
            if let Some(c) = cache {
                c.put(d, &result)?;
            }
            Ok(result)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(task, reprs, cfg, results)
}

fn assemble(task: &TaskDataset, reprs: &ReprMatrix, cfg: &SweepConfig, results: Vec<RankResult>) -> Result<SubspaceReport> {
    let dim = reprs.dim();
    let records: Vec<RankRecord> = results.iter().map(|r| r.record).collect();
    let baseline = match cfg.baseline_rule {
        BaselineRule::FullRank => records.last().unwrap().test_accuracy,
        BaselineRule::MaxOverSweep => records.iter().map(|r| r.test_accuracy).fold(f64::MIN, f64::max),
    };
    let found = smallest_within_tolerance(&records, baseline, cfg.alpha);
    let (selected_rank, saturated) = match found {
        Some(d) => (d, false),
        None => (dim, true),
    };
    let projection = results
        .into_iter()
        .find(|r| r.record.d == selected_rank)
        .map(|r| r.projection);

    let mut notes = Vec::new();
    if task.kind == TaskKind::HeadSelection {
        notes.push(format!(
            "head selection trained with {} sampled negative heads per dependent",
            cfg.train.negatives
        ));
    }
    if cfg.restarts > 1 {
        notes.push(format!(
            "each rank keeps the median-test-accuracy run of {} seeds",
            cfg.restarts
        ));
    }
    let control = task.name.ends_with("-control");
    let mut descriptor = TaskDescriptor::new(&task.name, task.kind, control, task.num_labels());
    descriptor.model_id = Some(reprs.model_id.clone());
    descriptor.layer = Some(reprs.layer);
    Ok(SubspaceReport {
        task: descriptor,
        repr_width: dim,
        schedule: cfg.schedule.clone(),
        records,
        selected_rank,
        alpha: cfg.alpha,
        baseline_rule: cfg.baseline_rule,
        baseline_accuracy: baseline,
        saturated,
        seed: cfg.seed,
        restarts: cfg.restarts,
        notes,
        projection,
        manifest: None,
    })
}

/// Curve rows sorted by rank, ending at `d*` (the whole sweep when
/// saturated).
pub fn emit_curve(report: &SubspaceReport) -> Vec<RankRecord> {
    let mut rows = report.records.clone();
    rows.sort_by_key(|r| r.d);
    if !report.saturated {
        rows.retain(|r| r.d <= report.selected_rank);
    }
    rows
}

pub fn curve_csv(rows: &[RankRecord]) -> String {
    let mut out = String::from("d,dev_accuracy,test_accuracy,epochs\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.d, r.dev_accuracy, r.test_accuracy, r.epochs);
    }
    out
}

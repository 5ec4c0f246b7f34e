// SPDX-License-Identifier: MIT OR Apache-2.0

//! Coarse-to-fine subtasks and nested sweeps: each finer task is probed on
//! representations already projected into the coarser task's subspace.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{self, MAGIC_HIERARCHY};
use crate::corpus::Split;
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::probe::{evaluate, ClassifierKind, Projection, TrainConfig};
use crate::report::RankRecord;
use crate::repr::ReprMatrix;
use crate::sweep::train_rank;
use crate::task::{type_hash, Example, TaskDataset, TaskKind};

pub const HIERARCHY_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskSpec {
    pub name: String,
    pub keep_tags: Vec<String>,
    pub collapse_label: String,
}

impl SubtaskSpec {
    pub fn new(name: &str, keep: &[&str]) -> Self {
        SubtaskSpec {
            name: name.to_string(),
            keep_tags: keep.iter().map(|t| t.to_string()).collect(),
            collapse_label: "N/A".into(),
        }
    }

    pub fn noun() -> Self {
        Self::new("pos-noun", &["NNP", "NNPS", "NN", "NNS"])
    }

    pub fn noun_proper() -> Self {
        Self::new("pos-noun-proper", &["NNP", "NNPS"])
    }

    pub fn verb() -> Self {
        Self::new("pos-verb", &["VBP", "VBG", "VBZ", "VB", "VBD", "VBN"])
    }

    pub fn verb_present() -> Self {
        Self::new("pos-verb-present", &["VBP", "VBG", "VBZ"])
    }
}

/// Named chains below full POS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chain {
    Noun,
    Verb,
}

impl Chain {
    pub fn subtasks(self) -> Vec<SubtaskSpec> {
        match self {
            Chain::Noun => vec![SubtaskSpec::noun(), SubtaskSpec::noun_proper()],
            Chain::Verb => vec![SubtaskSpec::verb(), SubtaskSpec::verb_present()],
        }
    }
}

/// Keep the spec's tags and collapse everything else into its collapse
/// label. Kept tags retain the parent's vocabulary order; the collapse
/// label is appended only if some example was collapsed.
pub fn make_subtask(task: &TaskDataset, spec: &SubtaskSpec) -> Result<TaskDataset> {
    if task.kind != TaskKind::SingleToken {
        return Err(Error::InvalidTask(format!(
            "subtasks are defined for single-token tasks, {} is {:?}",
            task.name, task.kind
        )));
    }
    if spec.keep_tags.is_empty() {
        return Err(Error::Config(format!("subtask {} keeps no tags", spec.name)));
    }
    for t in &spec.keep_tags {
        if !task.label_vocab.contains(t) {
            return Err(Error::UnknownTag(format!("{t} (subtask {}, task {})", spec.name, task.name)));
        }
    }
    if spec.keep_tags.contains(&spec.collapse_label) {
        return Err(Error::Config(format!(
            "collapse label {} is also a kept tag",
            spec.collapse_label
        )));
    }
    let kept: Vec<usize> = (0..task.label_vocab.len())
        .filter(|&i| spec.keep_tags.contains(&task.label_vocab[i]))
        .collect();
    let mut remap = vec![None; task.label_vocab.len()];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = Some(new);
    }
    let mut vocab: Vec<String> = kept.iter().map(|&i| task.label_vocab[i].clone()).collect();
    let collapsed = kept.len();
    let examples: Vec<Example> = task
        .examples
        .iter()
        .map(|ex| Example {
            label: remap[ex.label].unwrap_or(collapsed),
            ..*ex
        })
        .collect();
    if examples.iter().any(|ex| ex.label == collapsed) {
        vocab.push(spec.collapse_label.clone());
    }
    let ds = TaskDataset {
        name: spec.name.clone(),
        kind: task.kind,
        examples,
        label_vocab: vocab,
        sentences: task.sentences.clone(),
    };
    ds.validate()?;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    /// Dev accuracy a level must reach.
    pub beta: f64,
    /// Largest rank tried at the root level.
    pub d0: usize,
    pub chain: Vec<SubtaskSpec>,
    pub classifier: ClassifierKind,
    pub train: TrainConfig,
    pub seed: u64,
}

impl HierarchyConfig {
    pub fn new(chain: Vec<SubtaskSpec>) -> Self {
        HierarchyConfig {
            beta: 0.95,
            d0: 10,
            chain,
            classifier: ClassifierKind::Mlp,
            train: TrainConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1]", self.beta)));
        }
        if self.d0 == 0 || self.d0 > dim {
            return Err(Error::Config(format!("d0 = {} must lie in 1..={dim}", self.d0)));
        }
        if self.chain.is_empty() {
            return Err(Error::Config("subtask chain is empty".into()));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum LevelStatus {
    /// Smallest rank reaching the threshold.
    Resolved { d: usize },
    /// No rank reached the threshold; the best attempt is kept for plots.
    Unresolved { best_d: usize, best_accuracy: f64 },
    /// A coarser level was unresolved.
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub task: String,
    pub num_labels: usize,
    /// Ranks `1..=bound` were tried.
    pub bound: usize,
    pub records: Vec<RankRecord>,
    pub status: LevelStatus,
    /// `d_i x d_{i-1}` map learned at this level.
    pub projection: Option<Projection>,
    /// `d_i x D` composition of every projection so far.
    pub composed: Option<Projection>,
}

impl Level {
    pub fn resolved_rank(&self) -> Option<usize> {
        match self.status {
            LevelStatus::Resolved { d } => Some(d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyReport {
    pub repr_width: usize,
    pub beta: f64,
    pub d0: usize,
    pub seed: u64,
    pub levels: Vec<Level>,
    pub notes: Vec<String>,
    pub manifest: Option<RunManifest>,
}

impl HierarchyReport {
    /// Resolved ranks in order, stopping at the first unresolved level.
    pub fn ranks(&self) -> Vec<usize> {
        self.levels.iter().map_while(Level::resolved_rank).collect()
    }
}

fn level_seed(seed: u64, level: usize, d: usize) -> u64 {
    type_hash(seed, &["level", &level.to_string(), "rank", &d.to_string()])
}

/// Sweep `root` over ranks `1..=d0`, then each chain subtask over
/// `1..=d_{i-1}` on inputs projected by the previous level.
pub fn nested_sweep(root: &TaskDataset, reprs: &ReprMatrix, cfg: &HierarchyConfig) -> Result<HierarchyReport> {
    cfg.validate(reprs.dim())?;
    let mut tasks = vec![root.clone()];
    for spec in &cfg.chain {
        tasks.push(make_subtask(root, spec)?);
    }
    let mut levels = Vec::with_capacity(tasks.len());
    let mut inputs = reprs.clone();
    let mut composed: Option<Array2<f32>> = None;
    let mut bound = cfg.d0;
    let mut blocked = false;
    for (i, task) in tasks.iter().enumerate() {
        if blocked {
            levels.push(Level {
                task: task.name.clone(),
                num_labels: task.num_labels(),
                bound: 0,
                records: Vec::new(),
                status: LevelStatus::Skipped,
                projection: None,
                composed: None,
            });
            continue;
        }
        let runs = (1..=bound)
            .into_par_iter()
            .map(|d| {
                let train_cfg = cfg.train.with_seed(level_seed(cfg.seed, i, d));
                let trained = train_rank(task, &inputs, d, cfg.classifier, &train_cfg)?;
                let record = RankRecord {
                    d,
                    dev_accuracy: evaluate(&trained.params, task, &inputs, Split::Dev)?,
                    test_accuracy: evaluate(&trained.params, task, &inputs, Split::Test)?,
                    epochs: trained.epochs_run(),
                };
                Ok((record, trained.params.projection.expect("rank-constrained probe")))
            })
            .collect::<Result<Vec<_>>>()?;
        let records: Vec<RankRecord> = runs.iter().map(|r| r.0).collect();
        let hit = runs.iter().position(|r| r.0.dev_accuracy >= cfg.beta);
        match hit {
            Some(k) => {
                let d = records[k].d;
                let pi = runs[k].1.clone();
                let total = match &composed {
                    Some(prev) => pi.dot(prev),
                    None => pi.clone(),
                };
                inputs = inputs.project(&pi, format!("{}-level{i}", reprs.model_id))?;
                levels.push(Level {
                    task: task.name.clone(),
                    num_labels: task.num_labels(),
                    bound,
                    records,
                    status: LevelStatus::Resolved { d },
                    projection: Some(Projection::new(pi)?),
                    composed: Some(Projection::new(total.clone())?),
                });
                composed = Some(total);
                bound = d;
            }
            None => {
                let best = records
                    .iter()
                    .fold(records[0], |b, r| if r.dev_accuracy > b.dev_accuracy { *r } else { b });
                levels.push(Level {
                    task: task.name.clone(),
                    num_labels: task.num_labels(),
                    bound,
                    records,
                    status: LevelStatus::Unresolved {
                        best_d: best.d,
                        best_accuracy: best.dev_accuracy,
                    },
                    projection: None,
                    composed: None,
                });
                blocked = true;
            }
        }
    }
    Ok(HierarchyReport {
        repr_width: reprs.dim(),
        beta: cfg.beta,
        d0: cfg.d0,
        seed: cfg.seed,
        levels,
        notes: vec!["threshold applied to dev accuracy".into()],
        manifest: None,
    })
}

#[derive(Serialize, Deserialize)]
struct LevelHeader {
    task: String,
    num_labels: usize,
    bound: usize,
    records: Vec<RankRecord>,
    status: LevelStatus,
    projection_shape: Option<(usize, usize)>,
    composed_shape: Option<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct ReportHeader {
    schema_version: u32,
    repr_width: usize,
    beta: f64,
    d0: usize,
    seed: u64,
    levels: Vec<LevelHeader>,
    notes: Vec<String>,
    manifest: Option<RunManifest>,
}

impl HierarchyReport {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let shape = |p: &Option<Projection>, payload: &mut Vec<f32>| {
            p.as_ref().map(|p| {
                payload.extend(p.matrix().iter().copied());
                p.matrix().dim()
            })
        };
        let levels = self
            .levels
            .iter()
            .map(|l| LevelHeader {
                task: l.task.clone(),
                num_labels: l.num_labels,
                bound: l.bound,
                records: l.records.clone(),
                status: l.status,
                projection_shape: shape(&l.projection, &mut payload),
                composed_shape: shape(&l.composed, &mut payload),
            })
            .collect();
        let header = ReportHeader {
            schema_version: HIERARCHY_SCHEMA,
            repr_width: self.repr_width,
            beta: self.beta,
            d0: self.d0,
            seed: self.seed,
            levels,
            notes: self.notes.clone(),
            manifest: self.manifest.clone(),
        };
        container::encode(MAGIC_HIERARCHY, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let framed = container::decode::<ReportHeader>(bytes, MAGIC_HIERARCHY, origin)?;
        let h = framed.header;
        if h.schema_version != HIERARCHY_SCHEMA {
            return Err(Error::SchemaVersion {
                expected: HIERARCHY_SCHEMA,
                found: h.schema_version,
            });
        }
        let total: usize = h
            .levels
            .iter()
            .flat_map(|l| [l.projection_shape, l.composed_shape])
            .flatten()
            .map(|(r, c)| r * c)
            .sum();
        let values = container::floats(&framed.payload, total)?;
        let mut at = 0;
        let mut take = |shape: Option<(usize, usize)>| -> Result<Option<Projection>> {
            match shape {
                None => Ok(None),
                Some((r, c)) => {
                    let m = Array2::from_shape_vec((r, c), values[at..at + r * c].to_vec())
                        .map_err(|e| Error::Shape(e.to_string()))?;
                    at += r * c;
                    Ok(Some(Projection::new(m)?))
                }
            }
        };
        let mut levels = Vec::with_capacity(h.levels.len());
        for l in h.levels {
            let projection = take(l.projection_shape)?;
            let composed = take(l.composed_shape)?;
            levels.push(Level {
                task: l.task,
                num_labels: l.num_labels,
                bound: l.bound,
                records: l.records,
                status: l.status,
                projection,
                composed,
            });
        }
        Ok(HierarchyReport {
            repr_width: h.repr_width,
            beta: h.beta,
            d0: h.d0,
            seed: h.seed,
            levels,
            notes: h.notes,
            manifest: h.manifest,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// One row per level: the selected rank, or the best attempt.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,task,num_labels,status,d,dev_accuracy\n");
        for (i, l) in self.levels.iter().enumerate() {
            let (status, d, acc) = match l.status {
                LevelStatus::Resolved { d } => {
                    let acc = l.records.iter().find(|r| r.d == d).map_or(f64::NAN, |r| r.dev_accuracy);
                    ("resolved", d.to_string(), acc.to_string())
                }
                LevelStatus::Unresolved { best_d, best_accuracy } => {
                    ("unresolved", best_d.to_string(), best_accuracy.to_string())
                }
                LevelStatus::Skipped => ("skipped", String::new(), String::new()),
            };
            let _ = writeln!(out, "{i},{},{},{status},{d},{acc}", l.task, l.num_labels);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::sentence;
    use crate::corpus::{Corpus, Split};
    use crate::task::{derive_task, Which};

    fn pos_task() -> TaskDataset {
        let mut s = sentence(&["a", "b", "c", "d", "e"], &[-1, 0, 0, 1, 1], Split::Train);
        s.pos = ["NN", "VBZ", "NNS", "DT", "NN"].map(String::from).to_vec();
        let corpus = Corpus::new(vec![s]).unwrap();
        derive_task(&corpus, Which::Pos).unwrap()
    }

    #[test]
    fn histogram_preserved_with_collapse() {
        let task = pos_task();
        let sub = make_subtask(&task, &SubtaskSpec::new("noun", &["NN", "NNS"])).unwrap();
        assert_eq!(sub.label_vocab, vec!["NN", "NNS", "N/A"]);
        let count = |t: &TaskDataset, l: &str| {
            t.examples
                .iter()
                .filter(|e| t.label_vocab[e.label] == l)
                .count()
        };
        assert_eq!(count(&sub, "NN"), count(&task, "NN"));
        assert_eq!(count(&sub, "NNS"), count(&task, "NNS"));
        assert_eq!(count(&sub, "N/A"), count(&task, "VBZ") + count(&task, "DT"));
    }

    #[test]
    fn full_keep_is_identity() {
        let task = pos_task();
        let keep: Vec<&str> = task.label_vocab.iter().map(String::as_str).collect();
        let sub = make_subtask(&task, &SubtaskSpec::new("all", &keep)).unwrap();
        assert_eq!(sub.examples, task.examples);
        assert_eq!(sub.label_vocab, task.label_vocab);
    }

    #[test]
    fn unknown_tag_rejected() {
        let err = make_subtask(&pos_task(), &SubtaskSpec::noun()).unwrap_err();
        assert!(matches!(err, Error::UnknownTag(_)));
    }

    #[test]
    fn chain_tag_sets() {
        assert_eq!(SubtaskSpec::noun().keep_tags, vec!["NNP", "NNPS", "NN", "NNS"]);
        assert_eq!(SubtaskSpec::verb_present().keep_tags, vec!["VBP", "VBG", "VBZ"]);
        assert_eq!(Chain::Verb.subtasks().len(), 2);
    }

    #[test]
    fn report_round_trip() {
        let level = |status, p: Option<Projection>| Level {
            task: "t".into(),
            num_labels: 3,
            bound: 4,
            records: vec![RankRecord {
                d: 1,
                dev_accuracy: 0.25,
                test_accuracy: 0.5,
                epochs: 3,
            }],
            status,
            projection: p.clone(),
            composed: p,
        };
        let report = HierarchyReport {
            repr_width: 4,
            beta: 0.95,
            d0: 4,
            seed: 3,
            levels: vec![
                level(
                    LevelStatus::Resolved { d: 1 },
                    Some(Projection::new(Array2::from_elem((1, 4), 0.1f32)).unwrap()),
                ),
                level(
                    LevelStatus::Unresolved {
                        best_d: 1,
                        best_accuracy: 0.25,
                    },
                    None,
                ),
                level(LevelStatus::Skipped, None),
            ],
            notes: vec![],
            manifest: None,
        };
        let bytes = report.to_bytes().unwrap();
        let back = HierarchyReport::from_bytes(&bytes, Path::new("x")).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.ranks(), vec![1]);
        assert_eq!(report.to_csv().lines().count(), 4);
    }
}

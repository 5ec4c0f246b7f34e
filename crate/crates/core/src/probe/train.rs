// SPDX-License-Identifier: MIT OR Apache-2.0

//! Joint training of projection and classifier with Adam and early stopping.

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Split;
use crate::error::{Error, Result};
use crate::probe::adam::Adam;
use crate::probe::model::{output_width, Batch, ClassifierKind, HiddenWidth, ProbeParams, Targets};
use crate::repr::ReprMatrix;
use crate::task::{Inputs, TaskDataset, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Epochs without dev-loss improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Sampled non-head candidates per positive pair in head selection.
    pub negatives: usize,
    pub hidden: HiddenWidth,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            patience: 4,
            max_epochs: 1000,
            batch_size: 128,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            negatives: 5,
            hidden: HiddenWidth::Unprojected,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.learning_rate > 0.0
            && self.patience > 0
            && self.max_epochs > 0
            && self.batch_size > 0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0
            && self.negatives > 0;
        if !positive {
            return Err(Error::Config(format!("training settings must be positive: {self:?}")));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; 0 if never trained.
    pub best_epoch: usize,
    pub best_dev_loss: f64,
}

/// Parameters restored from the best dev-loss epoch, plus the run history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProbe {
    pub params: ProbeParams<f32>,
    pub trace: TrainTrace,
}

impl TrainedProbe {
    pub fn epochs_run(&self) -> usize {
        self.trace.epochs.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Item {
    pub a: usize,
    pub b: usize,
    pub class: usize,
    pub positive: bool,
}

pub(crate) fn check_compatible(task: &TaskDataset, reprs: &ReprMatrix) -> Result<()> {
    if task.required_rows() > reprs.token_count() {
        return Err(Error::Shape(format!(
            "task references {} rows but representations have {}",
            task.required_rows(),
            reprs.token_count()
        )));
    }
    Ok(())
}

fn positives(task: &TaskDataset, indices: &[usize]) -> Vec<Item> {
    indices
        .iter()
        .map(|&i| {
            let ex = &task.examples[i];
            let (a, b) = match ex.inputs {
                Inputs::Token(g) => (g, g),
                Inputs::Pair { head, dep } => (head, dep),
            };
            Item {
                a,
                b,
                class: ex.label,
                positive: true,
            }
        })
        .collect()
}

/// Positive (head, dependent) pairs each followed by `k` sampled
/// non-head candidates from the same sentence.
fn with_negatives(task: &TaskDataset, indices: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<Item> {
    let mut out = Vec::with_capacity(indices.len() * (k + 1));
    for &i in indices {
        let ex = &task.examples[i];
        let Inputs::Pair { head, dep } = ex.inputs else { continue };
        out.push(Item {
            a: head,
            b: dep,
            class: 0,
            positive: true,
        });
        let span = task.sentences[ex.sentence];
        if span.len < 2 {
            continue;
        }
        for _ in 0..k {
            let mut c = span.start + rng.random_range(0..span.len - 1);
            if c >= head {
                c += 1;
            }
            out.push(Item {
                a: c,
                b: dep,
                class: 0,
                positive: false,
            });
        }
    }
    out
}

pub(crate) fn gather(reprs: &ReprMatrix, kind: TaskKind, items: &[Item]) -> Batch<f32> {
    let a: Vec<usize> = items.iter().map(|it| it.a).collect();
    let xa = reprs.data().select(Axis(0), &a);
    match kind {
        TaskKind::SingleToken => Batch::Single(xa),
        _ => {
            let b: Vec<usize> = items.iter().map(|it| it.b).collect();
            Batch::Pair(xa, reprs.data().select(Axis(0), &b))
        }
    }
}

fn step_loss(
    params: &ProbeParams<f32>,
    kind: TaskKind,
    reprs: &ReprMatrix,
    items: &[Item],
) -> Result<f64> {
    let batch = gather(reprs, kind, items);
    let loss = match kind {
        TaskKind::HeadSelection => {
            let flags: Vec<bool> = items.iter().map(|it| it.positive).collect();
            params.loss(&batch, &Targets::Binary(&flags))?
        }
        _ => {
            let labels: Vec<usize> = items.iter().map(|it| it.class).collect();
            params.loss(&batch, &Targets::Classes(&labels))?
        }
    };
    Ok(f64::from(loss))
}

/// Mean loss over `items`, evaluated in chunks.
fn mean_loss(params: &ProbeParams<f32>, kind: TaskKind, reprs: &ReprMatrix, items: &[Item]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in items.chunks(4096) {
        total += step_loss(params, kind, reprs, chunk)? * chunk.len() as f64;
    }
    Ok(total / items.len() as f64)
}

/// Train `params` jointly on the task's train split, stopping once the dev
/// loss has not improved for `cfg.patience` epochs or after
/// `cfg.max_epochs`. Returns the parameters of the best dev-loss epoch.
pub fn train(
    params: ProbeParams<f32>,
    task: &TaskDataset,
    reprs: &ReprMatrix,
    cfg: &TrainConfig,
) -> Result<TrainedProbe> {
    cfg.validate()?;
    check_compatible(task, reprs)?;
    if params.kind != task.kind {
        return Err(Error::Config("probe kind does not match task kind".into()));
    }
    if params.repr_width() != reprs.dim() {
        return Err(Error::Shape(format!(
            "probe expects width {}, representations have {}",
            params.repr_width(),
            reprs.dim()
        )));
    }
    let train_idx = task.indices(Split::Train);
    let dev_idx = task.indices(Split::Dev);
    if train_idx.is_empty() {
        return Err(Error::EmptyDataset(format!("{}: train split is empty", task.name)));
    }
    if dev_idx.is_empty() {
        return Err(Error::EmptyDataset(format!("{}: dev split is empty", task.name)));
    }
    let kind = task.kind;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_7a41);
    let dev_items = if kind == TaskKind::HeadSelection {
        let mut dev_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xde5_de5);
        with_negatives(task, &dev_idx, cfg.negatives, &mut dev_rng)
    } else {
        positives(task, &dev_idx)
    };
    let base_train = positives(task, &train_idx);

    let mut params = params;
    let mut adam = Adam::new(&params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut best = params.clone();
    let mut trace = TrainTrace {
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev_loss: f64::INFINITY,
    };
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut items = if kind == TaskKind::HeadSelection {
            with_negatives(task, &train_idx, cfg.negatives, &mut rng)
        } else {
            base_train.clone()
        };
        items.shuffle(&mut rng);
        let mut train_total = 0.0;
        for chunk in items.chunks(cfg.batch_size) {
            let batch = gather(reprs, kind, chunk);
            let (loss, grads) = match kind {
                TaskKind::HeadSelection => {
                    let flags: Vec<bool> = chunk.iter().map(|it| it.positive).collect();
                    params.loss_and_grad(&batch, &Targets::Binary(&flags))?
                }
                _ => {
                    let labels: Vec<usize> = chunk.iter().map(|it| it.class).collect();
                    params.loss_and_grad(&batch, &Targets::Classes(&labels))?
                }
            };
            train_total += f64::from(loss) * chunk.len() as f64;
            adam.update(&mut params, &grads);
        }
        let dev_loss = mean_loss(&params, kind, reprs, &dev_items)?;
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss: train_total / items.len() as f64,
            dev_loss,
        });
        if dev_loss < trace.best_dev_loss {
            trace.best_dev_loss = dev_loss;
            trace.best_epoch = epoch;
            best = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainedProbe { params: best, trace })
}

/// Initialize and train a rank-`d` projection with an MLP probe.
pub fn train_mlp(rank: usize, task: &TaskDataset, reprs: &ReprMatrix, cfg: &TrainConfig) -> Result<TrainedProbe> {
    let params = ProbeParams::init(
        task.kind,
        ClassifierKind::Mlp,
        Some(rank),
        reprs.dim(),
        output_width(task),
        cfg.hidden,
        cfg.seed,
    )?;
    train(params, task, reprs, cfg)
}

/// Initialize and train a rank-`d` projection with a linear softmax
/// classifier in place of the MLP.
pub fn train_linear(rank: usize, task: &TaskDataset, reprs: &ReprMatrix, cfg: &TrainConfig) -> Result<TrainedProbe> {
    let params = ProbeParams::init(
        task.kind,
        ClassifierKind::Linear,
        Some(rank),
        reprs.dim(),
        output_width(task),
        cfg.hidden,
        cfg.seed,
    )?;
    train(params, task, reprs, cfg)
}

/// Affine softmax classifier on the raw representations, started from
/// all-zero weights. Zero start keeps the weight rows summing to zero.
pub fn train_unprojected_linear(task: &TaskDataset, reprs: &ReprMatrix, cfg: &TrainConfig) -> Result<TrainedProbe> {
    let mut params = ProbeParams::init(
        task.kind,
        ClassifierKind::Linear,
        None,
        reprs.dim(),
        output_width(task),
        cfg.hidden,
        cfg.seed,
    )?;
    for t in params.tensors_mut() {
        t.fill(0.0);
    }
    train(params, task, reprs, cfg)
}

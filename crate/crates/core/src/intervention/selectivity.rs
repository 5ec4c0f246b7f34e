// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::corpus::Split;
use crate::error::Result;
use crate::intervention::nullspace::Ablation;
use crate::probe::{evaluate, ClassifierKind, TrainConfig};
use crate::repr::ReprMatrix;
use crate::sweep::train_rank;
use crate::task::TaskDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectivityConfig {
    /// Rank of the retrained probes; `None` uses the full width.
    pub rank: Option<usize>,
    pub classifier: ClassifierKind,
    pub train: TrainConfig,
}

impl Default for SelectivityConfig {
    fn default() -> Self {
        SelectivityConfig {
            rank: None,
            classifier: ClassifierKind::Mlp,
            train: TrainConfig::default(),
        }
    }
}

/// Test accuracies of freshly trained probes before and after ablation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectivityResult {
    pub a_before: f64,
    pub a_after: f64,
    pub b_before: f64,
    pub b_after: f64,
    /// Test-split majority frequency: the constant-output baseline.
    pub a_majority: f64,
    pub b_majority: f64,
}

impl SelectivityResult {
    pub fn delta_a(&self) -> f64 {
        self.a_after - self.a_before
    }

    pub fn delta_b(&self) -> f64 {
        self.b_after - self.b_before
    }
}

/// Retrain probes for both tasks on raw and on ablated representations.
pub fn selectivity_eval(
    reprs: &ReprMatrix,
    task_a: &TaskDataset,
    task_b: &TaskDataset,
    ablation: &impl Ablation,
    cfg: &SelectivityConfig,
) -> Result<SelectivityResult> {
    let ablated = ablation.apply(reprs)?;
    let rank = cfg.rank.unwrap_or(reprs.dim());
    let score = |task: &TaskDataset, r: &ReprMatrix| -> Result<f64> {
        let trained = train_rank(task, r, rank, cfg.classifier, &cfg.train)?;
        evaluate(&trained.params, task, r, Split::Test)
    };
    Ok(SelectivityResult {
        a_before: score(task_a, reprs)?,
        a_after: score(task_a, &ablated)?,
        b_before: score(task_b, reprs)?,
        b_after: score(task_b, &ablated)?,
        a_majority: task_a.majority_frequency(Split::Test),
        b_majority: task_b.majority_frequency(Split::Test),
    })
}

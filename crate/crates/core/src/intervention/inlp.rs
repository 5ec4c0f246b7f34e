// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::container::{self, MAGIC_PROJECTOR};
use crate::corpus::Split;
use crate::error::{Error, Result};
use crate::intervention::nullspace::{Ablation, ProjectorHeader};
use crate::linalg::{row_space_basis, to_array, to_dmatrix, RANK_CUTOFF};
use crate::manifest::RunManifest;
use crate::probe::{predict, train_unprojected_linear, Classifier, TrainConfig};
use crate::repr::ReprMatrix;
use crate::task::{type_hash, TaskDataset, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlpConfig {
    pub max_iters: usize,
    pub train: TrainConfig,
}

impl Default for InlpConfig {
    fn default() -> Self {
        InlpConfig {
            max_iters: 10,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlpIteration {
    /// 1-based.
    pub iteration: usize,
    pub train_accuracy: f64,
    /// The classifier predicted the majority class for every train example.
    pub majority_only: bool,
    /// Directions added to the removed basis by this iteration.
    pub removed: usize,
    /// Rank of the accumulated projector after this iteration.
    pub projector_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InlpState {
    basis: Array2<f64>,
    pub iterations: Vec<InlpIteration>,
    /// Centered weight matrices of the classifiers whose nullspaces were
    /// intersected, in order.
    pub classifiers: Vec<Array2<f64>>,
    pub converged: bool,
    pub manifest: Option<RunManifest>,
}

impl Ablation for InlpState {
    fn removed_basis(&self) -> &Array2<f64> {
        &self.basis
    }
}

impl InlpState {
    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = ProjectorHeader {
            kind: "inlp".into(),
            width: self.width(),
            source_rank: self.basis.nrows(),
            effective_rank: self.basis.nrows(),
            cutoff: RANK_CUTOFF,
            singular_values: Vec::new(),
            manifest: self.manifest.clone(),
        };
        let payload: Vec<f32> = self.matrix().iter().map(|v| *v as f32).collect();
        container::write(path, MAGIC_PROJECTOR, &header, &payload)
    }
}

/// Extend an orthonormal row basis with the part of `rows` outside it.
fn extend_basis(basis: &Array2<f64>, rows: &Array2<f64>) -> Array2<f64> {
    let residual = if basis.nrows() == 0 {
        rows.clone()
    } else {
        rows - &rows.dot(&basis.t()).dot(basis)
    };
    let (fresh, _) = row_space_basis(&to_dmatrix(&residual), RANK_CUTOFF);
    if fresh.nrows() == 0 {
        return basis.clone();
    }
    // one more pass keeps the union orthonormal to working precision
    let fresh = to_array(&fresh);
    let fresh = if basis.nrows() == 0 {
        fresh
    } else {
        &fresh - &fresh.dot(&basis.t()).dot(basis)
    };
    let (fresh, _) = row_space_basis(&to_dmatrix(&fresh), RANK_CUTOFF);
    concatenate(Axis(0), &[basis.view(), to_array(&fresh).view()]).expect("matching widths")
}

/// Repeatedly train an affine softmax classifier on the projected
/// representations and remove its weight row space, until a classifier
/// predicts the train majority class everywhere or `max_iters` is reached.
pub fn inlp(reprs: &ReprMatrix, task: &TaskDataset, cfg: &InlpConfig) -> Result<InlpState> {
    if task.kind != TaskKind::SingleToken || task.num_labels() < 2 {
        return Err(Error::InvalidTask(format!(
            "{}: INLP needs a single-token task with at least two labels",
            task.name
        )));
    }
    if cfg.max_iters == 0 {
        return Err(Error::Config("max_iters must be positive".into()));
    }
    let dim = reprs.dim();
    let train_idx = task.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::EmptyDataset(format!("{}: train split is empty", task.name)));
    }
    let majority = {
        let mut counts = vec![0usize; task.num_labels()];
        for &i in &train_idx {
            counts[task.examples[i].label] += 1;
        }
        crate::probe::argmax(counts)
    };
    let mut state = InlpState {
        basis: Array2::zeros((0, dim)),
        iterations: Vec::new(),
        classifiers: Vec::new(),
        converged: false,
        manifest: None,
    };
    for iteration in 1..=cfg.max_iters {
        let projected = state.apply(reprs)?;
        let seed = type_hash(cfg.train.seed, &["inlp", &iteration.to_string()]);
        let trained = train_unprojected_linear(task, &projected, &cfg.train.with_seed(seed))?;
        let predictions = predict(&trained.params, task, &projected, &train_idx)?;
        let correct = predictions
            .iter()
            .zip(&train_idx)
            .filter(|(p, &i)| **p == task.examples[i].label)
            .count();
        let train_accuracy = correct as f64 / train_idx.len() as f64;
        let majority_only = predictions.iter().all(|&p| p == majority);
        let Classifier::Linear(linear) = &trained.params.classifier else {
            unreachable!("INLP trains linear classifiers")
        };
        // rows summing to a common vector do not change the argmax
        let mut w = linear.w.mapv(f64::from);
        let mean = w.mean_axis(Axis(0)).expect("at least two classes");
        w -= &mean;
        let before = state.basis.nrows();
        if !majority_only {
            state.basis = extend_basis(&state.basis, &w);
            state.classifiers.push(w);
        }
        let removed = state.basis.nrows() - before;
        state.iterations.push(InlpIteration {
            iteration,
            train_accuracy,
            majority_only,
            removed,
            projector_rank: dim - state.basis.nrows(),
        });
        if majority_only {
            state.converged = true;
            break;
        }
        if removed == 0 {
            // nothing left to remove, yet not majority-only
            break;
        }
    }
    Ok(state)
}

/// Numerical rank of the dense projector, from its singular values.
pub fn projector_rank(state: &impl Ablation) -> usize {
    let m: DMatrix<f64> = to_dmatrix(&state.matrix());
    crate::linalg::numerical_rank(&m, RANK_CUTOFF)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extension_stays_orthonormal() {
        let a = Array2::from_shape_vec((1, 3), vec![1.0, 1.0, 0.0]).unwrap();
        let b = extend_basis(&Array2::zeros((0, 3)), &a);
        let c = extend_basis(&b, &Array2::from_shape_vec((2, 3), vec![1.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap());
        assert_eq!(b.nrows(), 1);
        assert_eq!(c.nrows(), 2);
        let g = c.dot(&c.t());
        assert!((g - Array2::<f64>::eye(2)).iter().all(|v| v.abs() < 1e-12));
        let state = InlpState {
            basis: c,
            iterations: vec![],
            classifiers: vec![],
            converged: false,
            manifest: None,
        };
        assert_eq!(projector_rank(&state), 1);
    }
}

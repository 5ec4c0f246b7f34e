// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rank-constrained probes: a learned `d x D` projection followed by a
//! two-layer MLP or a linear softmax classifier, trained jointly.

mod adam;
pub mod checkpoint;
mod eval;
pub mod gradcheck;
mod model;
mod train;

pub use eval::{evaluate, evaluate_examples, predict};
pub use model::{
    argmax, output_width, softmax_rows, Batch, Classifier, ClassifierKind, HiddenWidth, LinearProbe,
    MlpProbe, ProbeParams, Projection, Targets,
};
pub use train::{
    train, train_linear, train_mlp, train_unprojected_linear, EpochRecord, TrainConfig, TrainTrace,
    TrainedProbe,
};

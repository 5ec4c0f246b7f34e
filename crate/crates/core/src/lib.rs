// SPDX-License-Identifier: MIT OR Apache-2.0

//! # rspb
//!
//! Finds, characterizes and ablates low-dimensional linear subspaces of
//! word-representation matrices that encode labeled features.
//!
//! - [`repr`], [`corpus`], [`task`], [`report`]: file formats and probing
//!   task datasets, including control tasks.
//! - [`probe`]: rank-constrained MLP and linear probes trained jointly with
//!   their projection.
//! - [`sweep`]: minimal-rank search over a rank schedule.
//! - [`hierarchy`]: nested sweeps of coarse-to-fine subtasks.
//! - [`axis`]: greedy neuron ablation of a trained probe.
//! - [`intervention`]: nullspace projectors, INLP, and agreement metrics.
//! - [`synth`]: planted-subspace generators used as ground truth.

pub mod axis;
pub mod container;
pub mod corpus;
mod error;
pub mod hierarchy;
pub mod intervention;
pub mod linalg;
pub mod manifest;
pub mod plot;
pub mod probe;
pub mod repr;
pub mod report;
pub mod sweep;
pub mod synth;
pub mod task;

pub use error::{Error, Result};

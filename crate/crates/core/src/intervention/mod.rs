// SPDX-License-Identifier: MIT OR Apache-2.0

//! Removing discovered subspaces from representations, and measuring what
//! the removal does.
//!
//! Both the minimal-subspace projector and INLP reduce to an orthonormal
//! basis `B` of removed directions, applied as `v - Bᵀ(B v)`.

mod agreement;
mod inlp;
mod nullspace;
mod selectivity;

pub use agreement::{
    agreement_metrics, parse_form_pairs, parse_slot_distributions, parse_word_set, read_form_pairs,
    read_slot_distributions, read_word_set, AgreementMetrics, Condition, ConditionSummary, FormPair,
    ItemIssue, ItemScore, Slot, SlotDistribution,
};
pub use inlp::{inlp, projector_rank, InlpConfig, InlpIteration, InlpState};
pub use nullspace::{nullspace_projector, Ablation, NullspaceProjector};
pub use selectivity::{selectivity_eval, SelectivityConfig, SelectivityResult};

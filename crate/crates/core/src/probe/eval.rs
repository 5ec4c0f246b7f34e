// SPDX-License-Identifier: MIT OR Apache-2.0

//! Held-out accuracy for all three task kinds.

use std::collections::BTreeMap;

use ndarray::{concatenate, Array2, Axis};

use crate::corpus::Split;
use crate::error::{Error, Result};
use crate::probe::model::{argmax, ProbeParams};
use crate::probe::train::check_compatible;
use crate::repr::ReprMatrix;
use crate::task::{Inputs, TaskDataset, TaskKind};

const CHUNK: usize = 4096;

/// Fraction of `split` examples predicted correctly.
pub fn evaluate(params: &ProbeParams<f32>, task: &TaskDataset, reprs: &ReprMatrix, split: Split) -> Result<f64> {
    let idx = task.indices(split);
    if idx.is_empty() {
        return Err(Error::EmptyDataset(format!("{}: {split} split is empty", task.name)));
    }
    evaluate_examples(params, task, reprs, &idx)
}

/// Accuracy over an explicit list of example indices.
pub fn evaluate_examples(
    params: &ProbeParams<f32>,
    task: &TaskDataset,
    reprs: &ReprMatrix,
    examples: &[usize],
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset(format!("{}: no examples to score", task.name)));
    }
    let correct = predict(params, task, reprs, examples)?
        .iter()
        .zip(examples)
        .filter(|(p, &i)| **p == task.examples[i].label)
        .count();
    Ok(correct as f64 / examples.len() as f64)
}

/// Predicted label per example. For head selection the prediction is the
/// in-sentence position of the highest-scoring candidate head; every token
/// of the sentence, the dependent included, is a candidate. Ties resolve
/// to the lowest index throughout.
pub fn predict(
    params: &ProbeParams<f32>,
    task: &TaskDataset,
    reprs: &ReprMatrix,
    examples: &[usize],
) -> Result<Vec<usize>> {
    check_compatible(task, reprs)?;
    if params.repr_width() != reprs.dim() {
        return Err(Error::Shape(format!(
            "probe expects width {}, representations have {}",
            params.repr_width(),
            reprs.dim()
        )));
    }
    if params.kind != task.kind {
        return Err(Error::Config("probe kind does not match task kind".into()));
    }
    let data = reprs.data();
    match task.kind {
        TaskKind::SingleToken | TaskKind::TokenPair => {
            let mut out = Vec::with_capacity(examples.len());
            for chunk in examples.chunks(CHUNK) {
                let (a, b): (Vec<usize>, Vec<usize>) = chunk
                    .iter()
                    .map(|&i| match task.examples[i].inputs {
                        Inputs::Token(g) => (g, g),
                        Inputs::Pair { head, dep } => (head, dep),
                    })
                    .unzip();
                let pa = params.project(data.select(Axis(0), &a).view());
                let p = if task.kind == TaskKind::SingleToken {
                    pa
                } else {
                    let pb = params.project(data.select(Axis(0), &b).view());
                    concatenate(Axis(1), &[pa.view(), pb.view()]).expect("equal rows")
                };
                let logits = params.logits_from_projected(&p);
                out.extend(logits.rows().into_iter().map(|r| argmax(r.iter().copied())));
            }
            Ok(out)
        }
        TaskKind::HeadSelection => {
            let mut by_sentence: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
            for (slot, &i) in examples.iter().enumerate() {
                let ex = &task.examples[i];
                let Inputs::Pair { dep, .. } = ex.inputs else {
                    return Err(Error::InvalidTask("head-selection example without pair".into()));
                };
                by_sentence.entry(ex.sentence).or_default().push((slot, dep));
            }
            let mut out = vec![0; examples.len()];
            for (s, deps) in by_sentence {
                let span = task.sentences[s];
                let rows: Vec<usize> = (span.start..span.start + span.len).collect();
                let projected = params.project(data.select(Axis(0), &rows).view());
                let width = projected.ncols();
                for (slot, dep) in deps {
                    let pd = projected.row(dep - span.start);
                    let mut pairs = Array2::<f32>::zeros((span.len, 2 * width));
                    for (c, mut row) in pairs.rows_mut().into_iter().enumerate() {
                        row.slice_mut(ndarray::s![..width]).assign(&projected.row(c));
                        row.slice_mut(ndarray::s![width..]).assign(&pd);
                    }
                    let scores = params.logits_from_projected(&pairs);
                    out[slot] = argmax(scores.column(0).iter().copied());
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::model::{ClassifierKind, HiddenWidth};
    use crate::task::{Example, SentenceSpan};
    use rand::{Rng, SeedableRng};

    fn head_task(lens: &[usize]) -> TaskDataset {
        let mut sentences = Vec::new();
        let mut examples = Vec::new();
        let mut start = 0;
        for (s, &len) in lens.iter().enumerate() {
            sentences.push(SentenceSpan {
                start,
                len,
                split: Split::Test,
            });
            for t in 1..len {
                let h = (t * 7 + s) % t;
                examples.push(Example {
                    sentence: s,
                    inputs: Inputs::Pair {
                        head: start + h,
                        dep: start + t,
                    },
                    label: h,
                });
            }
            start += len;
        }
        TaskDataset {
            name: "dep".into(),
            kind: TaskKind::HeadSelection,
            examples,
            label_vocab: (0..*lens.iter().max().unwrap()).map(|p| p.to_string()).collect(),
            sentences,
        }
    }

    #[test]
    fn head_selection_matches_brute_force_rescoring() {
        let task = head_task(&[4, 6, 3, 7, 5]);
        task.validate().unwrap();
        let n = task.required_rows();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_simple_fn((n, 6), || rng.random_range(-1.0f32..1.0));
        let reprs = ReprMatrix::new(data, "toy", 0).unwrap();
        let params = ProbeParams::<f32>::init(
            TaskKind::HeadSelection,
            ClassifierKind::Mlp,
            Some(3),
            6,
            1,
            HiddenWidth::Unprojected,
            11,
        )
        .unwrap();
        let idx = task.indices(Split::Test);
        let acc = evaluate(&params, &task, &reprs, Split::Test).unwrap();

        // independent loop: one forward call per (candidate, dependent) pair
        let mut correct = 0;
        for &i in &idx {
            let ex = task.examples[i];
            let Inputs::Pair { dep, .. } = ex.inputs else { panic!() };
            let span = task.sentences[ex.sentence];
            let mut best = (0, f32::NEG_INFINITY);
            for c in 0..span.len {
                let h = reprs.data().row(span.start + c).to_owned().insert_axis(Axis(0));
                let d = reprs.data().row(dep).to_owned().insert_axis(Axis(0));
                let score = params
                    .forward(&crate::probe::model::Batch::Pair(h, d))
                    .unwrap()[[0, 0]];
                if score > best.1 {
                    best = (c, score);
                }
            }
            if best.0 == ex.label {
                correct += 1;
            }
        }
        assert_eq!(acc, correct as f64 / idx.len() as f64);
    }

    #[test]
    fn constant_output_scores_first_label_frequency() {
        let labels = [2usize, 0, 0, 1, 0, 2, 2, 2];
        let sentences = vec![SentenceSpan {
            start: 0,
            len: labels.len(),
            split: Split::Test,
        }];
        let examples = labels
            .iter()
            .enumerate()
            .map(|(g, &l)| Example {
                sentence: 0,
                inputs: Inputs::Token(g),
                label: l,
            })
            .collect();
        let task = TaskDataset {
            name: "pos".into(),
            kind: TaskKind::SingleToken,
            examples,
            label_vocab: vec!["a".into(), "b".into(), "c".into()],
            sentences,
        };
        let reprs = ReprMatrix::new(Array2::from_elem((8, 2), 1.0), "toy", 0).unwrap();
        let mut params = ProbeParams::<f32>::init(
            TaskKind::SingleToken,
            ClassifierKind::Mlp,
            Some(1),
            2,
            3,
            HiddenWidth::Unprojected,
            0,
        )
        .unwrap();
        for t in params.tensors_mut() {
            t.fill(0.0);
        }
        let acc = evaluate(&params, &task, &reprs, Split::Test).unwrap();
        assert_eq!(acc, 3.0 / 8.0);
        assert!(evaluate(&params, &task, &reprs, Split::Dev).is_err());
    }
}

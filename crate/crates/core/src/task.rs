// SPDX-License-Identifier: MIT OR Apache-2.0

//! Probing task datasets derived from a corpus, and their control variants.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};

/// Shape of a task's inputs and outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// One representation in, distribution over labels out.
    SingleToken,
    /// Concatenated (head, dependent) pair in, distribution over labels out.
    TokenPair,
    /// Concatenated (candidate, dependent) pair in, scalar score out.
    HeadSelection,
}

/// The three linguistic tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Pos,
    Dlp,
    Dep,
}

impl fmt::Display for Which {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Which::Pos => "pos",
            Which::Dlp => "dlp",
            Which::Dep => "dep",
        })
    }
}

impl FromStr for Which {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pos" => Ok(Which::Pos),
            "dlp" => Ok(Which::Dlp),
            "dep" => Ok(Which::Dep),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inputs {
    Token(usize),
    Pair { head: usize, dep: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub sentence: usize,
    pub inputs: Inputs,
    /// Index into the dataset's `label_vocab`.
    pub label: usize,
}

/// Global row range and split of one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub start: usize,
    pub len: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub name: String,
    pub kind: TaskKind,
    pub examples: Vec<Example>,
    pub label_vocab: Vec<String>,
    pub sentences: Vec<SentenceSpan>,
}

impl TaskDataset {
    /// Check the dataset's structural invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::InvalidTask(format!("{}: {m}", self.name));
        let mut seen = std::collections::HashSet::new();
        for l in &self.label_vocab {
            if !seen.insert(l) {
                return Err(bad(format!("duplicate label {l:?} in vocabulary")));
            }
        }
        for (i, ex) in self.examples.iter().enumerate() {
            if ex.label >= self.label_vocab.len() {
                return Err(bad(format!("example {i} has label {} outside vocabulary", ex.label)));
            }
            let span = self
                .sentences
                .get(ex.sentence)
                .ok_or_else(|| bad(format!("example {i} references unknown sentence")))?;
            let inside = |g: usize| g >= span.start && g < span.start + span.len;
            match (self.kind, ex.inputs) {
                (TaskKind::SingleToken, Inputs::Token(g)) if inside(g) => {}
                (TaskKind::TokenPair, Inputs::Pair { head, dep }) if inside(head) && inside(dep) => {}
                (TaskKind::HeadSelection, Inputs::Pair { head, dep })
                    if inside(head) && inside(dep) && head - span.start == ex.label => {}
                _ => return Err(bad(format!("example {i} inputs do not fit task kind or sentence"))),
            }
        }
        Ok(())
    }

    pub fn split_of(&self, ex: &Example) -> Split {
        self.sentences[ex.sentence].split
    }

    /// Indices of the examples belonging to `split`.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, ex)| self.split_of(ex) == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn num_labels(&self) -> usize {
        self.label_vocab.len()
    }

    /// Largest row index referenced by any example, plus one.
    pub fn required_rows(&self) -> usize {
        self.sentences
            .iter()
            .map(|s| s.start + s.len)
            .max()
            .unwrap_or(0)
    }

    /// Frequency of the most common label among examples of `split`.
    pub fn majority_frequency(&self, split: Split) -> f64 {
        let idx = self.indices(split);
        if idx.is_empty() {
            return 0.0;
        }
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for &i in &idx {
            *counts.entry(self.examples[i].label).or_default() += 1;
        }
        *counts.values().max().unwrap() as f64 / idx.len() as f64
    }

    /// Frequency of a specific label among examples of `split`.
    pub fn label_frequency(&self, split: Split, label: usize) -> f64 {
        let idx = self.indices(split);
        if idx.is_empty() {
            return 0.0;
        }
        let hits = idx.iter().filter(|&&i| self.examples[i].label == label).count();
        hits as f64 / idx.len() as f64
    }

    /// A single-token task with one externally supplied label per token.
    pub fn from_token_labels(name: &str, corpus: &Corpus, labels: &[String]) -> Result<Self> {
        if labels.len() != corpus.token_count() {
            return Err(Error::Shape(format!(
                "{} labels for {} tokens",
                labels.len(),
                corpus.token_count()
            )));
        }
        let mut vocab = Vocab::default();
        let sentences = spans(corpus);
        let mut examples = Vec::with_capacity(labels.len());
        for (s, span) in sentences.iter().enumerate() {
            for g in span.start..span.start + span.len {
                examples.push(Example {
                    sentence: s,
                    inputs: Inputs::Token(g),
                    label: vocab.id(&labels[g]),
                });
            }
        }
        finish(name, TaskKind::SingleToken, examples, vocab.into_labels(), sentences)
    }
}

#[derive(Default)]
struct Vocab {
    ids: HashMap<String, usize>,
    labels: Vec<String>,
}

impl Vocab {
    fn id(&mut self, label: &str) -> usize {
        if let Some(&i) = self.ids.get(label) {
            return i;
        }
        let i = self.labels.len();
        self.ids.insert(label.to_string(), i);
        self.labels.push(label.to_string());
        i
    }

    fn into_labels(self) -> Vec<String> {
        self.labels
    }
}

/// Reorder vocabulary to sorted label order and remap examples, so the
/// label ids do not depend on corpus order.
fn finish(
    name: &str,
    kind: TaskKind,
    mut examples: Vec<Example>,
    labels: Vec<String>,
    sentences: Vec<SentenceSpan>,
) -> Result<TaskDataset> {
    let sorted: BTreeMap<&String, usize> = labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let mut remap = vec![0; labels.len()];
    for (new, (_, &old)) in sorted.iter().enumerate() {
        remap[old] = new;
    }
    let vocab: Vec<String> = sorted.keys().map(|l| (*l).clone()).collect();
    if kind != TaskKind::HeadSelection {
        for ex in &mut examples {
            ex.label = remap[ex.label];
        }
    }
    let ds = TaskDataset {
        name: name.to_string(),
        kind,
        examples,
        label_vocab: if kind == TaskKind::HeadSelection { labels } else { vocab },
        sentences,
    };
    ds.validate()?;
    Ok(ds)
}

fn spans(corpus: &Corpus) -> Vec<SentenceSpan> {
    corpus
        .sentences()
        .iter()
        .enumerate()
        .map(|(i, s)| SentenceSpan {
            start: corpus.offset(i),
            len: s.len(),
            split: s.split,
        })
        .collect()
}

fn position_vocab(corpus: &Corpus) -> Vec<String> {
    let max_len = corpus.sentences().iter().map(|s| s.len()).max().unwrap_or(0);
    (0..max_len).map(|p| p.to_string()).collect()
}

/// Build the POS, DLP or DEP dataset from a validated corpus.
///
/// ROOT tokens contribute a POS example but no DLP or DEP example.
pub fn derive_task(corpus: &Corpus, which: Which) -> Result<TaskDataset> {
    if corpus.sentences().is_empty() {
        return Err(Error::EmptyDataset("corpus has zero sentences".into()));
    }
    let sentences = spans(corpus);
    let mut vocab = Vocab::default();
    let mut examples = Vec::new();
    for (s, sent) in corpus.sentences().iter().enumerate() {
        let start = corpus.offset(s);
        for t in 0..sent.len() {
            let g = start + t;
            match which {
                Which::Pos => examples.push(Example {
                    sentence: s,
                    inputs: Inputs::Token(g),
                    label: vocab.id(&sent.pos[t]),
                }),
                Which::Dlp => {
                    if let Some(h) = sent.head(t) {
                        examples.push(Example {
                            sentence: s,
                            inputs: Inputs::Pair { head: start + h, dep: g },
                            label: vocab.id(&sent.deprels[t]),
                        });
                    }
                }
                Which::Dep => {
                    if let Some(h) = sent.head(t) {
                        examples.push(Example {
                            sentence: s,
                            inputs: Inputs::Pair { head: start + h, dep: g },
                            label: h,
                        });
                    }
                }
            }
        }
    }
    let (kind, labels) = match which {
        Which::Pos => (TaskKind::SingleToken, vocab.into_labels()),
        Which::Dlp => (TaskKind::TokenPair, vocab.into_labels()),
        Which::Dep => (TaskKind::HeadSelection, position_vocab(corpus)),
    };
    finish(&which.to_string(), kind, examples, labels, sentences)
}

/// Per-type attachment behaviour of the head-selection control task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlBehavior {
    AttachToSelf,
    AttachToFirst,
    AttachToLast,
}

impl ControlBehavior {
    pub const ALL: [ControlBehavior; 3] = [
        ControlBehavior::AttachToSelf,
        ControlBehavior::AttachToFirst,
        ControlBehavior::AttachToLast,
    ];

    pub fn head(self, position: usize, len: usize) -> usize {
        match self {
            ControlBehavior::AttachToSelf => position,
            ControlBehavior::AttachToFirst => 0,
            ControlBehavior::AttachToLast => len - 1,
        }
    }
}

/// Stable seeded hash of a sequence of strings (FNV-1a, splitmix64 finish).
pub fn type_hash(seed: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for part in parts {
        for &b in part.as_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Map a hash uniformly onto `0..m`.
pub fn bucket(hash: u64, m: usize) -> usize {
    ((u128::from(hash) * m as u128) >> 64) as usize
}

/// Control label for a single word type.
pub fn control_tag(seed: u64, word: &str, vocab_size: usize) -> usize {
    bucket(type_hash(seed, &["pos", word]), vocab_size)
}

/// Control label for an ordered pair of word types.
pub fn control_pair_tag(seed: u64, head: &str, dep: &str, vocab_size: usize) -> usize {
    bucket(type_hash(seed, &["dlp", head, dep]), vocab_size)
}

pub fn control_behavior(seed: u64, word: &str) -> ControlBehavior {
    ControlBehavior::ALL[bucket(type_hash(seed, &["dep", word]), 3)]
}

/// Replace each example's label with a seeded function of its word type(s).
///
/// Word types are exact surface strings. The single-token and pair
/// controls draw uniformly from the original label vocabulary; the
/// head-selection control assigns every token a head through its type's
/// [`ControlBehavior`].
pub fn make_control(dataset: &TaskDataset, corpus: &Corpus, seed: u64) -> Result<TaskDataset> {
    dataset.validate()?;
    if dataset.required_rows() > corpus.token_count() {
        return Err(Error::Shape(format!(
            "dataset references {} rows but corpus has {} tokens",
            dataset.required_rows(),
            corpus.token_count()
        )));
    }
    let k = dataset.num_labels();
    let mut out = dataset.clone();
    out.name = format!("{}-control", dataset.name);
    match dataset.kind {
        TaskKind::SingleToken => {
            for ex in &mut out.examples {
                let Inputs::Token(g) = ex.inputs else { unreachable!() };
                ex.label = control_tag(seed, corpus.surface(g), k);
            }
        }
        TaskKind::TokenPair => {
            for ex in &mut out.examples {
                let Inputs::Pair { head, dep } = ex.inputs else { unreachable!() };
                ex.label = control_pair_tag(seed, corpus.surface(head), corpus.surface(dep), k);
            }
        }
        TaskKind::HeadSelection => {
            let mut examples = Vec::with_capacity(corpus.token_count());
            for (s, span) in dataset.sentences.iter().enumerate() {
                for t in 0..span.len {
                    let dep = span.start + t;
                    let h = control_behavior(seed, corpus.surface(dep)).head(t, span.len);
                    examples.push(Example {
                        sentence: s,
                        inputs: Inputs::Pair { head: span.start + h, dep },
                        label: h,
                    });
                }
            }
            out.examples = examples;
        }
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::sentence;
    use crate::corpus::{Sentence, Split};

    fn five_token_corpus() -> Corpus {
        Corpus::new(vec![sentence(&["the", "cat", "sat", "on", "mats"], &[1, 2, -1, 2, 3], Split::Train)])
            .unwrap()
    }

    #[test]
    fn counts_per_task() {
        let c = five_token_corpus();
        assert_eq!(derive_task(&c, Which::Pos).unwrap().examples.len(), 5);
        assert_eq!(derive_task(&c, Which::Dlp).unwrap().examples.len(), 4);
        assert_eq!(derive_task(&c, Which::Dep).unwrap().examples.len(), 4);
    }

    #[test]
    fn dep_pairs_match_head_array() {
        let c = Corpus::new(vec![
            sentence(&["a", "b", "c"], &[-1, 0, 1], Split::Train),
            sentence(&["d", "e", "f", "g"], &[2, 2, -1, 0], Split::Test),
        ])
        .unwrap();
        let ds = derive_task(&c, Which::Dep).unwrap();
        // brute-force re-walk of every head array
        let mut expected = Vec::new();
        for (s, sent) in c.sentences().iter().enumerate() {
            for j in 0..sent.len() {
                if sent.heads[j] >= 0 {
                    let i = sent.heads[j] as usize;
                    expected.push((c.offset(s) + i, c.offset(s) + j, i));
                }
            }
        }
        let got: Vec<_> = ds
            .examples
            .iter()
            .map(|ex| match ex.inputs {
                Inputs::Pair { head, dep } => (head, dep, ex.label),
                _ => panic!(),
            })
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn empty_corpus_is_error() {
        let c = Corpus::new(vec![]).unwrap();
        assert!(matches!(derive_task(&c, Which::Pos), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn vocab_sorted_and_deduplicated() {
        let c = five_token_corpus();
        let ds = derive_task(&c, Which::Pos).unwrap();
        let mut sorted = ds.label_vocab.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, ds.label_vocab);
    }

    fn typed_corpus(words: &[String], split_every: usize) -> Corpus {
        let sentences = words
            .chunks(split_every)
            .enumerate()
            .map(|(i, chunk)| {
                let n = chunk.len();
                Sentence {
                    tokens: chunk.to_vec(),
                    pos: (0..n).map(|t| format!("T{}", t % 5)).collect(),
                    heads: (0..n as i64).map(|t| if t == 0 { -1 } else { t - 1 }).collect(),
                    deprels: (0..n).map(|t| format!("R{}", t % 4)).collect(),
                    split: Split::ALL[i % 3],
                    offset: None,
                }
            })
            .collect();
        Corpus::new(sentences).unwrap()
    }

    #[test]
    fn control_is_function_of_type() {
        let words: Vec<String> = (0..600).map(|i| format!("w{}", i % 37)).collect();
        let c = typed_corpus(&words, 7);
        let pos = derive_task(&c, Which::Pos).unwrap();
        let ctl = make_control(&pos, &c, 3).unwrap();
        let mut by_type: HashMap<&str, usize> = HashMap::new();
        for ex in &ctl.examples {
            let Inputs::Token(g) = ex.inputs else { panic!() };
            let prev = by_type.insert(c.surface(g), ex.label);
            assert!(prev.is_none() || prev == Some(ex.label));
        }
        assert_eq!(ctl, make_control(&pos, &c, 3).unwrap());
    }

    #[test]
    fn control_seeds_differ() {
        let differs = (0..1000).any(|i| {
            let w = format!("type{i}");
            control_tag(0, &w, 45) != control_tag(1, &w, 45)
        });
        assert!(differs);
    }

    #[test]
    fn dep_control_has_three_behaviors() {
        let words: Vec<String> = (0..900).map(|i| format!("w{}", i % 101)).collect();
        let c = typed_corpus(&words, 9);
        let dep = derive_task(&c, Which::Dep).unwrap();
        let ctl = make_control(&dep, &c, 0).unwrap();
        assert_eq!(ctl.examples.len(), c.token_count());
        let behaviors: std::collections::HashSet<_> =
            words.iter().map(|w| control_behavior(0, w)).collect();
        assert_eq!(behaviors.len(), 3);
        assert_eq!(ControlBehavior::ALL.len(), 3);
    }

    #[test]
    fn dlp_control_uses_pair_types() {
        let words: Vec<String> = (0..300).map(|i| format!("w{}", i % 11)).collect();
        let c = typed_corpus(&words, 6);
        let dlp = derive_task(&c, Which::Dlp).unwrap();
        let ctl = make_control(&dlp, &c, 9).unwrap();
        for ex in &ctl.examples {
            let Inputs::Pair { head, dep } = ex.inputs else { panic!() };
            assert_eq!(
                ex.label,
                control_pair_tag(9, c.surface(head), c.surface(dep), dlp.num_labels())
            );
        }
    }

    #[test]
    fn splits_partition_examples() {
        let words: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let c = typed_corpus(&words, 5);
        let ds = derive_task(&c, Which::Dlp).unwrap();
        let total: usize = Split::ALL.iter().map(|&s| ds.indices(s).len()).sum();
        assert_eq!(total, ds.examples.len());
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Subject,
    Verb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    None,
    Nounspace,
    Verbspace,
}

fn id_string<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!("sentence_id must be a string or number, got {other}"))),
    }
}

/// Output distribution at one masked slot under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDistribution {
    #[serde(deserialize_with = "id_string")]
    pub sentence_id: String,
    pub masked_slot: Slot,
    pub condition: Condition,
    pub vocab_entries: Vec<(String, f64)>,
}

/// Agreeing and disagreeing word forms for one slot of one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormPair {
    #[serde(deserialize_with = "id_string")]
    pub sentence_id: String,
    pub masked_slot: Slot,
    pub correct: String,
    pub incorrect: String,
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::CorpusParse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::CorpusParse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    Ok(std::io::BufReader::new(std::fs::File::open(path).map_err(|e| Error::io(path, e))?))
}

/// One JSON record per line.
pub fn parse_slot_distributions(reader: impl BufRead) -> Result<Vec<SlotDistribution>> {
    parse_jsonl(reader)
}

pub fn read_slot_distributions(path: &Path) -> Result<Vec<SlotDistribution>> {
    parse_slot_distributions(open(path)?)
}

/// One JSON record per line.
pub fn parse_form_pairs(reader: impl BufRead) -> Result<Vec<FormPair>> {
    parse_jsonl(reader)
}

pub fn read_form_pairs(path: &Path) -> Result<Vec<FormPair>> {
    parse_form_pairs(open(path)?)
}

/// One token per line; blank lines and `#` comments are skipped.
pub fn parse_word_set(reader: impl BufRead) -> Result<HashSet<String>> {
    let mut set = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::CorpusParse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            set.insert(t.to_string());
        }
    }
    Ok(set)
}

pub fn read_word_set(path: &Path) -> Result<HashSet<String>> {
    parse_word_set(open(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub sentence_id: String,
    pub slot: Slot,
    pub condition: Condition,
    pub p_correct: f64,
    pub p_incorrect: f64,
    /// `log p(correct) - log p(incorrect)`.
    pub log_diff: f64,
    pub prob_diff: f64,
}

/// A record left out of the aggregates, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemIssue {
    pub sentence_id: String,
    pub slot: Slot,
    pub condition: Condition,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub slot: Slot,
    pub condition: Condition,
    /// Items with a usable form pair.
    pub items: usize,
    pub mean_log_diff: f64,
    pub median_log_diff: f64,
    pub mean_prob_diff: f64,
    /// Distributions contributing to the marginals.
    pub distributions: usize,
    pub noun_mass: f64,
    pub verb_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgreementMetrics {
    pub items: Vec<ItemScore>,
    pub issues: Vec<ItemIssue>,
    /// Sorted by slot, then condition.
    pub summaries: Vec<ConditionSummary>,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-item log-probability differences and per-condition marginal mass
/// on the noun and verb sets. Malformed records are reported in `issues`
/// and excluded from every aggregate.
pub fn agreement_metrics(
    distributions: &[SlotDistribution],
    pairs: &[FormPair],
    nouns: &HashSet<String>,
    verbs: &HashSet<String>,
) -> AgreementMetrics {
    let mut pair_of: HashMap<(&str, Slot), &FormPair> = HashMap::new();
    for p in pairs {
        pair_of.insert((p.sentence_id.as_str(), p.masked_slot), p);
    }
    let mut metrics = AgreementMetrics::default();
    #[derive(Default)]
    struct Acc {
        log_diffs: Vec<f64>,
        prob_diffs: Vec<f64>,
        nouns: Vec<f64>,
        verbs: Vec<f64>,
    }
    let mut groups: BTreeMap<(Slot, Condition), Acc> = BTreeMap::new();
    for dist in distributions {
        let issue = |message: String| ItemIssue {
            sentence_id: dist.sentence_id.clone(),
            slot: dist.masked_slot,
            condition: dist.condition,
            message,
        };
        let mut probs: HashMap<&str, f64> = HashMap::new();
        let mut problem = None;
        for (token, p) in &dist.vocab_entries {
            if !p.is_finite() || *p < 0.0 || *p > 1.0 {
                problem = Some(format!("probability {p} for {token:?} outside [0, 1]"));
                break;
            }
            if probs.insert(token.as_str(), *p).is_some() {
                problem = Some(format!("token {token:?} listed twice"));
                break;
            }
        }
        let total: f64 = dist.vocab_entries.iter().map(|e| e.1).sum();
        if problem.is_none() && total > 1.0 + 1e-4 {
            problem = Some(format!("probabilities sum to {total}"));
        }
        if let Some(m) = problem {
            metrics.issues.push(issue(m));
            continue;
        }
        let acc = groups.entry((dist.masked_slot, dist.condition)).or_default();
        let mass = |set: &HashSet<String>| {
            dist.vocab_entries
                .iter()
                .filter(|(t, _)| set.contains(t))
                .map(|e| e.1)
                .sum::<f64>()
        };
        acc.nouns.push(mass(nouns));
        acc.verbs.push(mass(verbs));

        let Some(pair) = pair_of.get(&(dist.sentence_id.as_str(), dist.masked_slot)) else {
            metrics.issues.push(issue("no form pair for this sentence and slot".into()));
            continue;
        };
        let (Some(&pc), Some(&pi)) = (probs.get(pair.correct.as_str()), probs.get(pair.incorrect.as_str())) else {
            let missing: Vec<&str> = [pair.correct.as_str(), pair.incorrect.as_str()]
                .into_iter()
                .filter(|t| !probs.contains_key(t))
                .collect();
            metrics.issues.push(issue(format!("missing vocabulary entries {missing:?}")));
            continue;
        };
        if pc <= 0.0 || pi <= 0.0 {
            metrics.issues.push(issue("zero probability makes the log difference infinite".into()));
            continue;
        }
        let log_diff = pc.ln() - pi.ln();
        acc.log_diffs.push(log_diff);
        acc.prob_diffs.push(pc - pi);
        metrics.items.push(ItemScore {
            sentence_id: dist.sentence_id.clone(),
            slot: dist.masked_slot,
            condition: dist.condition,
            p_correct: pc,
            p_incorrect: pi,
            log_diff,
            prob_diff: pc - pi,
        });
    }
    for ((slot, condition), mut acc) in groups {
        metrics.summaries.push(ConditionSummary {
            slot,
            condition,
            items: acc.log_diffs.len(),
            mean_log_diff: mean(&acc.log_diffs),
            median_log_diff: median(&mut acc.log_diffs),
            mean_prob_diff: mean(&acc.prob_diffs),
            distributions: acc.nouns.len(),
            noun_mass: mean(&acc.nouns),
            verb_mass: mean(&acc.verbs),
        });
    }
    metrics
}

impl AgreementMetrics {
    pub fn summary(&self, slot: Slot, condition: Condition) -> Option<&ConditionSummary> {
        self.summaries.iter().find(|s| s.slot == slot && s.condition == condition)
    }

    /// `(id, log_diff without ablation, log_diff under condition)` for
    /// sentences scored under both.
    pub fn paired(&self, slot: Slot, condition: Condition) -> Vec<(String, f64, f64)> {
        let before: HashMap<&str, f64> = self
            .items
            .iter()
            .filter(|i| i.slot == slot && i.condition == Condition::None)
            .map(|i| (i.sentence_id.as_str(), i.log_diff))
            .collect();
        self.items
            .iter()
            .filter(|i| i.slot == slot && i.condition == condition)
            .filter_map(|i| before.get(i.sentence_id.as_str()).map(|b| (i.sentence_id.clone(), *b, i.log_diff)))
            .collect()
    }

    pub fn items_csv(&self) -> String {
        let mut out = String::from("sentence_id,slot,condition,p_correct,p_incorrect,log_diff,prob_diff\n");
        for i in &self.items {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&i.sentence_id),
                slot_name(i.slot),
                condition_name(i.condition),
                i.p_correct,
                i.p_incorrect,
                i.log_diff,
                i.prob_diff
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "slot,condition,items,mean_log_diff,median_log_diff,mean_prob_diff,distributions,noun_mass,verb_mass\n",
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                slot_name(s.slot),
                condition_name(s.condition),
                s.items,
                s.mean_log_diff,
                s.median_log_diff,
                s.mean_prob_diff,
                s.distributions,
                s.noun_mass,
                s.verb_mass
            );
        }
        out
    }
}

pub fn slot_name(s: Slot) -> &'static str {
    match s {
        Slot::Subject => "subject",
        Slot::Verb => "verb",
    }
}

pub fn condition_name(c: Condition) -> &'static str {
    match c {
        Condition::None => "none",
        Condition::Nounspace => "nounspace",
        Condition::Verbspace => "verbspace",
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(id: &str, slot: Slot, cond: Condition, entries: &[(&str, f64)]) -> SlotDistribution {
        SlotDistribution {
            sentence_id: id.into(),
            masked_slot: slot,
            condition: cond,
            vocab_entries: entries.iter().map(|(t, p)| (t.to_string(), *p)).collect(),
        }
    }

    fn pair(id: &str, slot: Slot, c: &str, i: &str) -> FormPair {
        FormPair {
            sentence_id: id.into(),
            masked_slot: slot,
            correct: c.into(),
            incorrect: i.into(),
        }
    }

    #[test]
    fn uniform_pair_gives_zero() {
        let m = agreement_metrics(
            &[dist("1", Slot::Verb, Condition::None, &[("is", 0.5), ("are", 0.5)])],
            &[pair("1", Slot::Verb, "is", "are")],
            &HashSet::new(),
            &HashSet::new(),
        );
        assert_eq!(m.items[0].log_diff, 0.0);
        assert_eq!(m.summary(Slot::Verb, Condition::None).unwrap().median_log_diff, 0.0);
    }

    #[test]
    fn double_entry_accounting() {
        let nouns: HashSet<String> = ["dog", "dogs"].map(String::from).into();
        let verbs: HashSet<String> = ["runs", "run"].map(String::from).into();
        let mut dists = Vec::new();
        let mut pairs = Vec::new();
        for s in 0..40 {
            let id = s.to_string();
            let a = 0.01 + (s as f64 * 0.37).fract() * 0.4;
            let b = 0.01 + (s as f64 * 0.61).fract() * 0.4;
            for cond in [Condition::None, Condition::Nounspace] {
                let shrink = if cond == Condition::None { 1.0 } else { 0.8 };
                dists.push(dist(
                    &id,
                    Slot::Subject,
                    cond,
                    &[("dog", a * shrink), ("dogs", b), ("runs", 0.05), ("the", 0.1)],
                ));
            }
            pairs.push(pair(&id, Slot::Subject, "dog", "dogs"));
        }
        // one record with a missing form, one duplicate token
        dists.push(dist("x", Slot::Subject, Condition::None, &[("dog", 0.2)]));
        pairs.push(pair("x", Slot::Subject, "dog", "dogs"));
        dists.push(dist("y", Slot::Subject, Condition::None, &[("dog", 0.2), ("dog", 0.1)]));
        let m = agreement_metrics(&dists, &pairs, &nouns, &verbs);
        assert_eq!(m.issues.len(), 2);

        // independent pass over the raw records
        for cond in [Condition::None, Condition::Nounspace] {
            let mut diffs = Vec::new();
            let mut noun = Vec::new();
            let mut verb = Vec::new();
            for d in dists.iter().filter(|d| d.condition == cond && d.sentence_id != "y") {
                let get = |t: &str| d.vocab_entries.iter().find(|e| e.0 == t).map(|e| e.1);
                noun.push(get("dog").unwrap_or(0.0) + get("dogs").unwrap_or(0.0));
                verb.push(get("runs").unwrap_or(0.0) + get("run").unwrap_or(0.0));
                if let (Some(c), Some(i)) = (get("dog"), get("dogs")) {
                    diffs.push(c.ln() - i.ln());
                }
            }
            let s = m.summary(Slot::Subject, cond).unwrap();
            let total: f64 = diffs.iter().sum();
            assert_eq!(s.items, diffs.len());
            assert_eq!(s.mean_log_diff.to_bits(), (total / diffs.len() as f64).to_bits());
            let nm: f64 = noun.iter().sum::<f64>() / noun.len() as f64;
            let vm: f64 = verb.iter().sum::<f64>() / verb.len() as f64;
            assert_eq!(s.noun_mass.to_bits(), nm.to_bits());
            assert_eq!(s.verb_mass.to_bits(), vm.to_bits());
        }
        assert_eq!(m.paired(Slot::Subject, Condition::Nounspace).len(), 40);
    }

    #[test]
    fn parsers_accept_numeric_ids_and_comments() {
        let text = r#"{"sentence_id": 3, "masked_slot": "verb", "condition": "verbspace", "vocab_entries": [["is", 0.25]]}"#;
        let d = parse_slot_distributions(text.as_bytes()).unwrap();
        assert_eq!(d[0].sentence_id, "3");
        assert_eq!(d[0].condition, Condition::Verbspace);
        let words = parse_word_set("# nouns\ndog\n\ncat\n".as_bytes()).unwrap();
        assert_eq!(words.len(), 2);
        assert!(parse_form_pairs("{bad".as_bytes()).is_err());
    }

    #[test]
    fn empty_metrics_give_header_only_csv() {
        let m = AgreementMetrics::default();
        assert_eq!(m.items_csv().lines().count(), 1);
        assert_eq!(m.summary_csv().lines().count(), 1);
    }
}

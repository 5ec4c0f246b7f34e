// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dependency-annotated corpora in a JSON-lines format.
//!
//! Each line is one sentence:
//! `{"tokens":[..],"pos":[..],"heads":[..],"deprels":[..],"split":"train"}`.
//! Heads are 0-based positions within the sentence, `-1` marks ROOT. Token
//! `t` of sentence `s` owns representation row `offset(s) + t`, where
//! offsets accumulate in file order.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    /// Parent position within the sentence, `-1` for ROOT.
    pub heads: Vec<i64>,
    pub deprels: Vec<String>,
    pub split: Split,
    /// Optional explicit global offset of the first token; checked against
    /// the running token count when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Head of token `t`, or `None` for ROOT.
    pub fn head(&self, t: usize) -> Option<usize> {
        usize::try_from(self.heads[t]).ok()
    }

    fn validate(&self, index: usize, running: usize) -> Result<()> {
        let n = self.tokens.len();
        let bad = |m: String| Error::InvalidCorpus(format!("sentence {index}: {m}"));
        if n == 0 {
            return Err(bad("no tokens".into()));
        }
        if self.pos.len() != n || self.heads.len() != n || self.deprels.len() != n {
            return Err(bad(format!(
                "field lengths differ (tokens {n}, pos {}, heads {}, deprels {})",
                self.pos.len(),
                self.heads.len(),
                self.deprels.len()
            )));
        }
        let mut roots = 0;
        for (t, &h) in self.heads.iter().enumerate() {
            if h == -1 {
                roots += 1;
            } else if h < 0 || h as usize >= n {
                return Err(bad(format!("token {t} has head {h} outside 0..{n}")));
            }
        }
        if roots != 1 {
            return Err(bad(format!("expected exactly one ROOT, found {roots}")));
        }
        if let Some(offset) = self.offset {
            if offset != running {
                return Err(bad(format!(
                    "declared offset {offset} but representation indices are contiguous at {running}"
                )));
            }
        }
        Ok(())
    }
}

/// Sentences with global representation offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    sentences: Vec<Sentence>,
    offsets: Vec<usize>,
    token_count: usize,
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(sentences.len());
        let mut running = 0;
        for (i, s) in sentences.iter().enumerate() {
            s.validate(i, running)?;
            offsets.push(running);
            running += s.len();
        }
        Ok(Corpus {
            sentences,
            offsets,
            token_count: running,
        })
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    /// Global representation index of the first token of sentence `s`.
    pub fn offset(&self, s: usize) -> usize {
        self.offsets[s]
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    /// Surface form of the token at global index `g`.
    pub fn surface(&self, g: usize) -> &str {
        let s = self.offsets.partition_point(|&o| o <= g) - 1;
        &self.sentences[s].tokens[g - self.offsets[s]]
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut sentences = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::CorpusParse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let s: Sentence = serde_json::from_str(&line).map_err(|e| Error::CorpusParse {
                line: i + 1,
                message: e.to_string(),
            })?;
            sentences.push(s);
        }
        Corpus::new(sentences)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Corpus::from_reader(BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.sentences {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Check that this corpus pairs with a representation matrix of `n` rows.
    pub fn check_pairing(&self, n: usize) -> Result<()> {
        if self.token_count != n {
            return Err(Error::Shape(format!(
                "corpus has {} tokens but representation file has {n} rows",
                self.token_count
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn sentence(tokens: &[&str], heads: &[i64], split: Split) -> Sentence {
        Sentence {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            pos: tokens.iter().map(|s| format!("P{}", s.len())).collect(),
            heads: heads.to_vec(),
            deprels: heads.iter().map(|h| format!("R{}", h.rem_euclid(3))).collect(),
            split,
            offset: None,
        }
    }

    #[test]
    fn offsets_and_surface() {
        let c = Corpus::new(vec![
            sentence(&["a", "bb"], &[-1, 0], Split::Train),
            sentence(&["c", "d", "e"], &[1, -1, 1], Split::Dev),
        ])
        .unwrap();
        assert_eq!(c.token_count(), 5);
        assert_eq!(c.offset(1), 2);
        assert_eq!(c.surface(3), "d");
        assert!(c.check_pairing(4).is_err());
    }

    #[test]
    fn rejects_bad_trees() {
        assert!(Corpus::new(vec![sentence(&["a", "b"], &[-1, -1], Split::Train)]).is_err());
        assert!(Corpus::new(vec![sentence(&["a", "b"], &[-1, 5], Split::Train)]).is_err());
        let mut s = sentence(&["a"], &[-1], Split::Train);
        s.pos.push("X".into());
        assert!(Corpus::new(vec![s]).is_err());
        let mut s = sentence(&["a"], &[-1], Split::Train);
        s.offset = Some(3);
        assert!(Corpus::new(vec![s]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let c = Corpus::new(vec![
            sentence(&["x", "y"], &[1, -1], Split::Test),
            sentence(&["z"], &[-1], Split::Train),
        ])
        .unwrap();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains(r#""heads":[1,-1]"#));
        assert_eq!(Corpus::from_reader(&buf[..]).unwrap(), c);
    }

    #[test]
    fn parse_error_reports_line() {
        let input = "{\"tokens\":[\"a\"],\"pos\":[\"X\"],\"heads\":[-1],\"deprels\":[\"r\"],\"split\":\"train\"}\nnot json\n";
        assert!(matches!(
            Corpus::from_reader(input.as_bytes()),
            Err(Error::CorpusParse { line: 2, .. })
        ));
    }
}

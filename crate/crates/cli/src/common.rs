// SPDX-License-Identifier: MIT OR Apache-2.0

//! Flags and plumbing shared by every subcommand.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use rspb::corpus::Corpus;
use rspb::manifest::{digest_file, InputDigest, RunManifest};
use rspb::probe::{HiddenWidth, TrainConfig};
use rspb::repr::{load_reprs, ReprMatrix};
use rspb::task::{derive_task, make_control, TaskDataset, Which};
use serde::Serialize;

/// A problem with the invocation itself; exits with status 1.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Global {
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Single worker and no wall-clock in manifests, for byte-identical
    /// reruns.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker threads; RSPB_WORKERS overrides the default.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

impl Global {
    pub fn worker_count(&self) -> Result<usize> {
        if self.deterministic {
            return Ok(1);
        }
        if let Some(n) = self.workers {
            return Ok(n.max(1));
        }
        if let Ok(v) = std::env::var("RSPB_WORKERS") {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| usage(format!("RSPB_WORKERS={v:?} is not a positive integer")))?;
            return Ok(n.max(1));
        }
        Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    /// `name` under the output directory unless already absolute.
    pub fn output(&self, name: &Path) -> PathBuf {
        if name.is_absolute() {
            name.to_path_buf()
        } else {
            self.out_dir.join(name)
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 4)]
    pub patience: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// Sampled negative heads per dependent (dep task).
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    /// MLP hidden width: `unprojected` (input width), `projected` (rank),
    /// or a number.
    #[arg(long, default_value = "unprojected")]
    pub hidden: String,
}

impl TrainArgs {
    pub fn config(&self, seed: u64) -> Result<TrainConfig> {
        let hidden = match self.hidden.as_str() {
            "unprojected" => HiddenWidth::Unprojected,
            "projected" => HiddenWidth::Projected,
            n => HiddenWidth::Fixed(
                n.parse()
                    .map_err(|_| usage(format!("--hidden {n:?}: expected unprojected, projected or a width")))?,
            ),
        };
        let cfg = TrainConfig {
            learning_rate: self.lr,
            patience: self.patience,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            seed,
            negatives: self.negatives,
            hidden,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Representations, corpus and task selection.
#[derive(Args, Debug, Clone, Serialize)]
pub struct DataArgs {
    #[arg(long)]
    pub reps: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// pos, dlp or dep.
    #[arg(long, default_value = "pos")]
    pub task: String,
    /// One label per token, one per line; replaces --task with a
    /// single-token task.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Probe the control variant of the task.
    #[arg(long)]
    pub control: bool,
    #[arg(long, default_value_t = 0)]
    pub control_seed: u64,
}

pub struct Data {
    pub reprs: ReprMatrix,
    pub task: TaskDataset,
    pub inputs: Vec<InputDigest>,
}

impl DataArgs {
    pub fn load(&self) -> Result<Data> {
        let reprs = load_reprs(&self.reps)?;
        let corpus = Corpus::load(&self.corpus)?;
        corpus.check_pairing(reprs.token_count())?;
        let mut inputs = vec![digest_file(&self.reps)?, digest_file(&self.corpus)?];
        let task = match &self.labels {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let labels: Vec<String> = text.lines().map(str::to_string).collect();
                inputs.push(digest_file(path)?);
                let name = path.file_stem().map_or("labels".into(), |s| s.to_string_lossy().into_owned());
                TaskDataset::from_token_labels(&name, &corpus, &labels)?
            }
            None => {
                let which: Which = self.task.parse()?;
                derive_task(&corpus, which)?
            }
        };
        let task = if self.control {
            make_control(&task, &corpus, self.control_seed)?
        } else {
            task
        };
        Ok(Data {
            reprs,
            task,
            inputs,
        })
    }
}

/// Collects what goes into a run manifest.
pub struct Run {
    pub subcommand: &'static str,
    pub out_dir: PathBuf,
    pub started: Instant,
    pub workers: usize,
    pub deterministic: bool,
}

impl Run {
    /// Builds the manifest and writes it to `manifest.json` in the output
    /// directory.
    pub fn manifest(&self, config: &impl Serialize, inputs: Vec<InputDigest>, seed: u64) -> Result<RunManifest> {
        let m = RunManifest {
            subcommand: self.subcommand.to_string(),
            config: serde_json::to_value(config)?,
            inputs,
            seed,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            workers: self.workers,
            wall_clock_secs: (!self.deterministic).then(|| self.started.elapsed().as_secs_f64()),
        };
        write_json(&self.out_dir.join("manifest.json"), &m)?;
        Ok(m)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

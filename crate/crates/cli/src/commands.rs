// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rspb::axis::{greedy_axis_ablation, AblationTrace, AxisConfig};
use rspb::corpus::Corpus;
use rspb::hierarchy::{nested_sweep, Chain, HierarchyConfig, HierarchyReport, SubtaskSpec};
use rspb::intervention::{
    agreement_metrics, inlp as run_inlp, nullspace_projector, read_form_pairs, read_slot_distributions,
    read_word_set, selectivity_eval, Ablation, AgreementMetrics, Condition, InlpConfig, SelectivityConfig, Slot,
};
use rspb::manifest::{digest_file, sha256_hex, RunManifest};
use rspb::plot::{line_chart, scatter_identity, Series, XScale};
use rspb::probe::checkpoint::{load_checkpoint, save_checkpoint};
use rspb::probe::ClassifierKind;
use rspb::report::{load_report, save_report, BaselineRule, SubspaceReport, TaskDescriptor};
use rspb::repr::load_reprs;
use rspb::sweep::{curve_csv, emit_curve, default_schedule, run_sweep, train_rank, DirCache, RankCache, SweepConfig};
use rspb::synth::{generate, verify_report, Encoding, GroundTruth, NestedSpec, PairSpec, PlantSpec};
use rspb::task::{derive_task, TaskDataset, Which};
use serde::Serialize;

use crate::common::{usage, write_json, write_text, DataArgs, Global, Run, TrainArgs};

fn classifier(linear: bool) -> ClassifierKind {
    if linear {
        ClassifierKind::Linear
    } else {
        ClassifierKind::Mlp
    }
}

fn descriptor(task: &TaskDataset, model_id: &str, layer: u32) -> TaskDescriptor {
    let mut d = TaskDescriptor::new(&task.name, task.kind, task.name.ends_with("-control"), task.num_labels());
    d.model_id = Some(model_id.to_string());
    d.layer = Some(layer);
    d
}

// ---------------------------------------------------------------- synth

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    /// Comma-separated `key=value` pairs: d, k, D, n, noise,
    /// encoding=linear|xor, support=i:j:k, nested=d_fine:k_fine,
    /// pair=d_b:k_b, types, zipf, type-share, offset, len=lo:hi.
    #[arg(long, default_value = "d=3")]
    pub plant: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn pair_of(key: &str, v: &str) -> Result<(usize, usize)> {
    let (a, b) = v
        .split_once(':')
        .ok_or_else(|| usage(format!("{key}={v}: expected two numbers separated by ':'")))?;
    Ok((num(key, a)?, num(key, b)?))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| usage(format!("{key}={v}: not a valid number")))
}

pub fn parse_plant(text: &str, seed: u64) -> Result<PlantSpec> {
    let mut spec = PlantSpec {
        seed,
        ..PlantSpec::default()
    };
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, v) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("plant item {item:?} is not key=value")))?;
        match key {
            "d" | "d_true" => spec.d_true = num(key, v)?,
            "k" => spec.k = num(key, v)?,
            "D" | "dim" => spec.dim = num(key, v)?,
            "n" => spec.n = num(key, v)?,
            "noise" | "sigma" => spec.noise = num(key, v)?,
            "encoding" => {
                spec.encoding = match v {
                    "linear" => Encoding::Linear,
                    "xor" | "nonlinear-xor" => Encoding::NonlinearXor,
                    _ => return Err(usage(format!("encoding={v}: expected linear or xor"))),
                }
            }
            "support" => {
                spec.axis_support = Some(v.split(':').map(|s| num(key, s)).collect::<Result<_>>()?);
            }
            "nested" => {
                let (d_fine, k_fine) = pair_of(key, v)?;
                spec.nested = Some(NestedSpec { d_fine, k_fine });
            }
            "pair" => {
                let (d_b, k_b) = pair_of(key, v)?;
                spec.orthogonal_pair = Some(PairSpec { d_b, k_b });
            }
            "types" => spec.type_vocab_size = num(key, v)?,
            "zipf" => spec.zipf_exponent = num(key, v)?,
            "type-share" | "type_share" => spec.type_share = num(key, v)?,
            "offset" => spec.majority_offset = num(key, v)?,
            "len" => spec.sentence_len = pair_of(key, v)?,
            _ => return Err(usage(format!("unknown plant key {key:?}"))),
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn synth(a: &SynthArgs, g: &Global, run: &Run) -> Result<()> {
    let spec = parse_plant(&a.plant, a.seed)?;
    let out = generate(&spec)?;
    let reps = g.output(Path::new("reprs.bin"));
    let corpus = g.output(Path::new("corpus.jsonl"));
    let truth = g.output(Path::new("truth.json"));
    out.reprs.save(&reps)?;
    out.corpus.save(&corpus)?;
    out.truth.save(&truth)?;
    if let Some(labels) = &out.truth.labels_b {
        write_text(&g.output(Path::new("labels_b.txt")), &(labels.join("\n") + "\n"))?;
    }
    run.manifest(&spec, Vec::new(), spec.seed)?;
    println!(
        "planted d_true={} in D={} over {} tokens ({} sentences) -> {}",
        spec.d_true,
        spec.dim,
        spec.n,
        out.corpus.sentences().len(),
        g.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- sweep

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// max (best accuracy over the sweep) or full (rank-D accuracy).
    #[arg(long, default_value = "max")]
    pub baseline: String,
    /// Linear softmax classifier instead of the MLP.
    #[arg(long)]
    pub linear: bool,
    /// Seeds per rank; the median-accuracy run is kept.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Comma-separated ranks replacing the default schedule.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long, default_value = "report.bin")]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Do not reuse or store per-rank results.
    #[arg(long)]
    pub no_cache: bool,
}

fn parse_baseline(s: &str) -> Result<BaselineRule> {
    match s {
        "max" | "max-over-sweep" => Ok(BaselineRule::MaxOverSweep),
        "full" | "full-rank" => Ok(BaselineRule::FullRank),
        _ => Err(usage(format!("--baseline {s:?}: expected max or full"))),
    }
}

fn parse_ranks(s: &str) -> Result<Vec<usize>> {
    s.split(',').map(|v| num("schedule", v)).collect()
}

fn curve_svg(report: &SubspaceReport) -> String {
    let series = Series {
        label: format!("{} (d*={})", report.task.name, report.selected_rank),
        points: emit_curve(report)
            .iter()
            .map(|r| (r.d as f64, r.test_accuracy))
            .collect(),
    };
    line_chart(
        "Accuracy by projection rank",
        "rank d",
        "test accuracy",
        &[series],
        XScale::Log2,
    )
}

pub fn sweep(a: &SweepArgs, g: &Global, run: &Run) -> Result<()> {
    let data = a.data.load()?;
    let dim = data.reprs.dim();
    let cfg = SweepConfig {
        schedule: match &a.schedule {
            Some(s) => parse_ranks(s)?,
            None => default_schedule(dim),
        },
        alpha: a.alpha,
        baseline_rule: parse_baseline(&a.baseline)?,
        classifier: classifier(a.linear),
        train: a.train.config(a.seed)?,
        seed: a.seed,
        restarts: a.restarts,
    };
    cfg.validate(dim)?;
    let fingerprint = sha256_hex(
        serde_json::to_string(&(&cfg, &data.inputs, &data.task.name))?.as_bytes(),
    );
    let cache = if a.no_cache {
        None
    } else {
        Some(DirCache::new(&g.output(Path::new(".rank-cache")).join(&fingerprint[..16]), &fingerprint)?)
    };
    let mut report = run_sweep(
        &data.task,
        &data.reprs,
        &cfg,
        cache.as_ref().map(|c| c as &dyn RankCache),
    )?;
    report.manifest = Some(run.manifest(&cfg, data.inputs.clone(), a.seed)?);
    save_report(&report, &g.output(&a.out))?;
    let rows = emit_curve(&report);
    if let Some(p) = &a.csv {
        write_text(&g.output(p), &curve_csv(&rows))?;
    }
    if let Some(p) = &a.svg {
        write_text(&g.output(p), &curve_svg(&report))?;
    }
    let at = report.record(report.selected_rank).map_or(f64::NAN, |r| r.test_accuracy);
    println!(
        "{}: d*={}{} accuracy={at:.4} baseline={:.4}",
        report.task.name,
        report.selected_rank,
        if report.saturated { " (saturated)" } else { "" },
        report.baseline_accuracy
    );
    Ok(())
}

// ---------------------------------------------------------------- hierarchy

#[derive(Args, Debug, Serialize)]
pub struct HierarchyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// noun or verb.
    #[arg(long, default_value = "noun")]
    pub chain: String,
    /// Custom level `name=TAG,TAG,...`; repeat for deeper levels.
    /// Replaces --chain.
    #[arg(long = "subtask")]
    pub subtasks: Vec<String>,
    #[arg(long, default_value_t = 0.95)]
    pub beta: f64,
    #[arg(long, default_value_t = 10)]
    pub d0: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub linear: bool,
    #[arg(long, default_value = "hier.bin")]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_subtask(s: &str) -> Result<SubtaskSpec> {
    let (name, tags) = s
        .split_once('=')
        .ok_or_else(|| usage(format!("--subtask {s:?}: expected name=TAG,TAG")))?;
    let tags: Vec<&str> = tags.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    Ok(SubtaskSpec::new(name, &tags))
}

pub fn hierarchy(a: &HierarchyArgs, g: &Global, run: &Run) -> Result<()> {
    let data = a.data.load()?;
    let chain = if a.subtasks.is_empty() {
        match a.chain.as_str() {
            "noun" => Chain::Noun.subtasks(),
            "verb" => Chain::Verb.subtasks(),
            c => return Err(usage(format!("--chain {c:?}: expected noun or verb"))),
        }
    } else {
        a.subtasks.iter().map(|s| parse_subtask(s)).collect::<Result<_>>()?
    };
    let cfg = HierarchyConfig {
        beta: a.beta,
        d0: a.d0,
        chain,
        classifier: classifier(a.linear),
        train: a.train.config(a.seed)?,
        seed: a.seed,
    };
    let mut report = nested_sweep(&data.task, &data.reprs, &cfg)?;
    report.manifest = Some(run.manifest(&cfg, data.inputs.clone(), a.seed)?);
    report.save(&g.output(&a.out))?;
    if let Some(p) = &a.csv {
        write_text(&g.output(p), &report.to_csv())?;
    }
    print!("{}", report.to_csv());
    Ok(())
}

// ---------------------------------------------------------------- axis

#[derive(Args, Debug, Serialize)]
pub struct AxisArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 10)]
    pub rank: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20_000)]
    pub dev_subsample: usize,
    /// Ablate a stored probe instead of training one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Also store the trained probe.
    #[arg(long)]
    pub save_probe: Option<PathBuf>,
    #[arg(long, default_value = "trace.bin")]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

fn trace_svg(trace: &AblationTrace) -> String {
    let mut points = vec![(trace.repr_width as f64, trace.initial_test_accuracy)];
    points.extend(
        trace
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| ((trace.repr_width - i - 1) as f64, s.test_accuracy)),
    );
    line_chart(
        "Accuracy by number of nonzero axes",
        "nonzero axes",
        "test accuracy",
        &[Series {
            label: trace.task.name.clone(),
            points,
        }],
        XScale::Linear,
    )
}

pub fn axis(a: &AxisArgs, g: &Global, run: &Run) -> Result<()> {
    let data = a.data.load()?;
    let mut inputs = data.inputs.clone();
    let train_cfg = a.train.config(a.seed)?;
    let probe = match &a.checkpoint {
        Some(path) => {
            inputs.push(digest_file(path)?);
            load_checkpoint(path)?.1
        }
        None => train_rank(&data.task, &data.reprs, a.rank, ClassifierKind::Mlp, &train_cfg)?,
    };
    let cfg = AxisConfig {
        dev_subsample: a.dev_subsample,
        seed: a.seed,
    };
    let manifest = run.manifest(&(a, &cfg), inputs, a.seed)?;
    if let Some(p) = &a.save_probe {
        save_checkpoint(
            &g.output(p),
            &probe,
            descriptor(&data.task, &data.reprs.model_id, data.reprs.layer),
            &train_cfg,
            Some(manifest.clone()),
        )?;
    }
    let mut trace = greedy_axis_ablation(&probe, &data.task, &data.reprs, &cfg)?;
    trace.manifest = Some(manifest);
    trace.save(&g.output(&a.out))?;
    if let Some(p) = &a.csv {
        write_text(&g.output(p), &trace.to_csv())?;
    }
    if let Some(p) = &a.svg {
        write_text(&g.output(p), &trace_svg(&trace))?;
    }
    println!(
        "initial test accuracy {:.4}; final {:.4}",
        trace.initial_test_accuracy,
        trace.steps.last().map_or(f64::NAN, |s| s.test_accuracy)
    );
    Ok(())
}

// ---------------------------------------------------------------- ablate

#[derive(Args, Debug, Serialize)]
pub struct AblateArgs {
    /// Sweep report whose projection defines the removed subspace.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value = "projector.bin")]
    pub out: PathBuf,
    /// Representations to project.
    #[arg(long)]
    pub reps: Option<PathBuf>,
    /// Where to write the projected representations.
    #[arg(long, requires = "reps")]
    pub apply_out: Option<PathBuf>,
}

pub fn ablate(a: &AblateArgs, g: &Global, run: &Run) -> Result<()> {
    let report = load_report(&a.report)?;
    let projection = report
        .projection
        .as_ref()
        .ok_or_else(|| usage(format!("{} stores no projection", a.report.display())))?;
    let mut projector = nullspace_projector(projection);
    let mut inputs = vec![digest_file(&a.report)?];
    if let Some(r) = &a.reps {
        inputs.push(digest_file(r)?);
    }
    projector.manifest = Some(run.manifest(a, inputs, report.seed)?);
    projector.save(&g.output(&a.out))?;
    if let (Some(reps), Some(out)) = (&a.reps, &a.apply_out) {
        projector.apply(&load_reprs(reps)?)?.save(&g.output(out))?;
    }
    if projector.is_rank_deficient() {
        eprintln!(
            "warning: projection has numerical rank {} < {} rows",
            projector.effective_rank, projector.source_rank
        );
    }
    println!(
        "removed {} of {} dimensions",
        projector.effective_rank,
        projector.width()
    );
    Ok(())
}

// ---------------------------------------------------------------- inlp

#[derive(Args, Debug, Serialize)]
pub struct InlpArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 10)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "inlp.bin")]
    pub out: PathBuf,
    #[arg(long)]
    pub apply_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct InlpSummary<'a> {
    converged: bool,
    iterations: &'a [rspb::intervention::InlpIteration],
    projector_rank: usize,
    manifest: &'a RunManifest,
}

pub fn inlp(a: &InlpArgs, g: &Global, run: &Run) -> Result<()> {
    let data = a.data.load()?;
    let cfg = InlpConfig {
        max_iters: a.max_iters,
        train: a.train.config(a.seed)?,
    };
    let mut state = run_inlp(&data.reprs, &data.task, &cfg)?;
    let manifest = run.manifest(&cfg, data.inputs.clone(), a.seed)?;
    state.manifest = Some(manifest.clone());
    state.save(&g.output(&a.out))?;
    write_json(
        &g.output(&a.out.with_extension("json")),
        &InlpSummary {
            converged: state.converged,
            iterations: &state.iterations,
            projector_rank: state.kept_rank(),
            manifest: &manifest,
        },
    )?;
    if let Some(p) = &a.apply_out {
        state.apply(&data.reprs)?.save(&g.output(p))?;
    }
    println!(
        "{} after {} iterations; projector rank {}",
        if state.converged { "converged" } else { "not converged" },
        state.iteration_count(),
        state.kept_rank()
    );
    Ok(())
}

// ---------------------------------------------------------------- selectivity

#[derive(Args, Debug, Serialize)]
pub struct SelectivityArgs {
    #[arg(long)]
    pub reps: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// pos, dlp, dep, or a file with one label per token.
    #[arg(long)]
    pub task_a: String,
    #[arg(long)]
    pub task_b: String,
    /// Sweep report for task A; its projection is removed.
    #[arg(long)]
    pub report: PathBuf,
    /// Rank of the retrained probes (default: full width).
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub linear: bool,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "selectivity.json")]
    pub out: PathBuf,
}

fn task_from(spec: &str, corpus: &Corpus) -> Result<TaskDataset> {
    match spec.parse::<Which>() {
        Ok(w) => Ok(derive_task(corpus, w)?),
        Err(_) => {
            let text = std::fs::read_to_string(spec).with_context(|| format!("reading labels {spec}"))?;
            let labels: Vec<String> = text.lines().map(str::to_string).collect();
            let name = Path::new(spec)
                .file_stem()
                .map_or("labels".into(), |s| s.to_string_lossy().into_owned());
            Ok(TaskDataset::from_token_labels(&name, corpus, &labels)?)
        }
    }
}

#[derive(Serialize)]
struct SelectivityOut {
    task_a: String,
    task_b: String,
    removed_dimensions: usize,
    result: rspb::intervention::SelectivityResult,
    delta_a: f64,
    delta_b: f64,
    manifest: RunManifest,
}

pub fn selectivity(a: &SelectivityArgs, g: &Global, run: &Run) -> Result<()> {
    let reprs = load_reprs(&a.reps)?;
    let corpus = Corpus::load(&a.corpus)?;
    corpus.check_pairing(reprs.token_count())?;
    let task_a = task_from(&a.task_a, &corpus)?;
    let task_b = task_from(&a.task_b, &corpus)?;
    let report = load_report(&a.report)?;
    let projection = report
        .projection
        .as_ref()
        .ok_or_else(|| usage(format!("{} stores no projection", a.report.display())))?;
    let projector = nullspace_projector(projection);
    let cfg = SelectivityConfig {
        rank: a.rank,
        classifier: classifier(a.linear),
        train: a.train.config(a.seed)?,
    };
    let result = selectivity_eval(&reprs, &task_a, &task_b, &projector, &cfg)?;
    let mut inputs = vec![digest_file(&a.reps)?, digest_file(&a.corpus)?, digest_file(&a.report)?];
    for t in [&a.task_a, &a.task_b] {
        if t.parse::<Which>().is_err() {
            inputs.push(digest_file(Path::new(t))?);
        }
    }
    let out = SelectivityOut {
        task_a: task_a.name.clone(),
        task_b: task_b.name.clone(),
        removed_dimensions: projector.effective_rank,
        result,
        delta_a: result.delta_a(),
        delta_b: result.delta_b(),
        manifest: run.manifest(&cfg, inputs, a.seed)?,
    };
    write_json(&g.output(&a.out), &out)?;
    println!(
        "{}: {:.4} -> {:.4}; {}: {:.4} -> {:.4}",
        out.task_a, result.a_before, result.a_after, out.task_b, result.b_before, result.b_after
    );
    Ok(())
}

// ---------------------------------------------------------------- agreement

#[derive(Args, Debug, Serialize)]
pub struct AgreementArgs {
    /// Slot-distribution records, one JSON object per line.
    #[arg(long)]
    pub slots: PathBuf,
    /// Form pairs, one JSON object per line.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub nouns: PathBuf,
    #[arg(long)]
    pub verbs: PathBuf,
    #[arg(long, default_value = "agreement.json")]
    pub out: PathBuf,
}

#[derive(Serialize, serde::Deserialize)]
struct MetricsFile {
    metrics: AgreementMetrics,
    manifest: Option<RunManifest>,
}

fn scatter_svg(metrics: &AgreementMetrics) -> String {
    let mut series = Vec::new();
    for cond in [Condition::Nounspace, Condition::Verbspace] {
        for slot in [Slot::Subject, Slot::Verb] {
            let points: Vec<(f64, f64)> = metrics.paired(slot, cond).iter().map(|p| (p.1, p.2)).collect();
            if !points.is_empty() {
                series.push(Series {
                    label: format!("{slot:?} slot, {cond:?} ablated").to_lowercase(),
                    points,
                });
            }
        }
    }
    scatter_identity(
        "Log-probability difference before and after ablation",
        "before",
        "after",
        &series,
    )
}

pub fn agreement(a: &AgreementArgs, g: &Global, run: &Run) -> Result<()> {
    let dists = read_slot_distributions(&a.slots)?;
    let pairs = read_form_pairs(&a.pairs)?;
    let nouns = read_word_set(&a.nouns)?;
    let verbs = read_word_set(&a.verbs)?;
    let metrics = agreement_metrics(&dists, &pairs, &nouns, &verbs);
    let inputs = [&a.slots, &a.pairs, &a.nouns, &a.verbs]
        .into_iter()
        .map(|p| digest_file(p))
        .collect::<rspb::Result<Vec<_>>>()?;
    let manifest = run.manifest(a, inputs, 0)?;
    let out = g.output(&a.out);
    write_text(&out.with_extension("items.csv"), &metrics.items_csv())?;
    write_text(&out.with_extension("summary.csv"), &metrics.summary_csv())?;
    write_text(&out.with_extension("svg"), &scatter_svg(&metrics))?;
    for issue in &metrics.issues {
        eprintln!(
            "skipped {} ({:?}, {:?}): {}",
            issue.sentence_id, issue.slot, issue.condition, issue.message
        );
    }
    print!("{}", metrics.summary_csv());
    write_json(
        &out,
        &MetricsFile {
            metrics,
            manifest: Some(manifest),
        },
    )
}

// ---------------------------------------------------------------- verify

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub truth: PathBuf,
    /// Sweep report to compare against the plant.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value = "verify.json")]
    pub out: PathBuf,
}

pub fn verify(a: &VerifyArgs, g: &Global, run: &Run) -> Result<()> {
    let truth = GroundTruth::load(&a.truth)?;
    let report = load_report(&a.report)?;
    let diag = verify_report(&truth, &report)?;
    #[derive(Serialize)]
    struct Out<'a> {
        diagnostics: &'a rspb::synth::Diagnostics,
        manifest: RunManifest,
    }
    let manifest = run.manifest(a, vec![digest_file(&a.truth)?, digest_file(&a.report)?], 0)?;
    write_json(
        &g.output(&a.out),
        &Out {
            diagnostics: &diag,
            manifest,
        },
    )?;
    println!("{}", serde_json::to_string(&diag)?);
    Ok(())
}

// ---------------------------------------------------------------- render

#[derive(Args, Debug, Serialize)]
pub struct RenderArgs {
    /// Sweep report, axis trace, hierarchy report, or agreement metrics.
    #[arg(long)]
    pub input: PathBuf,
    /// csv or svg.
    #[arg(long, default_value = "csv")]
    pub format: String,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn render(a: &RenderArgs, g: &Global, run: &Run) -> Result<()> {
    let svg = match a.format.as_str() {
        "csv" => false,
        "svg" => true,
        f => return Err(usage(format!("unsupported format {f:?}; expected csv or svg"))),
    };
    let bytes = std::fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let text = match bytes.get(..4) {
        Some(b"RSPR") => {
            let report = SubspaceReport::from_bytes(&bytes, &a.input)?;
            if svg {
                curve_svg(&report)
            } else {
                curve_csv(&emit_curve(&report))
            }
        }
        Some(b"RSPT") => {
            let trace = AblationTrace::load(&a.input)?;
            if svg {
                trace_svg(&trace)
            } else {
                trace.to_csv()
            }
        }
        Some(b"RSPH") => {
            let report = HierarchyReport::from_bytes(&bytes, &a.input)?;
            if svg {
                hierarchy_svg(&report)
            } else {
                report.to_csv()
            }
        }
        _ if bytes.first() == Some(&b'{') => {
            let file: MetricsFile = serde_json::from_slice(&bytes)
                .map_err(|e| usage(format!("{} is not an agreement metrics file: {e}", a.input.display())))?;
            if svg {
                scatter_svg(&file.metrics)
            } else {
                file.metrics.summary_csv()
            }
        }
        _ => return Err(usage(format!("{} is not a renderable artifact", a.input.display()))),
    };
    write_text(&g.output(&a.out), &text)?;
    run.manifest(a, vec![digest_file(&a.input)?], 0)?;
    Ok(())
}

fn hierarchy_svg(report: &HierarchyReport) -> String {
    let series: Vec<Series> = report
        .levels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| {
            let d = match l.status {
                rspb::hierarchy::LevelStatus::Resolved { d } => d,
                rspb::hierarchy::LevelStatus::Unresolved { best_d, .. } => best_d,
                rspb::hierarchy::LevelStatus::Skipped => return None,
            };
            Some(Series {
                label: format!("{} ({} tags)", l.task, l.num_labels),
                points: vec![(i as f64, d as f64)],
            })
        })
        .collect();
    line_chart("Rank per hierarchy level", "level", "rank", &series, XScale::Linear)
}

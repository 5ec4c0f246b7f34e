// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Positional arguments select criteria by substring.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rspb::corpus::Split;
use rspb::hierarchy::{nested_sweep, HierarchyConfig, LevelStatus};
use rspb::intervention::{inlp, nullspace_projector, selectivity_eval, Ablation, InlpConfig, SelectivityConfig};
use rspb::linalg::to_dmatrix;
use rspb::probe::gradcheck::check_gradients;
use rspb::probe::{
    evaluate, predict, train_mlp, train_unprojected_linear, Batch, ClassifierKind, HiddenWidth, ProbeParams,
    Projection, Targets, TrainConfig,
};
use rspb::report::SubspaceReport;
use rspb::sweep::{run_sweep, SweepConfig};
use rspb::synth::{generate, Encoding, NestedSpec, PairSpec, PlantSpec, SynthOutput};
use rspb::task::{make_control, TaskDataset, TaskKind};
use rspb::axis::{greedy_axis_ablation, mask_columns, AxisConfig};

type Outcome = Result<(bool, String), String>;

fn plant(spec: PlantSpec) -> Result<SynthOutput, String> {
    generate(&spec).map_err(|e| e.to_string())
}

fn sweep(task: &TaskDataset, out: &SynthOutput, seed: u64) -> Result<SubspaceReport, String> {
    let cfg = SweepConfig {
        seed,
        ..SweepConfig::for_width(out.reprs.dim())
    };
    run_sweep(task, &out.reprs, &cfg, None).map_err(|e| e.to_string())
}

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[v.len() / 2]
}

fn planted_rank() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for d_true in [2, 4, 8] {
        let mut picks = Vec::new();
        for seed in 0..5 {
            let out = plant(PlantSpec {
                dim: 64,
                n: 20_000,
                k: 10,
                noise: 0.1,
                d_true,
                seed,
                ..PlantSpec::default()
            })?;
            let task = out.task().map_err(|e| e.to_string())?;
            picks.push(sweep(&task, &out, seed)?.selected_rank);
        }
        let m = median(picks.clone());
        ok &= (d_true..=d_true + 1).contains(&m);
        detail.push(format!("d_true={d_true} d*={picks:?} median={m}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let threads = rayon::current_num_threads();
    ok &= secs <= 900.0;
    detail.push(format!("{secs:.0}s on {threads} thread(s)"));
    Ok((ok, detail.join("; ")))
}

fn control_separation() -> Outcome {
    let out = plant(PlantSpec {
        d_true: 2,
        seed: 0,
        ..PlantSpec::default()
    })?;
    let real = out.task().map_err(|e| e.to_string())?;
    let control = make_control(&real, &out.corpus, 0).map_err(|e| e.to_string())?;
    let r = sweep(&real, &out, 0)?;
    let c = sweep(&control, &out, 0)?;
    let full = |rep: &SubspaceReport| rep.record(rep.repr_width).map_or(f64::NAN, |x| x.test_accuracy);
    let (fr, fc) = (full(&r), full(&c));
    let ok = c.selected_rank >= 4 * r.selected_rank && fc <= fr - 0.10;
    Ok((
        ok,
        format!(
            "d*_real={} d*_control={} full-rank real={fr:.4} control={fc:.4}",
            r.selected_rank, c.selected_rank
        ),
    ))
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let kinds = [TaskKind::SingleToken, TaskKind::TokenPair, TaskKind::HeadSelection];
    for i in 0..100 {
        let kind = kinds[i % 3];
        let classifier = if i % 2 == 0 { ClassifierKind::Mlp } else { ClassifierKind::Linear };
        let dim = rng.random_range(1..=8);
        let rank = rng.random_range(1..=dim);
        let hidden = rng.random_range(1..=8);
        let outputs = if kind == TaskKind::HeadSelection { 1 } else { rng.random_range(2..=5) };
        let mut params = ProbeParams::<f64>::init(
            kind,
            classifier,
            Some(rank),
            dim,
            outputs,
            HiddenWidth::Fixed(hidden),
            i as u64,
        )
        .map_err(|e| e.to_string())?;
        if let rspb::probe::Classifier::Linear(l) = &mut params.classifier {
            l.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let rows = rng.random_range(1..=6);
        let mut m = || Array2::from_shape_simple_fn((rows, dim), || rng.random_range(-1.0..1.0));
        let batch = match kind {
            TaskKind::SingleToken => Batch::Single(m()),
            _ => Batch::Pair(m(), m()),
        };
        let classes: Vec<usize> = (0..rows).map(|_| rng.random_range(0..outputs)).collect();
        let binary: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.5)).collect();
        let targets = if kind == TaskKind::HeadSelection {
            Targets::Binary(&binary)
        } else {
            Targets::Classes(&classes)
        };
        let checks = check_gradients(&params, &batch, &targets, 1e-6).map_err(|e| e.to_string())?;
        if !checks.iter().any(|c| c.name.contains("proj")) {
            return Err(format!("instance {i}: projection gradient not checked"));
        }
        for c in checks {
            worst = worst.max(c.relative_error);
        }
    }
    Ok((worst < 1e-4, format!("worst relative error {worst:.2e} over 100 instances")))
}

fn projector_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = [0.0f64; 3];
    let mut rank_failures = 0;
    for _ in 0..1000 {
        let dim = rng.random_range(1..=128);
        let d = rng.random_range(1..=dim);
        let pi = Array2::from_shape_simple_fn((d, dim), || rng.random_range(-1.0f32..1.0));
        let proj = Projection::new(pi.clone()).map_err(|e| e.to_string())?;
        let n = to_dmatrix(&nullspace_projector(&proj).matrix());
        let p = to_dmatrix(&pi);
        let scale = n.norm().max(1.0);
        worst[0] = worst[0].max((&n - n.transpose()).norm() / scale);
        worst[1] = worst[1].max((&n * &n - &n).norm() / scale);
        worst[2] = worst[2].max((&n * p.transpose()).norm() / p.norm());
        // A projector's singular values are 0 or 1.
        let sv = n.singular_values();
        let ones = sv.iter().filter(|s| (**s - 1.0).abs() <= 1e-6).count();
        let zeros = sv.iter().filter(|s| s.abs() <= 1e-6).count();
        if ones != dim - d || ones + zeros != dim {
            rank_failures += 1;
        }
    }
    let ok = worst.iter().all(|w| *w <= 1e-6) && rank_failures == 0;
    Ok((
        ok,
        format!(
            "symmetry {:.1e} idempotence {:.1e} annihilation {:.1e} rank mismatches {rank_failures}",
            worst[0], worst[1], worst[2]
        ),
    ))
}

fn selectivity() -> Outcome {
    let out = plant(PlantSpec {
        d_true: 3,
        k: 8,
        noise: 1.0,
        orthogonal_pair: Some(PairSpec { d_b: 4, k_b: 8 }),
        seed: 0,
        ..PlantSpec::default()
    })?;
    let a = out.task().map_err(|e| e.to_string())?;
    let b = out.task_b().map_err(|e| e.to_string())?.ok_or("no second feature")?;
    let cfg = SelectivityConfig::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, target, other) in [("A", &a, &b), ("B", &b, &a)] {
        let report = sweep(target, &out, 0)?;
        let projector = nullspace_projector(report.projection.as_ref().ok_or("report has no projection")?);
        let r = selectivity_eval(&out.reprs, target, other, &projector, &cfg).map_err(|e| e.to_string())?;
        ok &= (r.a_after - r.a_majority).abs() <= 0.05 && r.b_before - r.b_after <= 0.02;
        detail.push(format!(
            "remove {name} (d*={}): target {:.4}->{:.4} (constant {:.4}), other {:.4}->{:.4}",
            report.selected_rank, r.a_before, r.a_after, r.a_majority, r.b_before, r.b_after
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn inlp_guarantee() -> Outcome {
    let out = plant(PlantSpec {
        d_true: 3,
        k: 4,
        majority_offset: 1.0,
        seed: 0,
        ..PlantSpec::default()
    })?;
    let task = out.task().map_err(|e| e.to_string())?;
    let cfg = InlpConfig::default();
    let state = inlp(&out.reprs, &task, &cfg).map_err(|e| e.to_string())?;
    let projected = state.apply(&out.reprs).map_err(|e| e.to_string())?;
    let probe = train_unprojected_linear(&task, &projected, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let acc = evaluate(&probe.params, &task, &projected, Split::Test).map_err(|e| e.to_string())?;
    let majority = task.majority_frequency(Split::Test);
    let drop = state.width() - state.kept_rank();
    let ok = state.converged && state.iteration_count() <= 10 && acc <= majority + 0.02 && drop >= 3;
    Ok((
        ok,
        format!(
            "{} iterations (converged {}), linear accuracy {acc:.4} vs majority {majority:.4}, rank drop {drop}",
            state.iteration_count(),
            state.converged
        ),
    ))
}

fn hierarchy() -> Outcome {
    let out = plant(PlantSpec {
        d_true: 6,
        k: 7,
        noise: 0.1,
        nested: Some(NestedSpec { d_fine: 3, k_fine: 3 }),
        seed: 0,
        ..PlantSpec::default()
    })?;
    let task = out.task().map_err(|e| e.to_string())?;
    let fine = out.truth.fine_subtask().ok_or("no fine subtask")?;
    let cfg = HierarchyConfig::new(vec![fine]);
    let report = nested_sweep(&task, &out.reprs, &cfg).map_err(|e| e.to_string())?;
    let resolved: Vec<Option<usize>> = report.levels.iter().map(|l| l.resolved_rank()).collect();
    let ok = match resolved[..] {
        [Some(d1), Some(d2)] => d2 <= d1 && (6..=7).contains(&d1) && (3..=4).contains(&d2),
        _ => false,
    };
    let statuses: Vec<String> = report
        .levels
        .iter()
        .map(|l| match &l.status {
            LevelStatus::Resolved { d } => format!("{}: d={d}", l.task),
            LevelStatus::Unresolved { best_d, best_accuracy } => {
                format!("{}: unresolved (best d={best_d}, {best_accuracy:.4})", l.task)
            }
            LevelStatus::Skipped => format!("{}: skipped", l.task),
        })
        .collect();
    Ok((ok, statuses.join("; ")))
}

fn axis_alignment() -> Outcome {
    let support = vec![5, 17, 42];
    let out = plant(PlantSpec {
        d_true: 3,
        k: 6,
        axis_support: Some(support.clone()),
        seed: 0,
        ..PlantSpec::default()
    })?;
    let task = out.task().map_err(|e| e.to_string())?;
    let probe = train_mlp(10, &task, &out.reprs, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let trace = greedy_axis_ablation(&probe, &task, &out.reprs, &AxisConfig::default()).map_err(|e| e.to_string())?;
    let width = trace.repr_width;
    let mut held = true;
    let mut worst_before = f64::INFINITY;
    for (i, s) in trace.steps.iter().enumerate() {
        if width - i - 1 > support.len() {
            worst_before = worst_before.min(s.test_accuracy);
            held &= s.test_accuracy >= trace.initial_test_accuracy - 0.05;
        }
    }
    let last_three: Vec<usize> = trace.steps[width - support.len()..].iter().map(|s| s.axis).collect();
    let test = task.indices(Split::Test);
    let zeroed = mask_columns(&probe.params, &trace.zeroed(width));
    let preds = predict(&zeroed, &task, &out.reprs, &test).map_err(|e| e.to_string())?;
    let constant = preds[0];
    let all_same = preds.iter().all(|p| *p == constant);
    let freq = task.label_frequency(Split::Test, constant);
    let last = trace.steps.last().map_or(f64::NAN, |s| s.test_accuracy);
    let ok = held && all_same && last == freq;
    Ok((
        ok,
        format!(
            "initial {:.4}, lowest with >3 axes {worst_before:.4}, last axes {last_three:?}, final {last} vs constant-class frequency {freq}",
            trace.initial_test_accuracy
        ),
    ))
}

fn xor_gap() -> Outcome {
    let out = plant(PlantSpec {
        d_true: 2,
        k: 2,
        encoding: Encoding::NonlinearXor,
        seed: 0,
        ..PlantSpec::default()
    })?;
    let task = out.task().map_err(|e| e.to_string())?;
    let cfg = TrainConfig::default();
    let mlp = train_mlp(2, &task, &out.reprs, &cfg).map_err(|e| e.to_string())?;
    let lin = train_unprojected_linear(&task, &out.reprs, &cfg).map_err(|e| e.to_string())?;
    let am = evaluate(&mlp.params, &task, &out.reprs, Split::Test).map_err(|e| e.to_string())?;
    let al = evaluate(&lin.params, &task, &out.reprs, Split::Test).map_err(|e| e.to_string())?;
    Ok((am >= 0.95 && al <= 0.60, format!("MLP rank 2 {am:.4}, linear full rank {al:.4}")))
}

const AGREEMENT_SLOTS: &str = r#"{"sentence_id":1,"masked_slot":"subject","condition":"none","vocab_entries":[["dog",0.5],["dogs",0.1],["runs",0.05]]}
{"sentence_id":1,"masked_slot":"subject","condition":"nounspace","vocab_entries":[["dog",0.2],["dogs",0.2],["runs",0.1]]}
{"sentence_id":1,"masked_slot":"verb","condition":"none","vocab_entries":[["runs",0.6],["run",0.1],["dog",0.01]]}
{"sentence_id":1,"masked_slot":"verb","condition":"verbspace","vocab_entries":[["runs",0.3],["run",0.25],["dog",0.02]]}
"#;
const AGREEMENT_PAIRS: &str = r#"{"sentence_id":1,"masked_slot":"subject","correct":"dog","incorrect":"dogs"}
{"sentence_id":1,"masked_slot":"verb","correct":"runs","incorrect":"run"}
"#;

fn cli_pipeline(dir: &Path) -> Result<(), String> {
    let bin = env!("CARGO_BIN_EXE_probe");
    std::fs::write(dir.join("slots.jsonl"), AGREEMENT_SLOTS).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("pairs.jsonl"), AGREEMENT_PAIRS).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("nouns.txt"), "dog\ndogs\n").map_err(|e| e.to_string())?;
    std::fs::write(dir.join("verbs.txt"), "run\nruns\n").map_err(|e| e.to_string())?;
    let data = ["--reps", "reprs.bin", "--corpus", "corpus.jsonl"];
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth", "--plant", "d=4,k=7,nested=2:3,pair=2:4,n=3000", "--seed", "3"],
        [&["sweep"][..], &data, &["--schedule", "1,2,4,8", "--csv", "curve.csv", "--svg", "curve.svg"]].concat(),
        [&["hierarchy"][..], &data, &["--subtask", "fine=F1,F2", "--d0", "6", "--csv", "hier.csv"]].concat(),
        [&["axis"][..], &data, &["--rank", "4", "--dev-subsample", "200", "--csv", "trace.csv", "--svg", "trace.svg", "--save-probe", "probe.ckpt"]].concat(),
        vec!["ablate", "--report", "report.bin", "--reps", "reprs.bin", "--apply-out", "ablated.bin"],
        [&["inlp"][..], &data, &["--max-iters", "3", "--apply-out", "inlp-reprs.bin"]].concat(),
        [&["selectivity"][..], &data, &["--task-a", "pos", "--task-b", "labels_b.txt", "--report", "report.bin", "--max-epochs", "20"]].concat(),
        vec!["agreement", "--slots", "slots.jsonl", "--pairs", "pairs.jsonl", "--nouns", "nouns.txt", "--verbs", "verbs.txt"],
        vec!["verify", "--truth", "truth.json", "--report", "report.bin"],
        vec!["render", "--input", "report.bin", "--format", "svg", "--out", "report.svg"],
        vec!["render", "--input", "trace.bin", "--format", "csv", "--out", "trace-render.csv"],
        vec!["render", "--input", "hier.bin", "--format", "svg", "--out", "hier.svg"],
        vec!["render", "--input", "agreement.json", "--format", "csv", "--out", "agreement-render.csv"],
    ];
    for (i, args) in steps.iter().enumerate() {
        let output = Command::new(bin)
            .current_dir(dir)
            .arg("--deterministic")
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !output.status.success() {
            return Err(format!(
                "{} failed: {}",
                args[0],
                String::from_utf8_lossy(&output.stderr).trim()
            ));
        }
        // Keep each subcommand's manifest for comparison.
        std::fs::rename(dir.join("manifest.json"), dir.join(format!("manifest-{i:02}-{}.json", args[0])))
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    cli_pipeline(a.path())?;
    cli_pipeline(b.path())?;
    let (fa, fb) = (files(a.path()), files(b.path()));
    if fa != fb {
        return Ok((false, "runs produced different file sets".into()));
    }
    let differing: Vec<String> = fa
        .iter()
        .filter(|f| std::fs::read(a.path().join(f)).ok() != std::fs::read(b.path().join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    Ok((
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts from 10 subcommands identical", fa.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    ))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient-correctness", gradients),
        ("projector-algebra", projector_algebra),
        ("linear-vs-mlp-gap", xor_gap),
        ("axis-alignment", axis_alignment),
        ("inlp-guarantee", inlp_guarantee),
        ("hierarchy-recovery", hierarchy),
        ("determinism", determinism),
        ("control-separation", control_separation),
        ("intervention-selectivity", selectivity),
        ("planted-rank-recovery", planted_rank),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! `probe`: rank sweeps, hierarchies, axis ablation, nullspace
//! interventions and synthetic plants from the command line.

mod commands;
mod common;

use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use common::{Global, Run, Usage};

#[derive(Parser, Debug)]
#[command(name = "probe", version, about = "Find and ablate low-dimensional feature subspaces of word representations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with a planted subspace.
    Synth(commands::SynthArgs),
    /// Train one probe per rank and select the smallest sufficient rank.
    Sweep(commands::SweepArgs),
    /// Nested sweeps over a coarse-to-fine chain of subtasks.
    Hierarchy(commands::HierarchyArgs),
    /// Greedy neuron ablation of a rank-constrained probe.
    Axis(commands::AxisArgs),
    /// Nullspace projector of a sweep report's projection.
    Ablate(commands::AblateArgs),
    /// Iterated nullspace projection.
    Inlp(commands::InlpArgs),
    /// Retrain probes for two tasks before and after an ablation.
    Selectivity(commands::SelectivityArgs),
    /// Agreement metrics from masked-slot distributions.
    Agreement(commands::AgreementArgs),
    /// Compare a sweep report or projection against a synthetic plant.
    Verify(commands::VerifyArgs),
    /// Render a stored artifact as CSV or SVG.
    Render(commands::RenderArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Sweep(_) => "sweep",
            Command::Hierarchy(_) => "hierarchy",
            Command::Axis(_) => "axis",
            Command::Ablate(_) => "ablate",
            Command::Inlp(_) => "inlp",
            Command::Selectivity(_) => "selectivity",
            Command::Agreement(_) => "agreement",
            Command::Verify(_) => "verify",
            Command::Render(_) => "render",
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let workers = cli.global.worker_count()?;
    std::fs::create_dir_all(&cli.global.out_dir)
        .map_err(|e| anyhow::anyhow!("creating {}: {e}", cli.global.out_dir.display()))?;
    let run = Run {
        subcommand: cli.command.name(),
        out_dir: cli.global.out_dir.clone(),
        started: Instant::now(),
        workers,
        deterministic: cli.global.deterministic,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let g = &cli.global;
    pool.install(|| match &cli.command {
        Command::Synth(a) => commands::synth(a, g, &run),
        Command::Sweep(a) => commands::sweep(a, g, &run),
        Command::Hierarchy(a) => commands::hierarchy(a, g, &run),
        Command::Axis(a) => commands::axis(a, g, &run),
        Command::Ablate(a) => commands::ablate(a, g, &run),
        Command::Inlp(a) => commands::inlp(a, g, &run),
        Command::Selectivity(a) => commands::selectivity(a, g, &run),
        Command::Agreement(a) => commands::agreement(a, g, &run),
        Command::Verify(a) => commands::verify(a, g, &run),
        Command::Render(a) => commands::render(a, g, &run),
    })
}

/// 1 for invalid input or usage, 2 for runtime failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<rspb::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
    }
    2
}

/// The error chain, skipping causes already quoted by their parent.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cram_lab::eval::ScoreSource;
use cram_lab::pipeline::{self, EvalOptions, RunConfig, CLEAN_EM_GATE};
use cram_lab::{LabError, Result};

#[derive(Parser, Debug)]
#[command(name = "cram", version, about = "Credibility-aware attention modification on a toy reader")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run config (flat TOML). Keys can also be set with CRAM_<KEY> variables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides `jobs`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the world, vocabulary, training items and evaluation splits.
    GenCorpus {
        /// Replace the gold answer in misinformation text with a placeholder.
        #[arg(long)]
        filtered: bool,
    },
    /// Train the reader and write a checkpoint.
    Train,
    /// Rank heads by indirect effect and choose the reweighted set.
    IdentifyHeads,
    /// Evaluate every policy across pollution levels.
    Eval {
        #[arg(long)]
        score_source: Option<ScoreSource>,
        /// External score file (JSON: instance id -> doc id -> score in [0, 10]).
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Evaluate a single number of misinformation documents.
        #[arg(long, value_parser = clap::value_parser!(u64).range(0..=3))]
        n_mis: Option<u64>,
        /// Evaluate against placeholder-filtered misinformation.
        #[arg(long)]
        filtered: bool,
    },
    /// Print the evaluation report.
    Report,
}

fn load_config(common: &Common, edit: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    edit(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.command {
        Command::GenCorpus { filtered } => load_config(&cli.common, |c| c.filtered |= filtered)?,
        Command::Eval {
            score_source,
            scores,
            filtered,
            ..
        } => load_config(&cli.common, |c| {
            if let Some(s) = score_source {
                c.score_source = *s;
            }
            if let Some(p) = scores {
                c.scores_path = Some(p.clone());
            }
            c.filtered |= filtered;
        })?,
        _ => load_config(&cli.common, |_| {})?,
    };
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::GenCorpus { .. } => {
            pipeline::cmd_gen_corpus(&cfg)?;
            println!("corpus written to {}", cfg.output_dir.display());
        }
        Command::Train => {
            let out = pipeline::cmd_train(&cfg)?;
            let first = out.trace.first().map_or(f64::NAN, |p| p.loss);
            let last = out.trace.last().map_or(f64::NAN, |p| p.loss);
            println!("loss {first:.4} -> {last:.4}");
            let verdict = if out.clean_em >= CLEAN_EM_GATE { "met" } else { "NOT met" };
            println!("clean-test EM {:.2} (gate {CLEAN_EM_GATE:.0}: {verdict})", out.clean_em);
        }
        Command::IdentifyHeads => {
            let out = pipeline::cmd_identify_heads(&cfg)?;
            let heads: Vec<String> = out.selection.heads.iter().map(ToString::to_string).collect();
            println!(
                "{} heads with positive IE; chose k = {}: {}",
                out.selection.m_pos,
                out.selection.k,
                heads.join(" ")
            );
        }
        Command::Eval { n_mis, .. } => {
            let opts = EvalOptions {
                n_mis: n_mis.map(|n| n as usize),
            };
            let out = pipeline::cmd_eval(&cfg, &opts)?;
            print!("{}", pipeline::render_report(&out.series));
            for (n, d) in out.cram_deltas() {
                println!("n_mis={n}: cram - naive_polluted EM = {d:+.2}");
            }
        }
        Command::Report => print!("{}", pipeline::cmd_report(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end stages behind the `cram` binary. Every stage reads and writes
//! plain files under the output directory, so stages can be rerun alone.

mod config;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    apply_scores, build_vocab, gen_training_set, gen_world, parse_score_table, read_jsonl, relayout,
    split_dataset, write_jsonl, BenchmarkSplits, QAInstance, ScoreTable, TrainingItem, Vocab, World,
};
use crate::cram::{compute_ie_table, export_ie_distribution, select_head_count, IETable, Selection};
use crate::error::{LabError, Result};
use crate::eval::{
    instance_fingerprint, serialize_report, standard_policies, sweep_ie_set_size, sweep_misinfo,
    Evaluator, Policy, PolicyKind, ReportFormat, ReportMeta, ReportSeries, ResultRow, ScoreSource,
};
use crate::model::{load_checkpoint, loss_trace_csv, save_checkpoint, init_model, train, LossPoint, Model, TrainExample};

pub use config::{RunConfig, ENV_PREFIX};

pub const WORLD_FILE: &str = "world.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const IE_FILE: &str = "ie.jsonl";
pub const VALIDATION_FILE: &str = "validation.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const IE_TABLE_FILE: &str = "ie_table.csv";
pub const IE_DISTRIBUTION_FILE: &str = "ie_distribution.csv";
pub const HEAD_SET_FILE: &str = "head_set.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const IE_SWEEP_FILE: &str = "ie_sweep.json";

/// Clean-test EM the trained reader is expected to reach.
pub const CLEAN_EM_GATE: f64 = 95.0;

/// Pollution levels covered by a full evaluation.
pub const DEFAULT_LEVELS: [usize; 4] = [0, 1, 2, 3];

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| LabError::io(path, e))
}

fn read_file(path: &Path, hint: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            LabError::io(path, std::io::Error::new(e.kind(), format!("not found; run `cram {hint}` first")))
        } else {
            LabError::io(path, e)
        }
    })
}

/// Everything `gen-corpus` writes.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub world: World,
    pub vocab: Vocab,
    pub train: Vec<TrainingItem>,
    pub splits: BenchmarkSplits,
}

impl Corpus {
    pub fn generate(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let world = gen_world(cfg.stage_seed("world"), cfg.n_entities, cfg.n_relations, cfg.n_facts)?;
        let vocab = build_vocab(&world);
        let train = gen_training_set(&world, cfg.train_size, &cfg.training_mix(), cfg.stage_seed("train-corpus"))?;
        let splits = split_dataset(&world, cfg.split_sizes(), &cfg.instance_spec(), cfg.stage_seed("splits"))?;
        Ok(Self { world, vocab, train, splits })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        let world = serde_json::to_string(&self.world).expect("world serializes");
        write_file(&dir.join(WORLD_FILE), world + "\n")?;
        write_file(&dir.join(VOCAB_FILE), self.vocab.to_file_string())?;
        write_jsonl(&dir.join(TRAIN_FILE), &self.train)?;
        write_jsonl(&dir.join(IE_FILE), &self.splits.ie_set)?;
        write_jsonl(&dir.join(VALIDATION_FILE), &self.splits.validation_set)?;
        write_jsonl(&dir.join(TEST_FILE), &self.splits.test_set)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let world_path = dir.join(WORLD_FILE);
        let world: World = serde_json::from_str(&read_file(&world_path, "gen-corpus")?)
            .map_err(|e| LabError::Data(format!("{}: {e}", world_path.display())))?;
        let vocab = Vocab::from_file_string(&read_file(&dir.join(VOCAB_FILE), "gen-corpus")?)?;
        let split = |name: &str| -> Result<Vec<QAInstance>> {
            let p = dir.join(name);
            read_file(&p, "gen-corpus")?;
            read_jsonl(&p)
        };
        let train_path = dir.join(TRAIN_FILE);
        read_file(&train_path, "gen-corpus")?;
        Ok(Self {
            train: read_jsonl(&train_path)?,
            splits: BenchmarkSplits {
                ie_set: split(IE_FILE)?,
                validation_set: split(VALIDATION_FILE)?,
                test_set: split(TEST_FILE)?,
            },
            world,
            vocab,
        })
    }

    pub fn train_examples(&self) -> Vec<TrainExample> {
        self.train.iter().map(|t| t.to_example(&self.vocab)).collect()
    }
}

/// `gen-corpus`: writes world, vocabulary, training items and splits.
pub fn cmd_gen_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let corpus = Corpus::generate(cfg)?;
    corpus.save(&cfg.output_dir)?;
    log::info!(
        "corpus: {} entities, {} facts, {} training items, splits {}/{}/{}",
        corpus.world.entities.len(),
        corpus.world.facts.len(),
        corpus.train.len(),
        corpus.splits.ie_set.len(),
        corpus.splits.validation_set.len(),
        corpus.splits.test_set.len()
    );
    Ok(corpus)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: Vec<LossPoint>,
    /// Naive-clean EM on the test split.
    pub clean_em: f64,
}

/// Trains the reader on an already loaded corpus.
pub fn train_on(cfg: &RunConfig, corpus: &Corpus) -> Result<TrainOutcome> {
    let data = corpus.train_examples();
    let longest = data
        .iter()
        .map(|e| e.context.len() + e.answer.len())
        .chain(corpus.splits.test_set.iter().map(|q| q.prompt_pieces().len() + 2 + crate::eval::DECODE_SLACK))
        .max()
        .unwrap_or(0);
    if longest > cfg.max_seq_len {
        return Err(LabError::Config(format!(
            "max_seq_len {} is shorter than the longest sequence ({longest})",
            cfg.max_seq_len
        )));
    }
    let model = init_model(&cfg.model_config(corpus.vocab.len()))?;
    let (model, trace) = train(model, &data, &cfg.train_config())?;
    let clean = clean_test(&model, corpus)?;
    Ok(TrainOutcome { model, trace, clean_em: clean })
}

fn clean_test(model: &Model, corpus: &Corpus) -> Result<f64> {
    let eval = Evaluator::new(model, &corpus.vocab);
    let r = eval.run_condition(
        &corpus.splits.test_set,
        &Policy::new(PolicyKind::NaiveClean, ScoreSource::Ideal),
    )?;
    Ok(r.em)
}

/// `train`: fits the model and writes checkpoint and loss trace.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let corpus = Corpus::load(&cfg.output_dir)?;
    let out = train_on(cfg, &corpus)?;
    save_checkpoint(&out.model, &cfg.output_dir.join(CHECKPOINT_FILE))?;
    write_file(&cfg.output_dir.join(LOSS_FILE), loss_trace_csv(&out.trace))?;
    Ok(out)
}

pub fn load_model(dir: &Path) -> Result<Model> {
    let p = dir.join(CHECKPOINT_FILE);
    if !p.exists() {
        return Err(LabError::io(
            &p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not found; run `cram train` first"),
        ));
    }
    load_checkpoint(&p)
}

#[derive(Debug, Clone)]
pub struct HeadOutcome {
    pub table: IETable,
    pub selection: Selection,
}

pub fn identify_heads_on(cfg: &RunConfig, model: &Model, corpus: &Corpus) -> Result<HeadOutcome> {
    let eval = Evaluator::new(model, &corpus.vocab);
    let table = compute_ie_table(model, &corpus.vocab, &corpus.splits.ie_set, false)?;
    let selection = select_head_count(&eval, &table, &corpus.splits.validation_set, &cfg.multiplier_grid)?;
    Ok(HeadOutcome { table, selection })
}

/// `identify-heads`: IE table, its distribution, and the chosen head set.
pub fn cmd_identify_heads(cfg: &RunConfig) -> Result<HeadOutcome> {
    let corpus = Corpus::load(&cfg.output_dir)?;
    let model = load_model(&cfg.output_dir)?;
    let out = identify_heads_on(cfg, &model, &corpus)?;
    write_file(&cfg.output_dir.join(IE_TABLE_FILE), out.table.to_csv())?;
    export_ie_distribution(&out.table, &cfg.output_dir.join(IE_DISTRIBUTION_FILE))?;
    write_file(&cfg.output_dir.join(HEAD_SET_FILE), out.selection.to_json())?;
    Ok(out)
}

pub fn load_selection(dir: &Path) -> Result<Selection> {
    Selection::from_json(&read_file(&dir.join(HEAD_SET_FILE), "identify-heads")?)
}

/// Options that only affect evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalOptions {
    /// Evaluate a single pollution level instead of all of them.
    pub n_mis: Option<usize>,
}

/// One evaluation row with its per-instance predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub policy: String,
    pub n_mis: usize,
    pub id: String,
    pub prediction: String,
    pub gold: String,
    pub em: f64,
    pub f1: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub series: ReportSeries,
    pub predictions: Vec<PredictionRecord>,
}

impl EvalOutcome {
    /// CrAM minus naive-polluted EM at each evaluated level.
    pub fn cram_deltas(&self) -> Vec<(usize, f64)> {
        let mut levels: Vec<usize> = self.series.results.iter().map(|r| r.n_mis).collect();
        levels.dedup();
        levels
            .into_iter()
            .filter_map(|n| {
                let c = self.series.find("cram", n)?;
                let p = self.series.find("naive_polluted", n)?;
                Some((n, c.em - p.em))
            })
            .collect()
    }
}

fn load_scores(cfg: &RunConfig, instances: &[QAInstance]) -> Result<Option<ScoreTable>> {
    match cfg.score_source {
        ScoreSource::Ideal => Ok(None),
        ScoreSource::Ingested => {
            let path = cfg.scores_path.as_ref().ok_or_else(|| {
                LabError::Config("ingested scores need a score file (--scores)".into())
            })?;
            let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
            let table = parse_score_table(&text)?;
            apply_scores(&table, instances)?;
            Ok(Some(table))
        }
    }
}

pub fn eval_on(
    cfg: &RunConfig,
    model: &Model,
    corpus: &Corpus,
    selection: &Selection,
    opts: &EvalOptions,
) -> Result<EvalOutcome> {
    let levels: Vec<usize> = match opts.n_mis {
        Some(n) => vec![n],
        None => DEFAULT_LEVELS.to_vec(),
    };
    let spec = cfg.instance_spec();
    let test = relayout(&corpus.world, &corpus.splits.test_set, &spec)?;
    let scores = load_scores(cfg, &test)?;
    let policies = standard_policies(&selection.heads, cfg.exclusion_threshold, cfg.score_source);
    let eval = Evaluator::new(model, &corpus.vocab);
    let entries = sweep_misinfo(&eval, &corpus.world, &test, &spec, &policies, &levels, scores.as_ref())?;

    let mut results = Vec::with_capacity(entries.len());
    let mut predictions = Vec::new();
    for e in &entries {
        results.push(ResultRow {
            policy: e.report.policy.clone(),
            score_source: e.report.score_source,
            n_mis: e.n_mis,
            em: e.report.em,
            f1: e.report.f1,
            n: e.report.n_instances,
        });
        predictions.extend(e.report.predictions.iter().map(|p| PredictionRecord {
            policy: e.report.policy.clone(),
            n_mis: e.n_mis,
            id: p.id.clone(),
            prediction: p.prediction.clone(),
            gold: p.gold.clone(),
            em: p.em,
            f1: p.f1,
        }));
    }
    let series = ReportSeries {
        meta: ReportMeta {
            model_checksum: model.checksum(),
            corpus_seed: cfg.seed,
            head_set: selection.heads.iter().map(|h| [h.layer, h.head]).collect(),
            grid: selection.multiplier_grid.clone(),
            filtered: spec.filtered,
            test_fingerprint: instance_fingerprint(&test),
        },
        results,
    };
    Ok(EvalOutcome { series, predictions })
}

/// `eval`: full policy grid over the pollution levels, plus the optional
/// identification-set size sweep.
pub fn cmd_eval(cfg: &RunConfig, opts: &EvalOptions) -> Result<EvalOutcome> {
    let corpus = Corpus::load(&cfg.output_dir)?;
    let model = load_model(&cfg.output_dir)?;
    let selection = load_selection(&cfg.output_dir)?;
    let out = eval_on(cfg, &model, &corpus, &selection, opts)?;
    serialize_report(&out.series, &cfg.output_dir.join(REPORT_JSON), ReportFormat::Json)?;
    serialize_report(&out.series, &cfg.output_dir.join(REPORT_CSV), ReportFormat::Csv)?;
    write_jsonl(&cfg.output_dir.join(PREDICTIONS_FILE), &out.predictions)?;

    if !cfg.ie_sweep_sizes.is_empty() {
        let eval = Evaluator::new(&model, &corpus.vocab);
        let test = relayout(&corpus.world, &corpus.splits.test_set, &cfg.instance_spec())?;
        let sweep = sweep_ie_set_size(
            &eval,
            &corpus.splits.ie_set,
            &corpus.splits.validation_set,
            &test,
            &cfg.ie_sweep_sizes,
            &cfg.multiplier_grid,
        )?;
        let rows: Vec<IeSweepRow> = sweep
            .entries
            .iter()
            .map(|e| IeSweepRow {
                size: e.size,
                k: e.selection.k,
                em: e.report.em,
                f1: e.report.f1,
                test_fingerprint: e.test_fingerprint.clone(),
            })
            .collect();
        log::info!("IE set size sweep: EM spread {:.2}", sweep.em_spread);
        let doc = IeSweepDoc { em_spread: sweep.em_spread, entries: rows };
        let text = serde_json::to_string_pretty(&doc).expect("sweep serializes") + "\n";
        write_file(&cfg.output_dir.join(IE_SWEEP_FILE), text)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IeSweepRow {
    pub size: usize,
    pub k: usize,
    pub em: f64,
    pub f1: f64,
    pub test_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IeSweepDoc {
    pub em_spread: f64,
    pub entries: Vec<IeSweepRow>,
}

/// Human-readable table of a report, EM and F1 rounded to two decimals.
pub fn render_report(series: &ReportSeries) -> String {
    let mut out = format!(
        "model {}  seed {}  heads {}  filtered {}\n",
        &series.meta.model_checksum[..12.min(series.meta.model_checksum.len())],
        series.meta.corpus_seed,
        series.meta.head_set.len(),
        series.meta.filtered
    );
    out.push_str(&format!("{:<16} {:>5} {:>8} {:>8} {:>6}\n", "policy", "n_mis", "EM", "F1", "n"));
    for r in &series.results {
        out.push_str(&format!(
            "{:<16} {:>5} {:>8.2} {:>8.2} {:>6}\n",
            r.policy, r.n_mis, r.em, r.f1, r.n
        ));
    }
    out
}

/// `report`: reads `report.json` and renders it.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let path: PathBuf = cfg.output_dir.join(REPORT_JSON);
    read_file(&path, "eval")?;
    let series = crate::eval::load_report(&path)?;
    Ok(render_report(&series))
}

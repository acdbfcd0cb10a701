mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ctxdst::corpus::{Dataset, Dialogue, EmbeddingTable, Split};
use ctxdst::encoders::Variant;
use ctxdst::evaluation::{metrics_report, prediction_dump, track_corpus, GoldOracle, NeuralScorer, TurnPrediction};
use ctxdst::state::inspect_lookup;
use ctxdst::trainer::{fit, Checkpoint, CheckpointKind};
use serde::Serialize;

use config::{load_dataset, CorpusKind, FileConfig};

/// Context-aware dialogue state tracker.
#[derive(Debug, Parser)]
#[command(name = "ctxdst", version)]
struct Cli {
    /// TOML run configuration (`data_dir`, `corpus`, `output_dir`, `[train]`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Corpus directory; falls back to the config's `data_dir`.
    #[arg(long, env = "DST_DATA_DIR")]
    data_dir: Option<PathBuf>,

    #[arg(long, value_enum)]
    corpus: Option<CorpusKind>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    GlobalOnly,
    FullGle,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::GlobalOnly => Variant::GlobalOnly,
            VariantArg::FullGle => Variant::FullGle,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on the train split, selecting epochs on the validation split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Drop the antecedent and previous-value scores.
        #[arg(long)]
        no_referential_context: bool,
        /// Score the user utterance alone instead of the gated fusion.
        #[arg(long)]
        no_fusion_scorer: bool,
        /// Receives checkpoint.json, metrics.jsonl and config.json.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Score a split and write its metrics report.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Defaults to the threshold stored in the checkpoint.
        #[arg(long)]
        threshold: Option<f64>,
        /// Also write report.json here.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Dump per-turn predictions in the canonical dialogue format.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        threshold: Option<f64>,
        /// Restrict to these dialogue ids (repeatable).
        #[arg(long = "dialogue")]
        dialogues: Vec<String>,
        /// Write predictions.json here instead of stdout.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Show per-turn slot-change links and antecedents. Uses gold labels,
    /// or the model's predicted labels when a checkpoint is given.
    InspectLookup {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long = "dialogue")]
        dialogues: Vec<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Train {
            data,
            seed,
            threshold,
            variant,
            no_referential_context,
            no_fusion_scorer,
            output_dir,
        } => {
            let mut cfg = file.train.clone();
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(t) = threshold {
                cfg.threshold = t;
            }
            if let Some(v) = variant {
                cfg.variant = v.into();
            }
            cfg.referential_context &= !no_referential_context;
            cfg.fusion_scorer &= !no_fusion_scorer;
            cfg.validate()?;
            let out = file
                .output_dir(output_dir.as_deref())
                .context("train needs --output-dir or output_dir in the config")?;
            let ds = dataset(&file, &data)?;
            train(&cfg, &ds, &out)
        }
        Command::Evaluate {
            data,
            checkpoint,
            split,
            threshold,
            output_dir,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let ds = dataset(&file, &data)?;
            check_ontology(&ckpt, &ds)?;
            let dialogues = ds.split(split);
            let preds = track(&ckpt, &ds, dialogues, threshold.unwrap_or(ckpt.config.threshold))?;
            let report = metrics_report(&ckpt.ontology, &preds, dialogues)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            if let Some(dir) = file.output_dir(output_dir.as_deref()) {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                write_file(&dir.join("report.json"), &text)?;
            }
            print!("{text}");
            Ok(())
        }
        Command::Predict {
            data,
            checkpoint,
            split,
            threshold,
            dialogues,
            output_dir,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let ds = dataset(&file, &data)?;
            check_ontology(&ckpt, &ds)?;
            let selected = select(ds.split(split), &dialogues)?;
            let preds = track(&ckpt, &ds, &selected, threshold.unwrap_or(ckpt.config.threshold))?;
            let text = serde_json::to_string_pretty(&prediction_dump(&selected, &preds)?)? + "\n";
            match file.output_dir(output_dir.as_deref()) {
                Some(dir) => {
                    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                    write_file(&dir.join("predictions.json"), &text)
                }
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::InspectLookup {
            data,
            split,
            dialogues,
            checkpoint,
            threshold,
        } => {
            let ds = dataset(&file, &data)?;
            let selected = select(ds.split(split), &dialogues)?;
            let labels: Vec<Vec<_>> = match checkpoint {
                Some(path) => {
                    let ckpt = load_checkpoint(&path)?;
                    check_ontology(&ckpt, &ds)?;
                    let preds = track(&ckpt, &ds, &selected, threshold.unwrap_or(ckpt.config.threshold))?;
                    preds
                        .iter()
                        .map(|p| p.iter().map(|t| t.turn_label.clone()).collect())
                        .collect()
                }
                None => selected
                    .iter()
                    .map(|d| d.turns.iter().map(|t| t.turn_label.clone()).collect())
                    .collect(),
            };
            let slots: Vec<String> = ds.ontology.informable.keys().cloned().collect();
            let report: Vec<DialogueLookup> = selected
                .iter()
                .zip(&labels)
                .map(|(d, l)| DialogueLookup {
                    dialogue_id: d.dialogue_id.clone(),
                    turns: inspect_lookup(d, &slots, l),
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct DialogueLookup {
    dialogue_id: String,
    turns: Vec<ctxdst::state::TurnLookup>,
}

fn dataset(file: &FileConfig, data: &DataArgs) -> Result<Dataset> {
    let dir = file.data_dir(data.data_dir.as_deref())?;
    load_dataset(file.corpus(data.corpus), &dir)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.is_file() {
        bail!("checkpoint {} not found", path.display());
    }
    Ok(Checkpoint::load(path)?)
}

fn check_ontology(ckpt: &Checkpoint, ds: &Dataset) -> Result<()> {
    if ckpt.ontology_fingerprint != ds.ontology.fingerprint() {
        bail!("the checkpoint was trained on a different ontology than the one in the data directory");
    }
    Ok(())
}

fn select(dialogues: &[Dialogue], ids: &[String]) -> Result<Vec<Dialogue>> {
    if ids.is_empty() {
        return Ok(dialogues.to_vec());
    }
    ids.iter()
        .map(|id| {
            dialogues
                .iter()
                .find(|d| &d.dialogue_id == id)
                .cloned()
                .with_context(|| format!("no dialogue `{id}` in this split"))
        })
        .collect()
}

fn track(ckpt: &Checkpoint, ds: &Dataset, dialogues: &[Dialogue], threshold: f64) -> Result<Vec<Vec<TurnPrediction>>> {
    Ok(match ckpt.kind {
        CheckpointKind::GoldOracle => track_corpus(&GoldOracle::new(ckpt.ontology.clone()), dialogues, threshold)?,
        CheckpointKind::Neural => {
            let tracker = ckpt.tracker()?;
            let table = EmbeddingTable::build(&ckpt.config.embedding, &ds.vocabulary())?;
            track_corpus(&NeuralScorer::new(&tracker, &table)?, dialogues, threshold)?
        }
    })
}

fn train(cfg: &ctxdst::trainer::TrainConfig, ds: &Dataset, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_file(&out.join("config.json"), &(serde_json::to_string_pretty(cfg)? + "\n"))?;
    let table = EmbeddingTable::build(&cfg.embedding, &ds.vocabulary())?;
    let log_path = out.join("metrics.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let mut log_error = None;
    let outcome = fit(cfg, &ds.ontology, &ds.train, &ds.validation, &table, |record| {
        let line = serde_json::to_string(record).expect("epoch record serializes");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_error {
        return Err(e).with_context(|| format!("writing {}", log_path.display()));
    }
    let path = out.join("checkpoint.json");
    outcome.checkpoint.save(&path)?;
    log::info!(
        "best epoch {} ({} parameters) saved to {}",
        outcome.best_epoch,
        outcome.tracker.num_parameters(),
        path.display()
    );
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

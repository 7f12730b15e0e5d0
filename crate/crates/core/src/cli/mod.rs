//! Command-line front end: `train`, `evaluate`, `predict` and `synth`.
//!
//! Exit codes: 0 on success, 1 when `predict` could not handle some names,
//! 2 on any fatal error (reported on stderr as
//! `error: kind=<Kind> message=<text>`).

mod model_file;
mod registry;

pub use model_file::{ModelFile, FORMAT_VERSION};
pub use registry::{fit, Fitted, Kind};

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::corpus::{load_corpus, normalize_name, split, synth_corpus, SplitCorpus};
use crate::encoder::{encode, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{confusion, scores, ConfusionMatrix, MetricsReport};
use crate::neural::{encode_corpus, TrainConfig, TrainHistory};

pub const MODEL_FILE: &str = "model.nomina";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";

#[derive(Debug, Parser)]
#[command(name = "nomina", version, about = "Predict gender from first names")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a dataset, fit a model and evaluate it on the test part.
    Train(TrainArgs),
    /// Re-evaluate a saved model on the test part of the same split.
    Evaluate(EvaluateArgs),
    /// Print `name,probability,label` for names given as arguments or on stdin.
    Predict(PredictArgs),
    /// Write a synthetic corpus whose label follows the final letter.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV with a `gender,name,...,ratio` header.
    #[arg(long)]
    pub data: PathBuf,
    /// Keep only records whose gender ratio is at least this.
    #[arg(long, default_value_t = 0.0)]
    pub min_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// One of mlp, cnn, rnn, gru, bilstm, extra_trees, random_forest,
    /// decision_tree, knn, naive_bayes, logistic, ridge.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model_file: PathBuf,
    /// Directory for the report and confusion CSVs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    /// Names to classify; read one per line from stdin when absent.
    pub names: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Artifacts of a `train` run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Fitted,
    pub history: Option<TrainHistory>,
    pub report: MetricsReport,
    pub confusion: ConfusionMatrix,
}

fn load_split(args: &DataArgs) -> Result<(SplitCorpus, String)> {
    let corpus = load_corpus(&args.data, args.min_ratio)?;
    let digest = corpus.source_digest().to_string();
    Ok((split(&corpus, args.seed)?, digest))
}

/// Scores `model` on the test part; the only place the test part is encoded.
pub fn evaluate_on_test(model: &Fitted, parts: &SplitCorpus) -> Result<(MetricsReport, ConfusionMatrix)> {
    if parts.test.is_empty() {
        return Err(Error::EmptyPartition("test"));
    }
    let (names, labels) = encode_corpus(&parts.test)?;
    let preds: Vec<u8> = model
        .predict_proba(&names)
        .into_iter()
        .map(|p| u8::from(p >= 0.5))
        .collect();
    let y: Vec<u8> = labels.iter().map(|&v| v as u8).collect();
    let cm = confusion(&preds, &y)?;
    Ok((scores(&cm)?.labeled(model.kind().name(), "test"), cm))
}

fn write_report(dir: &Path, report: &MetricsReport, cm: &ConfusionMatrix) -> Result<()> {
    std::fs::write(dir.join(REPORT_FILE), crate::metrics::reports_to_csv(std::slice::from_ref(report)))?;
    std::fs::write(dir.join(CONFUSION_FILE), cm.to_csv())?;
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutcome> {
    let kind: Kind = args.model.parse()?;
    let config = TrainConfig {
        lr: args.lr,
        batch_size: args.batch_size,
        max_epochs: args.epochs,
        patience: args.patience,
        seed: args.data.seed,
    };
    config.validate()?;
    let (parts, digest) = load_split(&args.data)?;
    info!(
        "split {} / {} / {} records",
        parts.train.len(),
        parts.validation.len(),
        parts.test.len()
    );
    let (model, history) = fit(kind, &parts, &config)?;
    let (report, cm) = evaluate_on_test(&model, &parts)?;
    std::fs::create_dir_all(&args.out)?;
    model
        .to_file(args.data.seed, &digest, args.data.min_ratio)
        .save(&args.out.join(MODEL_FILE))?;
    if let Some(h) = &history {
        std::fs::write(args.out.join(HISTORY_FILE), h.to_csv())?;
    }
    write_report(&args.out, &report, &cm)?;
    Ok(TrainOutcome {
        model,
        history,
        report,
        confusion: cm,
    })
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(MetricsReport, ConfusionMatrix)> {
    let file = ModelFile::load(&args.model_file)?;
    let model = Fitted::from_file(&file)?;
    let (parts, digest) = load_split(&args.data)?;
    if digest != file.corpus_digest {
        return Err(Error::SeedMismatch(format!(
            "model was trained on corpus {} but the dataset digest is {digest}",
            file.corpus_digest
        )));
    }
    if file.seed != args.data.seed || file.min_ratio != args.data.min_ratio {
        return Err(Error::SeedMismatch(format!(
            "model was trained with seed {} and min ratio {}, not seed {} and min ratio {}",
            file.seed, file.min_ratio, args.data.seed, args.data.min_ratio
        )));
    }
    let (report, cm) = evaluate_on_test(&model, &parts)?;
    std::fs::create_dir_all(&args.out)?;
    write_report(&args.out, &report, &cm)?;
    Ok((report, cm))
}

/// Writes one CSV line per name and returns how many names failed.
pub fn cmd_predict(model: &Fitted, names: &[String], out: impl Write) -> Result<usize> {
    let vocab = Vocabulary::standard();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let mut failed = 0;
    let mut encoded = Vec::new();
    let mut slots = Vec::with_capacity(names.len());
    for raw in names {
        match normalize_name(raw).and_then(|n| encode(&n, &vocab)) {
            Ok(e) => {
                slots.push(Ok(encoded.len()));
                encoded.push(e);
            }
            Err(e) => slots.push(Err(e)),
        }
    }
    let probs = model.predict_proba(&encoded);
    for (raw, slot) in names.iter().zip(slots) {
        match slot {
            Ok(i) => {
                let p = probs[i];
                w.write_record([raw.trim(), &format!("{p:.6}"), if p >= 0.5 { "1" } else { "0" }])?;
            }
            Err(e) => {
                failed += 1;
                w.write_record([raw.as_str(), "error", &e.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(failed)
}

fn report_line(report: &MetricsReport) -> String {
    format!("{}\n{}", MetricsReport::CSV_HEADER, report.csv_row())
}

fn configure_threads() {
    if let Some(n) = std::env::var("NOMINA_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    configure_threads();
    let stdout = std::io::stdout();
    match cli.command {
        Command::Train(args) => {
            let outcome = cmd_train(&args)?;
            writeln!(stdout.lock(), "{}", report_line(&outcome.report))?;
        }
        Command::Evaluate(args) => {
            let (report, _) = cmd_evaluate(&args)?;
            writeln!(stdout.lock(), "{}", report_line(&report))?;
        }
        Command::Predict(args) => {
            let model = Fitted::from_file(&ModelFile::load(&args.model_file)?)?;
            let names = if args.names.is_empty() {
                std::io::stdin()
                    .lock()
                    .lines()
                    .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
                    .collect::<std::io::Result<Vec<_>>>()?
            } else {
                args.names
            };
            if cmd_predict(&model, &names, stdout.lock())? > 0 {
                return Ok(1);
            }
        }
        Command::Synth(args) => {
            let corpus = synth_corpus(args.count, args.seed);
            match args.out {
                Some(path) => corpus.write_csv(&path)?,
                None => stdout.lock().write_all(&corpus.to_csv_bytes())?,
            }
        }
    }
    Ok(0)
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: kind={} message={}", e.kind(), e);
            2
        }
    }
}

//! The `jargon` command line: one subcommand per pipeline stage plus an
//! interactive annotation loop.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 invalid input.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::load_documents;
use crate::dataset::{
    append_annotation, binarize_rating, dataset_stats, load_annotations, splits_for, stats_csv, AnnotationRecord,
    InfoNeed,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_all, evaluate_llm, train_individual, training_size_sweep, EvalReport, TrainSettings};
use crate::features::{feature_csv, read_feature_csv, FeatureRow};
use crate::llm::{extract_terms_llm, ChatCache, ChatClient, ClientConfig, HttpTransport};
use crate::pipeline::{featurize, load_study, Study};
use crate::report::{csv_field, read_meta, write_artifact};

#[derive(Debug, Parser)]
#[command(name = "jargon", version, about = "Personalized jargon familiarity prediction")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "run.toml")]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured worker count.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Format of the summary printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate inputs, build corpora, and write dataset statistics.
    Ingest,
    /// Write features.csv, reusing rows from a previous run with the same config.
    Featurize,
    /// Fit one model per annotator and target on the training split.
    Train,
    /// Individual and mixed models, coefficient frequencies, the sweep, and enabled prompt strategies.
    Eval,
    /// Training-size sweep for every configured target.
    Sweep,
    /// Configured prompt strategies over each annotator's test terms.
    Llm,
    /// Top-10 significant terms per abstract from the chat model.
    ExtractTerms {
        /// Restrict to these abstracts.
        #[arg(long = "abstract")]
        abstracts: Vec<String>,
    },
    /// Rate terms interactively, appending validated records.
    Annotate {
        #[arg(long)]
        annotator: String,
        /// Candidate terms (extract-terms output); defaults to <out>/extracted_terms.jsonl.
        #[arg(long)]
        terms: Option<PathBuf>,
        /// Annotation file to append to; defaults to paths.annotations.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Merge eval and llm reports into one summary.
    Report,
}

/// Runs the CLI against the process's standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdin = std::io::stdin();
    run_with_io(argv, &mut stdin.lock(), &mut std::io::stdout(), &mut std::io::stderr())
}

/// Runs the CLI with explicit streams and returns the exit code.
pub fn run_with_io<I, T>(argv: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    2
                }
            };
        }
    };
    match execute(&cli, input, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_validation() {
                3
            } else {
                1
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = RunConfig::load(&cli.config).map_err(|e| e.in_stage("config"))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(w) = cli.workers {
        config.workers = w.max(1);
    }
    if let Some(o) = &cli.out {
        config.paths.out_dir = std::env::current_dir().map_err(|e| Error::io(".", e))?.join(o);
    }
    Ok(config)
}

fn execute(cli: &Cli, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let config = load_config(cli)?;
    let emit = |out: &mut dyn Write, text: &str| -> Result<()> {
        out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
    };
    match &cli.command {
        Command::Ingest => {
            let study = load_study(&config)?;
            for w in &study.warnings {
                let _ = writeln!(err, "warning: {w:?}");
            }
            let stats = dataset_stats(&study.records, &study.abstract_domains()).map_err(|e| e.in_stage("ingest"))?;
            let csv = stats_csv(&stats);
            write_artifact(
                &config.out_dir().join("dataset_stats.csv"),
                &csv,
                &config.config_hash(),
                config.seed,
            )?;
            let _ = writeln!(
                err,
                "ingest: {} abstracts, {} readers, {} annotations",
                study.abstracts.len(),
                study.readers.len(),
                study.records.len()
            );
            emit(out, &render(cli.format, &csv, &stats)?)
        }
        Command::Featurize => {
            let study = load_study(&config)?;
            let rows = features(&study, err)?;
            let _ = writeln!(err, "featurize: {} rows", rows.len());
            Ok(())
        }
        Command::Train => train(cli, &config, out, err),
        Command::Eval => {
            let study = load_study(&config)?;
            let rows = features(&study, err)?;
            let client = if config.llm.enabled {
                Some(llm_client(&config)?)
            } else {
                None
            };
            let report = evaluate_all(&study, &rows, client.as_ref())?;
            report.write(&config.out_dir(), "eval")?;
            emit(out, &render(cli.format, &report.macro_csv(), &report)?)
        }
        Command::Sweep => {
            let study = load_study(&config)?;
            let rows = features(&study, err)?;
            let report = sweep(&study, &rows)?;
            write_artifact(
                &config.out_dir().join("sweep.csv"),
                &report.sweep_csv(),
                &report.config_hash,
                report.seed,
            )?;
            emit(out, &render(cli.format, &report.sweep_csv(), &report.sweep)?)
        }
        Command::Llm => {
            let study = load_study(&config)?;
            let client = llm_client(&config)?;
            let report = llm(&study, &client).map_err(|e| e.in_stage("llm"))?;
            report.write(&config.out_dir(), "llm")?;
            emit(out, &render(cli.format, &report.macro_csv(), &report)?)
        }
        Command::ExtractTerms { abstracts } => {
            let found = extract_terms(&config, abstracts).map_err(|e| e.in_stage("extract-terms"))?;
            let text = found
                .iter()
                .map(serde_json::to_string)
                .collect::<std::result::Result<Vec<_>, _>>()?
                .join("\n")
                + "\n";
            write_artifact(
                &config.out_dir().join("extracted_terms.jsonl"),
                &text,
                &config.config_hash(),
                config.seed,
            )?;
            let mut csv = String::from("abstract_id,rank,term\n");
            for e in &found {
                for (i, t) in e.terms.iter().enumerate() {
                    csv.push_str(&format!("{},{},{}\n", csv_field(&e.abstract_id), i + 1, csv_field(t)));
                }
            }
            emit(out, &render(cli.format, &csv, &found)?)
        }
        Command::Annotate {
            annotator,
            terms,
            output,
        } => {
            let terms = terms
                .clone()
                .unwrap_or_else(|| config.out_dir().join("extracted_terms.jsonl"));
            let target = output
                .clone()
                .unwrap_or_else(|| config.resolve(&config.paths.annotations));
            let n = annotate(&config, annotator, &terms, &target, input, out).map_err(|e| e.in_stage("annotate"))?;
            let _ = writeln!(err, "annotate: {n} record(s) written to {}", target.display());
            Ok(())
        }
        Command::Report => {
            let summary = merge_reports(&config.out_dir()).map_err(|e| e.in_stage("report"))?;
            let csv = summary_csv(&summary);
            write_artifact(
                &config.out_dir().join("summary.csv"),
                &csv,
                &config.config_hash(),
                config.seed,
            )?;
            crate::report::write_file(
                &config.out_dir().join("summary.json"),
                &(serde_json::to_string_pretty(&summary)? + "\n"),
            )?;
            emit(out, &render(cli.format, &csv, &summary)?)
        }
    }
}

fn render<T: Serialize>(format: Format, csv: &str, value: &T) -> Result<String> {
    Ok(match format {
        Format::Csv => csv.to_string(),
        Format::Json => serde_json::to_string_pretty(value)? + "\n",
    })
}

/// Feature rows for the study, resuming from `<out>/features.csv` when it was
/// written under the same config hash, and rewriting it.
pub fn features(study: &Study, err: &mut dyn Write) -> Result<Vec<FeatureRow>> {
    let config = &study.config;
    let hash = config.config_hash();
    let path = config.out_dir().join("features.csv");
    let existing = match read_meta(&path) {
        Some(m) if m.config_hash == hash && path.exists() => read_feature_csv(&path, study.schema())?,
        _ => vec![],
    };
    if !existing.is_empty() {
        let _ = writeln!(
            err,
            "featurize: reusing {} rows from {}",
            existing.len(),
            path.display()
        );
    }
    let rows = featurize(study, existing)?;
    write_artifact(&path, &feature_csv(study.schema(), &rows)?, &hash, config.seed)?;
    Ok(rows)
}

fn train(cli: &Cli, config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let study = load_study(config)?;
    let rows = features(&study, err)?;
    let run = || -> Result<Vec<ModelSummary>> {
        let splits = splits_for(
            &study.records,
            config.split.mode,
            config.split.train_fraction,
            config.seed,
        )?;
        let settings = TrainSettings::new(study.schema(), &config.model);
        let hash = config.config_hash();
        let pool = study.thread_pool()?;
        let mut summary = Vec::new();
        for target in config.eval.parsed_targets()? {
            let fitted: Vec<_> = pool.install(|| {
                splits
                    .par_iter()
                    .map(|(a, split)| Ok((a, train_individual(a, &rows, split, target, &settings, config.seed)?)))
                    .collect::<Result<Vec<_>>>()
            })?;
            for (a, f) in fitted {
                let path = config
                    .out_dir()
                    .join("models")
                    .join(target.name())
                    .join(format!("{a}.json"));
                write_artifact(&path, &(f.model.to_json()? + "\n"), &hash, config.seed)?;
                summary.push(ModelSummary {
                    target: target.name(),
                    annotator_id: a.clone(),
                    lambda: f.model.lambda,
                    train_size: f.train_keys.len(),
                    nonzero_coefficients: f.model.nonzero_coefficients(settings.eps).len(),
                    iterations: f.model.convergence.iterations,
                    converged: f.model.convergence.tolerance_met,
                });
            }
        }
        Ok(summary)
    };
    let summary = run().map_err(|e| e.in_stage("train"))?;
    let mut csv = String::from("target,annotator_id,lambda,train_size,nonzero_coefficients,iterations,converged\n");
    for m in &summary {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_field(&m.target),
            csv_field(&m.annotator_id),
            m.lambda,
            m.train_size,
            m.nonzero_coefficients,
            m.iterations,
            m.converged
        ));
    }
    write_artifact(
        &config.out_dir().join("models.csv"),
        &csv,
        &config.config_hash(),
        config.seed,
    )?;
    out.write_all(render(cli.format, &csv, &summary)?.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

#[derive(Debug, Clone, Serialize)]
struct ModelSummary {
    target: String,
    annotator_id: String,
    lambda: f64,
    train_size: usize,
    nonzero_coefficients: usize,
    iterations: usize,
    converged: bool,
}

fn sweep(study: &Study, rows: &[FeatureRow]) -> Result<EvalReport> {
    let run = || -> Result<EvalReport> {
        let config = &study.config;
        let splits = splits_for(
            &study.records,
            config.split.mode,
            config.split.train_fraction,
            config.seed,
        )?;
        let settings = TrainSettings::new(study.schema(), &config.model);
        let pool = study.thread_pool()?;
        let mut report = EvalReport::new(config);
        for target in config.eval.parsed_targets()? {
            report.sweep.extend(pool.install(|| {
                training_size_sweep(
                    rows,
                    &splits,
                    target,
                    &config.eval.sweep_sizes,
                    config.eval.sweep_seeds,
                    &settings,
                    config.seed,
                    config.eval.mixed,
                )
            })?);
        }
        Ok(report)
    };
    run().map_err(|e| e.in_stage("sweep"))
}

/// A chat client for the configured endpoint, backed by the on-disk cache.
pub fn llm_client(config: &RunConfig) -> Result<ChatClient> {
    let cache = ChatCache::open(&config.cache_path())?;
    let transport = Arc::new(HttpTransport::new(
        config.llm.endpoint.clone(),
        Duration::from_secs(config.llm.timeout_secs),
    ));
    Ok(ChatClient::new(
        ClientConfig::from_settings(&config.llm),
        transport,
        cache,
    ))
}

/// Every configured strategy for every target.
pub fn llm(study: &Study, client: &ChatClient) -> Result<EvalReport> {
    let config = &study.config;
    if config.llm.strategies.is_empty() {
        return Err(Error::Config("llm.strategies is empty".into()));
    }
    let splits = splits_for(
        &study.records,
        config.split.mode,
        config.split.train_fraction,
        config.seed,
    )?;
    let pool = study.thread_pool()?;
    let mut report = EvalReport::new(config);
    for target in config.eval.parsed_targets()? {
        for spec in &config.llm.strategies {
            report
                .results
                .extend(pool.install(|| evaluate_llm(study, &splits, spec, target, client))?);
        }
    }
    report.finish();
    Ok(report)
}

/// One line of `extracted_terms.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedTerms {
    pub abstract_id: String,
    pub terms: Vec<String>,
}

fn extract_terms(config: &RunConfig, only: &[String]) -> Result<Vec<ExtractedTerms>> {
    let docs = load_documents(&config.resolve(&config.paths.abstracts))?;
    let wanted: HashSet<&String> = only.iter().collect();
    if let Some(missing) = only.iter().find(|id| !docs.iter().any(|d| &&d.doc_id == id)) {
        return Err(Error::Validation(format!("unknown abstract {missing}")));
    }
    let docs: Vec<_> = docs
        .into_iter()
        .filter(|d| wanted.is_empty() || wanted.contains(&d.doc_id))
        .collect();
    let client = llm_client(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        docs.par_iter()
            .map(|d| {
                Ok(ExtractedTerms {
                    abstract_id: d.doc_id.clone(),
                    terms: extract_terms_llm(d, &client)?,
                })
            })
            .collect()
    })
}

fn prompt_line(input: &mut dyn BufRead, out: &mut dyn Write, prompt: &str) -> Result<Option<String>> {
    let _ = write!(out, "{prompt}");
    let _ = out.flush();
    let mut line = String::new();
    let n = input.read_line(&mut line).map_err(|e| Error::io("<stdin>", e))?;
    Ok((n > 0).then(|| line.trim().to_string()))
}

fn parse_needs(text: &str) -> Option<BTreeSet<InfoNeed>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<InfoNeed>().ok())
        .collect()
}

/// Shows each unrated (abstract, term) pair and appends the collected record.
/// Invalid ratings or need lists are asked again; `q` or end of input stops.
fn annotate(
    config: &RunConfig,
    annotator: &str,
    terms_path: &Path,
    target: &Path,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<usize> {
    if annotator.trim().is_empty() {
        return Err(Error::Validation("annotator id must not be empty".into()));
    }
    let docs: BTreeMap<String, _> = load_documents(&config.resolve(&config.paths.abstracts))?
        .into_iter()
        .map(|d| (d.doc_id.clone(), d))
        .collect();
    let text = std::fs::read_to_string(terms_path).map_err(|_| Error::MissingPath(terms_path.to_path_buf()))?;
    let candidates: Vec<ExtractedTerms> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<std::result::Result<_, _>>()?;
    let existing: Vec<AnnotationRecord> = if target.exists() {
        load_annotations(target)?
    } else {
        vec![]
    };
    let done: HashSet<(String, String)> = existing
        .iter()
        .filter(|r| r.annotator_id == annotator)
        .map(|r| (r.abstract_id.clone(), r.term.clone()))
        .collect();
    let mut written = 0;
    for entry in &candidates {
        let doc = docs
            .get(&entry.abstract_id)
            .ok_or_else(|| Error::Validation(format!("unknown abstract {}", entry.abstract_id)))?;
        for term in &entry.terms {
            if done.contains(&(entry.abstract_id.clone(), term.clone())) {
                continue;
            }
            let _ = writeln!(out, "\n{}\n{}\n\nTerm: {term}", doc.title, doc.abstract_text);
            let rating = loop {
                match prompt_line(input, out, "Familiarity (1-5, q to quit): ")? {
                    None => return Ok(written),
                    Some(s) if s == "q" => return Ok(written),
                    Some(s) => match s.parse::<i64>().ok().filter(|r| binarize_rating(*r).is_ok()) {
                        Some(r) => break r as u8,
                        None => {
                            let _ = writeln!(out, "Please enter a whole number from 1 to 5.");
                        }
                    },
                }
            };
            let needs = loop {
                match prompt_line(
                    input,
                    out,
                    "Needs (comma-separated: definition, background, example; empty for none): ",
                )? {
                    None => return Ok(written),
                    Some(s) => match parse_needs(&s) {
                        Some(n) => break n,
                        None => {
                            let _ = writeln!(out, "Unknown need; use definition, background or example.");
                        }
                    },
                }
            };
            append_annotation(
                target,
                &AnnotationRecord {
                    annotator_id: annotator.to_string(),
                    abstract_id: entry.abstract_id.clone(),
                    term: term.clone(),
                    rating,
                    needs,
                },
            )?;
            written += 1;
        }
    }
    Ok(written)
}

/// Macro F1 rows gathered from the eval and llm reports in an output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sources: Vec<SummarySource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySource {
    pub report: String,
    pub config_hash: String,
    pub seed: u64,
    pub macro_f1: Vec<crate::eval::MacroF1>,
}

fn merge_reports(dir: &Path) -> Result<Summary> {
    let mut sources = Vec::new();
    for name in ["eval_report.json", "llm_report.json"] {
        let p = dir.join(name);
        if let Ok(text) = std::fs::read_to_string(&p) {
            let r: EvalReport = serde_json::from_str(&text)?;
            sources.push(SummarySource {
                report: name.to_string(),
                config_hash: r.config_hash,
                seed: r.seed,
                macro_f1: r.macro_f1,
            });
        }
    }
    if sources.is_empty() {
        return Err(Error::MissingPath(dir.join("eval_report.json")));
    }
    Ok(Summary { sources })
}

fn summary_csv(s: &Summary) -> String {
    let mut csv = String::from("report,config_hash,seed,target,configuration,mean_f1,annotators\n");
    for src in &s.sources {
        for m in &src.macro_f1 {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                src.report,
                src.config_hash,
                src.seed,
                csv_field(&m.target),
                csv_field(&m.configuration),
                m.mean_f1,
                m.annotators
            ));
        }
    }
    csv
}

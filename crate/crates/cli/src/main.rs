use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use evidence_core::answerer::{AnswererConfig, Backend, LexicalBaseline};
use evidence_core::assessment::{assess_answer, DurationUnits};
use evidence_core::document_model::normalize_html_named;
use evidence_core::embeddings::WordVectorTable;
use evidence_core::evaluation::{
    error_report, load_annotations, quality_reports, render_error_table, render_quality_table,
};
use evidence_core::metric_catalog::load_catalog;
use evidence_core::pipelines::{Extractor, PipelineKind};
use evidence_core::records::{parse_records_jsonl, EvidenceRecord};
use evidence_core::text_prep::StopwordList;
use evidence_core::{Error, NormalizationOptions, PolicyDocument, Result};
use evidence_server::ServiceConfig;

#[derive(Debug, Parser)]
#[command(
    name = "evidence",
    version,
    about = "Evidence extraction and assessment for policy documents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Structure an HTML policy document into sections.
    Normalize {
        input: PathBuf,
        /// Write the document JSON here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run extraction pipelines and print one evidence record per line.
    Extract {
        doc: PathBuf,
        catalog: PathBuf,
        #[arg(long, value_enum)]
        pipeline: PipelineArg,
        /// Word vector table, required by the similarity pipelines.
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "lexical")]
        answerer: AnswererArg,
        /// Answering endpoint for `--answerer remote`.
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Score records against annotated spans.
    Evaluate {
        records: PathBuf,
        annotations: PathBuf,
        doc: PathBuf,
    },
    /// Break reviewed records down by error category.
    Report { records: PathBuf },
    /// Start the REST service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum PipelineArg {
    WholeDoc,
    Keyword,
    Score,
    Similarity,
    SimilarityScore,
    All,
}

impl PipelineArg {
    fn kinds(self) -> Vec<PipelineKind> {
        match self {
            PipelineArg::WholeDoc => vec![PipelineKind::WholeDoc],
            PipelineArg::Keyword => vec![PipelineKind::Keyword],
            PipelineArg::Score => vec![PipelineKind::Score],
            PipelineArg::Similarity => vec![PipelineKind::Similarity],
            PipelineArg::SimilarityScore => vec![PipelineKind::SimilarityScore],
            PipelineArg::All => PipelineKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AnswererArg {
    Lexical,
    Remote,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_backend() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Normalize { input, output } => normalize(&input, output.as_deref()),
        Command::Extract {
            doc,
            catalog,
            pipeline,
            vectors,
            answerer,
            endpoint,
        } => extract(&doc, &catalog, pipeline, vectors.as_deref(), answerer, endpoint),
        Command::Evaluate {
            records,
            annotations,
            doc,
        } => evaluate(&records, &annotations, &doc),
        Command::Report { records } => report(&records),
        Command::Serve { config } => evidence_server::run_blocking(ServiceConfig::load(config)?),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_stdout(text: &str) -> Result<()> {
    std::io::stdout()
        .lock()
        .write_all(text.as_bytes())
        .map_err(|e| Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        })
}

fn load_document(path: &Path) -> Result<PolicyDocument> {
    let doc: PolicyDocument = serde_json::from_str(&read(path)?).map_err(|e| Error::Parse {
        what: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    doc.validate()?;
    Ok(doc)
}

fn normalize(input: &Path, output: Option<&Path>) -> Result<()> {
    let name = input
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let doc = normalize_html_named(&read(input)?, &NormalizationOptions::default(), &name)?;
    let mut json = serde_json::to_string_pretty(&doc)?;
    json.push('\n');
    match output {
        Some(path) => std::fs::write(path, json).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => write_stdout(&json),
    }
}

/// `SOURCE_DATE_EPOCH`, when set, pins timestamps and zeroes durations so
/// that repeated runs print identical bytes.
fn reproducible_time() -> Result<Option<DateTime<Utc>>> {
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => {
            let secs: i64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("SOURCE_DATE_EPOCH={v:?}")))?;
            DateTime::from_timestamp(secs, 0)
                .map(Some)
                .ok_or_else(|| Error::InvalidConfig(format!("SOURCE_DATE_EPOCH={v:?}")))
        }
        Err(_) => Ok(None),
    }
}

fn extract(
    doc: &Path,
    catalog: &Path,
    pipeline: PipelineArg,
    vectors: Option<&Path>,
    answerer: AnswererArg,
    endpoint: Option<String>,
) -> Result<()> {
    let doc = load_document(doc)?;
    let catalog = load_catalog(catalog)?;
    let vectors = vectors.map(WordVectorTable::load).transpose()?;
    let config = AnswererConfig {
        backend: match answerer {
            AnswererArg::Lexical => Backend::LexicalBaseline,
            AnswererArg::Remote => Backend::Remote,
        },
        endpoint_url: endpoint,
        ..AnswererConfig::default()
    };
    let answerer = match config.backend {
        Backend::LexicalBaseline => {
            config.validate()?;
            Box::new(LexicalBaseline::from_config(&config))
        }
        Backend::Remote => config.build()?,
    };
    let stopwords = StopwordList::english();
    let mut extractor = Extractor::new(answerer.as_ref(), stopwords);
    if let Some(v) = &vectors {
        extractor = extractor.with_vectors(v);
    }
    let pinned = reproducible_time()?;
    let units = DurationUnits::default();

    let mut metrics: Vec<_> = catalog.metrics.iter().collect();
    metrics.sort_by(|a, b| a.name.cmp(&b.name));
    let mut out = String::new();
    for metric in metrics {
        for kind in pipeline.kinds() {
            let mut result = extractor.run(kind, &doc, metric)?;
            if pinned.is_some() {
                result.duration_ms = 0;
            }
            let hint = assess_answer(metric, &result.answer.text, result.answer.answerable, &units)?;
            let record = EvidenceRecord::new(result, hint, pinned.unwrap_or_else(Utc::now));
            out.push_str(&serde_json::to_string(&record)?);
            out.push('\n');
        }
    }
    write_stdout(&out)
}

fn evaluate(records: &Path, annotations: &Path, doc: &Path) -> Result<()> {
    let doc = load_document(doc)?;
    let records = parse_records_jsonl(&read(records)?)?;
    let annotations = load_annotations(annotations, &doc, None)?;
    for m in &annotations.unknown_metrics {
        log::warn!("annotation metric {m:?} has no records");
    }
    let results: Vec<_> = records
        .iter()
        .filter(|r| r.doc_id == doc.doc_id)
        .map(EvidenceRecord::extraction)
        .collect();
    if results.len() < records.len() {
        log::warn!("{} record(s) belong to other documents", records.len() - results.len());
    }
    let reports = quality_reports(&results, &[annotations]);
    let column = if doc.title.is_empty() {
        doc.doc_id.clone()
    } else {
        doc.title.clone()
    };
    write_stdout(&render_quality_table(&[(column, reports)]))
}

fn report(records: &Path) -> Result<()> {
    let records = parse_records_jsonl(&read(records)?)?;
    write_stdout(&render_error_table(&error_report(&records)))
}

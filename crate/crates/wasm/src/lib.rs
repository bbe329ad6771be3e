//! Browser bindings. Every export takes and returns strings; structured
//! results are JSON.

use evidence_core::answerer::LexicalBaseline;
use evidence_core::assessment::{assess_answer, AssessmentHint, DurationUnits};
use evidence_core::document_model::render_highlighted;
use evidence_core::embeddings::WordVectorTable;
use evidence_core::evaluation::{error_report_from_counts, render_error_table, CategoryCounts, ErrorReport};
use evidence_core::metric_catalog::parse_catalog;
use evidence_core::pipelines::{ExtractionResult, Extractor, PipelineKind};
use evidence_core::text_prep::StopwordList;
use evidence_core::{normalize_html, Error, NormalizationOptions, PolicyDocument, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> std::result::Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

fn options(json: &str) -> Result<NormalizationOptions> {
    if json.trim().is_empty() {
        return Ok(NormalizationOptions::default());
    }
    let options: NormalizationOptions = serde_json::from_str(json)?;
    options.validate()?;
    Ok(options)
}

/// Normalizes `html`; `options_json` may be empty for defaults.
pub fn normalize_document(html: &str, options_json: &str) -> Result<PolicyDocument> {
    normalize_html(html, &options(options_json)?)
}

#[wasm_bindgen]
pub fn normalize(html: &str, options_json: &str) -> std::result::Result<String, JsError> {
    to_json(&normalize_document(html, options_json).map_err(js)?)
}

#[derive(Debug, Serialize)]
pub struct DemoResult {
    pub result: ExtractionResult,
    pub assessment: AssessmentHint,
    /// The document with the answer marked, or plain when unanswerable.
    pub highlighted_html: String,
}

#[derive(Debug, Serialize)]
pub struct DemoRun {
    pub doc: PolicyDocument,
    pub results: Vec<DemoResult>,
    /// Pipelines that could not run, with the reason.
    pub skipped: Vec<(PipelineKind, String)>,
}

/// Runs `pipeline` (a pipeline name or `all`) for the first metric of
/// `catalog_json` with the lexical baseline. `vectors` may be empty, in which
/// case similarity pipelines are skipped.
pub fn run_pipelines(html: &str, catalog_json: &str, vectors: &str, pipeline: &str) -> Result<DemoRun> {
    let doc = normalize_html(html, &NormalizationOptions::default())?;
    let catalog = parse_catalog(catalog_json)?;
    let metric = catalog
        .metrics
        .first()
        .ok_or_else(|| Error::InvalidConfig("catalog has no metrics".into()))?;
    let kinds = match pipeline {
        "all" => PipelineKind::ALL.to_vec(),
        name => vec![name.parse()?],
    };
    let table = if vectors.trim().is_empty() {
        None
    } else {
        Some(WordVectorTable::parse(vectors)?)
    };
    let answerer = LexicalBaseline::default();
    let mut extractor = Extractor::new(&answerer, StopwordList::english());
    if let Some(t) = &table {
        extractor = extractor.with_vectors(t);
    }

    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for kind in kinds {
        if kind.needs_vectors() && table.is_none() {
            skipped.push((kind, "no word vectors loaded".to_string()));
            continue;
        }
        let result = extractor.run(kind, &doc, metric)?;
        let assessment = assess_answer(
            metric,
            &result.answer.text,
            result.answer.answerable,
            &DurationUnits::default(),
        )?;
        let highlighted_html = if result.answer.answerable && result.answer.end_offset > result.answer.start_offset {
            render_highlighted(&doc, (result.answer.start_offset, result.answer.end_offset))?
        } else {
            doc.to_html()
        };
        results.push(DemoResult {
            result,
            assessment,
            highlighted_html,
        });
    }
    Ok(DemoRun { doc, results, skipped })
}

#[wasm_bindgen]
pub fn extract(html: &str, catalog_json: &str, vectors: &str, pipeline: &str) -> std::result::Result<String, JsError> {
    to_json(&run_pipelines(html, catalog_json, vectors, pipeline).map_err(js)?)
}

#[derive(Debug, Serialize)]
pub struct DemoReport {
    pub report: ErrorReport,
    pub table: String,
}

pub fn category_report(no_error: usize, partial: usize, false_or_other: usize, not_in_document: usize) -> DemoReport {
    let report = error_report_from_counts(CategoryCounts {
        no_error,
        partial_matching: partial,
        false_or_other_error: false_or_other,
        not_in_document,
    });
    let table = render_error_table(&report);
    DemoReport { report, table }
}

#[wasm_bindgen]
pub fn error_report(
    no_error: u32,
    partial: u32,
    false_or_other: u32,
    not_in_document: u32,
) -> std::result::Result<String, JsError> {
    to_json(&category_report(
        no_error as usize,
        partial as usize,
        false_or_other as usize,
        not_in_document as usize,
    ))
}

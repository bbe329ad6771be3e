//! Scoring pipelines against annotated spans, and the reviewer error report.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::answerer::Answer;
use crate::document_model::PolicyDocument;
use crate::error::{Error, Result};
use crate::metric_catalog::Catalog;
use crate::pipelines::{ExtractionResult, PipelineKind};
use crate::records::{ErrorCategory, EvidenceRecord};
use crate::text_prep::tokenize;

pub const ANNOTATION_HEADER: [&str; 4] = ["metric_name", "start_offset", "end_offset", "text"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSpan {
    pub start_offset: usize,
    pub end_offset: usize,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub doc_id: String,
    pub entries: BTreeMap<String, Vec<AnnotatedSpan>>,
    /// Annotated metric names missing from the catalog they were checked
    /// against. They are kept in `entries`.
    #[serde(default)]
    pub unknown_metrics: Vec<String>,
}

fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

fn escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

impl AnnotationSet {
    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn spans(&self, metric_name: &str) -> &[AnnotatedSpan] {
        self.entries.get(metric_name).map(Vec::as_slice).unwrap_or_default()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = ANNOTATION_HEADER.join("\t");
        out.push('\n');
        for (metric, spans) in &self.entries {
            for s in spans {
                let _ = writeln!(
                    out,
                    "{metric}\t{}\t{}\t{}",
                    s.start_offset,
                    s.end_offset,
                    escape(&s.text)
                );
            }
        }
        out
    }
}

/// Parses annotation TSV and checks every span against `doc`. In the text
/// column `\n`, `\t` and `\\` are escapes.
pub fn parse_annotations(contents: &str, doc: &PolicyDocument, catalog: Option<&Catalog>) -> Result<AnnotationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .flexible(true)
        .from_reader(contents.as_bytes());
    let parse_err = |line: usize, message: String| Error::Parse {
        what: "annotations".into(),
        line,
        message,
    };

    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if header.iter().map(str::trim).ne(ANNOTATION_HEADER) {
        return Err(parse_err(
            1,
            format!("expected header {:?}", ANNOTATION_HEADER.join("\t")),
        ));
    }

    let mut set = AnnotationSet {
        doc_id: doc.doc_id.clone(),
        ..AnnotationSet::default()
    };
    let mut unknown = BTreeSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", row.len())));
        }
        let offset = |i: usize| {
            row[i]
                .trim()
                .parse::<usize>()
                .map_err(|e| parse_err(line, format!("{}: {e}", ANNOTATION_HEADER[i])))
        };
        let metric = row[0].trim().to_string();
        let (start, end) = (offset(1)?, offset(2)?);
        let text = unescape(&row[3]);
        if start >= end || end > doc.text_len() {
            return Err(Error::InvalidAnnotation {
                line,
                message: format!("span {start}..{end} outside document of length {}", doc.text_len()),
            });
        }
        let actual = doc.slice(start, end)?;
        if actual != text {
            return Err(Error::SpanTextMismatch {
                line,
                recorded: text,
                actual: actual.to_string(),
            });
        }
        if catalog.is_some_and(|c| c.get(&metric).is_none()) && unknown.insert(metric.clone()) {
            log::warn!("annotation line {line}: metric {metric:?} is not in the catalog");
        }
        set.entries.entry(metric).or_default().push(AnnotatedSpan {
            start_offset: start,
            end_offset: end,
            text,
        });
    }
    set.unknown_metrics = unknown.into_iter().collect();
    Ok(set)
}

pub fn load_annotations(
    path: impl AsRef<Path>,
    doc: &PolicyDocument,
    catalog: Option<&Catalog>,
) -> Result<AnnotationSet> {
    let path = path.as_ref();
    let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&contents, doc, catalog)
}

fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().map(|t| t.surface.to_lowercase()).collect()
}

/// True iff the answer shares at least one token with some annotated span.
/// Tokens are compared case-insensitively; stop words count.
pub fn is_correct(answer: &Answer, spans: &[AnnotatedSpan]) -> bool {
    if !answer.answerable {
        return false;
    }
    let ours = token_set(&answer.text);
    spans.iter().any(|s| !ours.is_disjoint(&token_set(&s.text)))
}

fn token_counts(text: &str) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for t in tokenize(text) {
        *m.entry(t.surface.to_lowercase()).or_insert(0) += 1;
    }
    m
}

/// Overlap F1 between answer and span token multisets (stricter than
/// [`is_correct`]).
pub fn token_f1(answer: &str, span: &str) -> f64 {
    let (a, b) = (token_counts(answer), token_counts(span));
    let overlap: usize = a.iter().map(|(t, n)| (*n).min(*b.get(t).unwrap_or(&0))).sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / a.values().sum::<usize>() as f64;
    let recall = overlap as f64 / b.values().sum::<usize>() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub pipeline: PipelineKind,
    pub correct_count: usize,
    pub total_annotated: usize,
    pub score: f64,
    /// Mean best token F1 over annotated metrics. Supplementary; not part of
    /// the correct/total score.
    pub mean_token_f1: f64,
}

/// Correctly retrieved over annotated metrics for one pipeline. Each
/// (document, annotated metric) pair counts once; a missing result counts as
/// incorrect, metrics without annotations are ignored.
pub fn quality_score(
    pipeline: PipelineKind,
    results: &[ExtractionResult],
    annotations: &[AnnotationSet],
) -> QualityReport {
    let mut by_key: HashMap<(&str, &str), Vec<&Answer>> = HashMap::new();
    for r in results.iter().filter(|r| r.pipeline == pipeline) {
        by_key
            .entry((r.doc_id.as_str(), r.metric_name.as_str()))
            .or_default()
            .push(&r.answer);
    }
    let (mut correct, mut total, mut f1_sum) = (0usize, 0usize, 0.0f64);
    for set in annotations {
        for (metric, spans) in set.entries.iter().filter(|(_, s)| !s.is_empty()) {
            total += 1;
            let answers = by_key
                .get(&(set.doc_id.as_str(), metric.as_str()))
                .map(Vec::as_slice)
                .unwrap_or_default();
            if answers.iter().any(|a| is_correct(a, spans)) {
                correct += 1;
            }
            f1_sum += answers
                .iter()
                .filter(|a| a.answerable)
                .flat_map(|a| spans.iter().map(|s| token_f1(&a.text, &s.text)))
                .fold(0.0, f64::max);
        }
    }
    let ratio = |x: f64| if total == 0 { 0.0 } else { x / total as f64 };
    QualityReport {
        pipeline,
        correct_count: correct,
        total_annotated: total,
        score: ratio(correct as f64),
        mean_token_f1: ratio(f1_sum),
    }
}

/// One report per pipeline, in canonical pipeline order.
pub fn quality_reports(results: &[ExtractionResult], annotations: &[AnnotationSet]) -> Vec<QualityReport> {
    PipelineKind::ALL
        .into_iter()
        .map(|p| quality_score(p, results, annotations))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub no_error: usize,
    pub partial_matching: usize,
    pub false_or_other_error: usize,
    pub not_in_document: usize,
}

impl CategoryCounts {
    pub fn get(&self, c: ErrorCategory) -> usize {
        match c {
            ErrorCategory::NoError => self.no_error,
            ErrorCategory::PartialMatching => self.partial_matching,
            ErrorCategory::FalseOrOtherError => self.false_or_other_error,
            ErrorCategory::NotInDocument => self.not_in_document,
        }
    }

    pub fn add(&mut self, c: ErrorCategory, n: usize) {
        match c {
            ErrorCategory::NoError => self.no_error += n,
            ErrorCategory::PartialMatching => self.partial_matching += n,
            ErrorCategory::FalseOrOtherError => self.false_or_other_error += n,
            ErrorCategory::NotInDocument => self.not_in_document += n,
        }
    }

    pub fn total(&self) -> usize {
        ErrorCategory::ALL.into_iter().map(|c| self.get(c)).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryPercentages {
    pub no_error: f64,
    pub partial_matching: f64,
    pub false_or_other_error: f64,
    pub not_in_document: f64,
}

impl CategoryPercentages {
    pub fn get(&self, c: ErrorCategory) -> f64 {
        match c {
            ErrorCategory::NoError => self.no_error,
            ErrorCategory::PartialMatching => self.partial_matching,
            ErrorCategory::FalseOrOtherError => self.false_or_other_error,
            ErrorCategory::NotInDocument => self.not_in_document,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub counts: CategoryCounts,
    pub total: usize,
    /// Share of each category in percent (0–100).
    pub percentages: CategoryPercentages,
    /// NoError / (total − NotInDocument) in percent; partial matches count as
    /// wrong. Absent when every record is NotInDocument or there are none.
    pub filtered_accuracy: Option<f64>,
    /// Records without a reviewer category; excluded from everything above.
    pub unreviewed: usize,
}

pub fn error_report_from_counts(counts: CategoryCounts) -> ErrorReport {
    let total = counts.total();
    let pct = |n: usize| {
        if total == 0 {
            0.0
        } else {
            100.0 * n as f64 / total as f64
        }
    };
    let considered = total - counts.not_in_document;
    ErrorReport {
        counts,
        total,
        percentages: CategoryPercentages {
            no_error: pct(counts.no_error),
            partial_matching: pct(counts.partial_matching),
            false_or_other_error: pct(counts.false_or_other_error),
            not_in_document: pct(counts.not_in_document),
        },
        filtered_accuracy: (considered > 0).then(|| 100.0 * counts.no_error as f64 / considered as f64),
        unreviewed: 0,
    }
}

pub fn error_report(records: &[EvidenceRecord]) -> ErrorReport {
    let mut counts = CategoryCounts::default();
    let mut unreviewed = 0;
    for r in records {
        match r.reviewer_category {
            Some(c) => counts.add(c, 1),
            None => unreviewed += 1,
        }
    }
    if unreviewed > 0 {
        log::warn!("{unreviewed} record(s) without a reviewer category left out of the error report");
    }
    ErrorReport {
        unreviewed,
        ..error_report_from_counts(counts)
    }
}

/// Aligned text table: one row per pipeline, one score column per document.
pub fn render_quality_table(columns: &[(String, Vec<QualityReport>)]) -> String {
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("Approach".to_string())
        .chain(columns.iter().map(|(name, _)| format!("{name} Score")))
        .collect()];
    for p in PipelineKind::ALL {
        let mut row = vec![p.label().to_string()];
        for (_, reports) in columns {
            row.push(
                reports
                    .iter()
                    .find(|r| r.pipeline == p)
                    .map_or_else(|| "-".to_string(), |r| format!("{:.2}", r.score)),
            );
        }
        rows.push(row);
    }
    align(&rows)
}

pub fn render_error_table(report: &ErrorReport) -> String {
    let mut rows = vec![vec!["Category".to_string(), "Count".to_string(), "%".to_string()]];
    for c in ErrorCategory::ALL {
        rows.push(vec![
            c.label().to_string(),
            report.counts.get(c).to_string(),
            format!("{:.2}", report.percentages.get(c)),
        ]);
    }
    rows.push(vec!["Total".to_string(), report.total.to_string(), String::new()]);
    let mut out = align(&rows);
    let considered = report.total - report.counts.not_in_document;
    match report.filtered_accuracy {
        Some(acc) => {
            let _ = writeln!(out, "Accuracy: {}/{} = {:.2}%", report.counts.no_error, considered, acc);
        }
        None => out.push_str("Accuracy: n/a\n"),
    }
    if report.unreviewed > 0 {
        let _ = writeln!(out, "Unreviewed records: {}", report.unreviewed);
    }
    out
}

/// First column left-aligned, the rest right-aligned.
fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|i| {
            rows.iter()
                .filter_map(|r| r.get(i))
                .map(|c| c.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document_model::{normalize_html, NormalizationOptions};

    fn answer(text: &str) -> Answer {
        Answer {
            text: text.into(),
            start_offset: 0,
            end_offset: text.chars().count(),
            score: 0.9,
            answerable: true,
        }
    }

    fn span(text: &str) -> AnnotatedSpan {
        AnnotatedSpan {
            start_offset: 0,
            end_offset: text.chars().count(),
            text: text.into(),
        }
    }

    #[test]
    fn correctness_examples() {
        let ann = [span(
            "The password needs to be changed after a maximum time duration of 60 days",
        )];
        assert!(is_correct(&answer("60 days"), &ann));
        assert!(is_correct(&answer("30 days"), &[span("60 days")]));
        assert!(!is_correct(&answer("twelve characters"), &[span("60 days")]));
        assert!(!is_correct(&Answer::unanswerable(0.9), &ann));
        assert!(is_correct(&answer("DAYS."), &[span("60 days")]));
    }

    #[test]
    fn table_four_arithmetic() {
        let r = error_report_from_counts(CategoryCounts {
            no_error: 68,
            partial_matching: 11,
            false_or_other_error: 8,
            not_in_document: 31,
        });
        assert_eq!(r.total, 118);
        for (got, want) in [
            (r.percentages.no_error, 57.63),
            (r.percentages.partial_matching, 9.32),
            (r.percentages.false_or_other_error, 6.78),
            (r.percentages.not_in_document, 26.27),
        ] {
            assert!((got - want).abs() <= 0.01, "{got} vs {want}");
        }
        assert!((r.filtered_accuracy.unwrap() - 78.16).abs() <= 0.01);
        let table = render_error_table(&r);
        assert!(table.contains("57.63") && table.contains("68/87 = 78.16%"), "{table}");
    }

    #[test]
    fn empty_and_degenerate_reports() {
        let r = error_report_from_counts(CategoryCounts::default());
        assert_eq!(r.filtered_accuracy, None);
        let r = error_report_from_counts(CategoryCounts {
            no_error: 4,
            ..Default::default()
        });
        assert_eq!(r.percentages.no_error, 100.0);
        assert_eq!(r.filtered_accuracy, Some(100.0));
    }

    #[test]
    fn token_f1_values() {
        assert_eq!(token_f1("60 days", "60 days"), 1.0);
        assert_eq!(token_f1("x", "y"), 0.0);
        assert!((token_f1("60 days", "after 60 days") - 0.8).abs() < 1e-12);
    }

    #[test]
    fn annotations_parse_and_validate() {
        let doc = normalize_html(
            "<h1>Password</h1><p>Change it every 60 days.</p>",
            &NormalizationOptions::default(),
        )
        .unwrap();
        let start = doc.full_text.find("60 days").unwrap();
        let tsv = format!(
            "metric_name\tstart_offset\tend_offset\ttext\nM\t{start}\t{}\t60 days\n",
            start + 7
        );
        let set = parse_annotations(&tsv, &doc, None).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.spans("M")[0].text, "60 days");
        assert_eq!(parse_annotations(&set.to_tsv(), &doc, None).unwrap(), set);

        let empty = parse_annotations("metric_name\tstart_offset\tend_offset\ttext\n", &doc, None).unwrap();
        assert!(empty.is_empty());

        let bad = format!(
            "metric_name\tstart_offset\tend_offset\ttext\nM\t{start}\t{}\t30 days\n",
            start + 7
        );
        assert!(matches!(
            parse_annotations(&bad, &doc, None),
            Err(Error::SpanTextMismatch { line: 2, .. })
        ));
        assert!(matches!(
            parse_annotations("a\tb\n", &doc, None),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn escapes_round_trip() {
        for s in ["a\tb", "line\nbreak", "back\\slash", "plain"] {
            assert_eq!(unescape(&escape(s)), s);
        }
    }
}

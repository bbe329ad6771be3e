//! The five evidence-extraction strategies.
//!
//! Each pipeline maps (document, metric, answerer) to one [`ExtractionResult`]
//! whose answer offsets are global offsets into the document's `full_text`.
//! Ranked pipelines record a [`SectionScore`] for every section so that the
//! choice of winner can be audited afterwards. Ties always go to the earliest
//! section.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::answerer::{Answer, Answerer};
use crate::document_model::{PolicyDocument, Section};
use crate::embeddings::{cosine, sentence_vector, WordVectorTable};
use crate::error::{Error, Result};
use crate::metric_catalog::{prepare_keywords, Metric};
use crate::text_prep::{content_lemmas, StopwordList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    WholeDoc,
    Keyword,
    Score,
    Similarity,
    SimilarityScore,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 5] = [
        PipelineKind::WholeDoc,
        PipelineKind::Keyword,
        PipelineKind::Score,
        PipelineKind::Similarity,
        PipelineKind::SimilarityScore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::WholeDoc => "whole_doc",
            PipelineKind::Keyword => "keyword",
            PipelineKind::Score => "score",
            PipelineKind::Similarity => "similarity",
            PipelineKind::SimilarityScore => "similarity_score",
        }
    }

    /// Human-readable name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            PipelineKind::WholeDoc => "Whole-doc",
            PipelineKind::Keyword => "Keyword-based",
            PipelineKind::Score => "Score-based",
            PipelineKind::Similarity => "Similarity-based",
            PipelineKind::SimilarityScore => "Similarity + score-based",
        }
    }

    pub fn needs_vectors(self) -> bool {
        matches!(self, PipelineKind::Similarity | PipelineKind::SimilarityScore)
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PipelineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown pipeline {s:?}")))
    }
}

/// Per-section record of what a ranked pipeline saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionScore {
    pub section_id: String,
    pub model_score: Option<f64>,
    pub similarity: Option<f64>,
    /// Whether the answerer found an answer in this section (absent when it
    /// was not asked).
    pub answerable: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub metric_name: String,
    pub doc_id: String,
    pub pipeline: PipelineKind,
    pub answer: Answer,
    pub winning_section_id: Option<String>,
    pub section_scores: Vec<SectionScore>,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    /// When the prepared keywords are empty, the similarity pipelines fall
    /// back to the score pipeline instead of failing with `EmptyKeywords`.
    pub empty_keywords_fallback: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            empty_keywords_fallback: true,
        }
    }
}

struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    started: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            started: std::time::Instant::now(),
        }
    }

    fn elapsed_ms(&self) -> u64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.started.elapsed().as_millis() as u64
        }
        #[cfg(target_arch = "wasm32")]
        {
            0
        }
    }
}

fn result(
    doc: &PolicyDocument,
    metric: &Metric,
    pipeline: PipelineKind,
    answer: Answer,
    winning_section_id: Option<String>,
    section_scores: Vec<SectionScore>,
    clock: &Stopwatch,
) -> ExtractionResult {
    ExtractionResult {
        metric_name: metric.name.clone(),
        doc_id: doc.doc_id.clone(),
        pipeline,
        answer,
        winning_section_id,
        section_scores,
        duration_ms: clock.elapsed_ms(),
    }
}

fn section_containing(doc: &PolicyDocument, answer: &Answer) -> Option<String> {
    answer
        .answerable
        .then(|| doc.section_at(answer.start_offset))
        .flatten()
        .map(|s| s.section_id.clone())
}

/// Answers `question` against every section, in section order.
fn answer_sections(sections: &[Section], question: &str, answerer: &dyn Answerer) -> Result<Vec<Answer>> {
    let ask = |s: &Section| -> Result<Answer> { Ok(answerer.answer(question, &s.text())?.shifted(s.start_offset)) };
    #[cfg(feature = "parallel")]
    let answers: Vec<Result<Answer>> = {
        use rayon::prelude::*;
        sections.par_iter().map(ask).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let answers: Vec<Result<Answer>> = sections.iter().map(ask).collect();
    answers.into_iter().collect()
}

/// Index of the first maximum among `Some` entries.
fn first_argmax(values: impl IntoIterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn no_answer(answers: &[Answer]) -> Answer {
    let score = answers.iter().map(|a| a.score).fold(f64::INFINITY, f64::min);
    Answer::unanswerable(if score.is_finite() { score } else { 1.0 })
}

/// Whole document as a single context.
pub fn extract_whole_doc(doc: &PolicyDocument, metric: &Metric, answerer: &dyn Answerer) -> Result<ExtractionResult> {
    let clock = Stopwatch::start();
    let answer = answerer.answer(&metric.description, &doc.full_text)?;
    let winner = section_containing(doc, &answer);
    Ok(result(
        doc,
        metric,
        PipelineKind::WholeDoc,
        answer,
        winner,
        Vec::new(),
        &clock,
    ))
}

/// Lemmatized, stop-word-free heading lemmas.
pub fn heading_lemmas(section: &Section, stopwords: &StopwordList) -> BTreeSet<String> {
    content_lemmas(&section.heading, stopwords).into_iter().collect()
}

/// A contiguous piece of the keyword context and where it sits in the document.
#[derive(Debug, Clone, Copy)]
struct Segment {
    context_start: usize,
    doc_start: usize,
    len: usize,
}

/// Sections whose heading lemmas intersect the prepared keywords, sent as one
/// context. Falls back to the whole document when nothing matches.
pub fn extract_keyword(
    doc: &PolicyDocument,
    metric: &Metric,
    answerer: &dyn Answerer,
    stopwords: &StopwordList,
) -> Result<ExtractionResult> {
    let clock = Stopwatch::start();
    let keywords = prepare_keywords(metric, stopwords);
    let relevant: Vec<&Section> = doc
        .sections
        .iter()
        .filter(|s| !heading_lemmas(s, stopwords).is_disjoint(&keywords.lemmas))
        .collect();
    if relevant.is_empty() {
        let mut r = extract_whole_doc(doc, metric, answerer)?;
        r.pipeline = PipelineKind::Keyword;
        r.duration_ms = clock.elapsed_ms();
        return Ok(r);
    }

    // Adjacent sections are already separated by a blank line in full_text,
    // so they form one segment.
    let mut segments: Vec<Segment> = Vec::new();
    let mut context = String::new();
    let mut context_len = 0;
    for s in relevant {
        let len = s.end_offset - s.start_offset;
        if let Some(last) = segments.last_mut() {
            let gap = s.start_offset - (last.doc_start + last.len);
            if gap == 2 {
                last.len += gap + len;
            } else {
                segments.push(Segment {
                    context_start: context_len + 2,
                    doc_start: s.start_offset,
                    len,
                });
            }
            context.push_str("\n\n");
            context_len += 2;
        } else {
            segments.push(Segment {
                context_start: 0,
                doc_start: s.start_offset,
                len,
            });
        }
        context.push_str(&s.text());
        context_len += len;
    }

    let answer = answerer.answer(&metric.description, &context)?;
    let answer = remap_answer(doc, answer, &segments)?;
    let winner = section_containing(doc, &answer);
    Ok(result(
        doc,
        metric,
        PipelineKind::Keyword,
        answer,
        winner,
        Vec::new(),
        &clock,
    ))
}

/// Maps a context-relative answer to document offsets. A span running past the
/// end of its segment is clipped there.
fn remap_answer(doc: &PolicyDocument, answer: Answer, segments: &[Segment]) -> Result<Answer> {
    if !answer.answerable {
        return Ok(answer);
    }
    let seg = segments
        .iter()
        .rev()
        .find(|s| s.context_start <= answer.start_offset)
        .copied()
        .ok_or_else(|| Error::RemoteMalformedResponse("answer outside context".into()))?;
    let local_start = answer.start_offset - seg.context_start;
    let local_end = (answer.end_offset - seg.context_start).min(seg.len);
    if local_start >= local_end {
        // Starts inside a separator: nothing of the document is covered.
        return Ok(Answer::unanswerable(1.0 - answer.score));
    }
    let start = seg.doc_start + local_start;
    let end = seg.doc_start + local_end;
    Ok(Answer {
        text: doc.slice(start, end)?.to_string(),
        start_offset: start,
        end_offset: end,
        ..answer
    })
}

/// One answerer call per section; the highest-scoring answerable section wins.
pub fn extract_score(doc: &PolicyDocument, metric: &Metric, answerer: &dyn Answerer) -> Result<ExtractionResult> {
    let clock = Stopwatch::start();
    let answers = answer_sections(&doc.sections, &metric.description, answerer)?;
    let scores: Vec<SectionScore> = doc
        .sections
        .iter()
        .zip(&answers)
        .map(|(s, a)| SectionScore {
            section_id: s.section_id.clone(),
            model_score: Some(a.score),
            similarity: None,
            answerable: Some(a.answerable),
        })
        .collect();
    let winner = first_argmax(answers.iter().map(|a| a.answerable.then_some(a.score)));
    let (answer, winner_id) = match winner {
        Some(i) => (answers[i].clone(), Some(doc.sections[i].section_id.clone())),
        None => (no_answer(&answers), None),
    };
    Ok(result(
        doc,
        metric,
        PipelineKind::Score,
        answer,
        winner_id,
        scores,
        &clock,
    ))
}

fn section_similarities(
    doc: &PolicyDocument,
    keyword_lemmas: &[String],
    stopwords: &StopwordList,
    vectors: &WordVectorTable,
) -> Result<Vec<f64>> {
    let query = sentence_vector(keyword_lemmas, vectors);
    doc.sections
        .iter()
        .map(|s| cosine(&query, &sentence_vector(&content_lemmas(&s.text(), stopwords), vectors)))
        .collect()
}

/// The section most similar to the metric keywords wins; only that section is
/// sent to the answerer.
pub fn extract_similarity(
    doc: &PolicyDocument,
    metric: &Metric,
    answerer: &dyn Answerer,
    stopwords: &StopwordList,
    vectors: &WordVectorTable,
    options: &PipelineOptions,
) -> Result<ExtractionResult> {
    let clock = Stopwatch::start();
    let keywords = prepare_keywords(metric, stopwords);
    if keywords.is_empty() {
        return empty_keyword_fallback(doc, metric, answerer, options, PipelineKind::Similarity);
    }
    let sims = section_similarities(doc, &keywords.as_vec(), stopwords, vectors)?;
    let winner = first_argmax(sims.iter().copied().map(Some)).expect("documents have sections");
    let section = &doc.sections[winner];
    let answer = answerer
        .answer(&metric.description, &section.text())?
        .shifted(section.start_offset);
    let scores = doc
        .sections
        .iter()
        .zip(&sims)
        .enumerate()
        .map(|(i, (s, sim))| SectionScore {
            section_id: s.section_id.clone(),
            model_score: (i == winner).then_some(answer.score),
            similarity: Some(*sim),
            answerable: (i == winner).then_some(answer.answerable),
        })
        .collect();
    Ok(result(
        doc,
        metric,
        PipelineKind::Similarity,
        answer,
        Some(section.section_id.clone()),
        scores,
        &clock,
    ))
}

/// Model score plus cosine similarity per answerable section; the highest sum
/// wins.
pub fn extract_similarity_score(
    doc: &PolicyDocument,
    metric: &Metric,
    answerer: &dyn Answerer,
    stopwords: &StopwordList,
    vectors: &WordVectorTable,
    options: &PipelineOptions,
) -> Result<ExtractionResult> {
    let clock = Stopwatch::start();
    let keywords = prepare_keywords(metric, stopwords);
    if keywords.is_empty() {
        return empty_keyword_fallback(doc, metric, answerer, options, PipelineKind::SimilarityScore);
    }
    let sims = section_similarities(doc, &keywords.as_vec(), stopwords, vectors)?;
    let answers = answer_sections(&doc.sections, &metric.description, answerer)?;
    let winner = first_argmax(
        answers
            .iter()
            .zip(&sims)
            .map(|(a, sim)| a.answerable.then_some(a.score + sim)),
    );
    let scores = doc
        .sections
        .iter()
        .zip(answers.iter().zip(&sims))
        .map(|(s, (a, sim))| SectionScore {
            section_id: s.section_id.clone(),
            model_score: Some(a.score),
            similarity: Some(*sim),
            answerable: Some(a.answerable),
        })
        .collect();
    let (answer, winner_id) = match winner {
        Some(i) => (answers[i].clone(), Some(doc.sections[i].section_id.clone())),
        None => (no_answer(&answers), None),
    };
    Ok(result(
        doc,
        metric,
        PipelineKind::SimilarityScore,
        answer,
        winner_id,
        scores,
        &clock,
    ))
}

fn empty_keyword_fallback(
    doc: &PolicyDocument,
    metric: &Metric,
    answerer: &dyn Answerer,
    options: &PipelineOptions,
    kind: PipelineKind,
) -> Result<ExtractionResult> {
    if !options.empty_keywords_fallback {
        return Err(Error::EmptyKeywords(metric.name.clone()));
    }
    log::debug!("metric {}: no usable keywords, {kind} falls back to score", metric.name);
    let mut r = extract_score(doc, metric, answerer)?;
    r.pipeline = kind;
    Ok(r)
}

/// Everything a pipeline run needs besides the document and the metric.
#[derive(Clone, Copy)]
pub struct Extractor<'a> {
    pub answerer: &'a dyn Answerer,
    pub stopwords: &'a StopwordList,
    pub vectors: Option<&'a WordVectorTable>,
    pub options: PipelineOptions,
}

impl<'a> Extractor<'a> {
    pub fn new(answerer: &'a dyn Answerer, stopwords: &'a StopwordList) -> Self {
        Self {
            answerer,
            stopwords,
            vectors: None,
            options: PipelineOptions::default(),
        }
    }

    pub fn with_vectors(mut self, vectors: &'a WordVectorTable) -> Self {
        self.vectors = Some(vectors);
        self
    }

    pub fn with_options(mut self, options: PipelineOptions) -> Self {
        self.options = options;
        self
    }

    fn vectors(&self, kind: PipelineKind) -> Result<&'a WordVectorTable> {
        self.vectors
            .ok_or_else(|| Error::InvalidConfig(format!("pipeline {kind} needs a word vector table")))
    }

    pub fn run(&self, kind: PipelineKind, doc: &PolicyDocument, metric: &Metric) -> Result<ExtractionResult> {
        match kind {
            PipelineKind::WholeDoc => extract_whole_doc(doc, metric, self.answerer),
            PipelineKind::Keyword => extract_keyword(doc, metric, self.answerer, self.stopwords),
            PipelineKind::Score => extract_score(doc, metric, self.answerer),
            PipelineKind::Similarity => extract_similarity(
                doc,
                metric,
                self.answerer,
                self.stopwords,
                self.vectors(kind)?,
                &self.options,
            ),
            PipelineKind::SimilarityScore => extract_similarity_score(
                doc,
                metric,
                self.answerer,
                self.stopwords,
                self.vectors(kind)?,
                &self.options,
            ),
        }
    }

    /// Runs all five pipelines; a failing pipeline does not stop the others.
    pub fn run_all(&self, doc: &PolicyDocument, metric: &Metric) -> Vec<(PipelineKind, Result<ExtractionResult>)> {
        PipelineKind::ALL
            .into_iter()
            .map(|k| (k, self.run(k, doc, metric)))
            .collect()
    }
}

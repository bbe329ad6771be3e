//! Answerers with fully controlled scores, for checking pipeline selection
//! logic independently of any answering heuristic.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicUsize, Ordering};

use evidence_core::answerer::{sentence_spans, Answer, Answerer};
use evidence_core::document_model::char_slice;
use evidence_core::{Error, Result};

/// The first sentence after the context's first line, or the first sentence
/// when there is only one line.
fn first_body_sentence(context: &str) -> Option<(usize, usize)> {
    let spans = sentence_spans(context);
    let first_line_end = context.chars().position(|c| c == '\n');
    spans
        .iter()
        .copied()
        .find(|(s, _)| first_line_end.is_some_and(|n| *s > n))
        .or_else(|| spans.first().copied())
}

fn answer_at(context: &str, span: (usize, usize), score: f64) -> Answer {
    Answer {
        text: char_slice(context, span.0, span.1).unwrap().to_string(),
        start_offset: span.0,
        end_offset: span.1,
        score,
        answerable: true,
    }
}

/// Scores keyed by the context's first line (a section heading).
#[derive(Debug, Default)]
pub struct TableAnswerer {
    scores: HashMap<String, (f64, bool)>,
    calls: AtomicUsize,
}

impl TableAnswerer {
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, f64, bool)>) -> Self {
        Self {
            scores: entries.into_iter().map(|(h, s, a)| (h.into(), (s, a))).collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Answerer for TableAnswerer {
    fn answer(&self, _question: &str, context: &str) -> Result<Answer> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let first_line = context.lines().next().unwrap_or_default();
        match (self.scores.get(first_line), first_body_sentence(context)) {
            (Some(&(score, true)), Some(span)) => Ok(answer_at(context, span, score)),
            (Some(&(score, _)), _) => Ok(Answer::unanswerable(score)),
            (None, _) => Ok(Answer::unanswerable(1.0)),
        }
    }
}

/// Pseudo-random but deterministic scores derived from (seed, question,
/// context). Scores are drawn from a coarse grid so ties are common.
#[derive(Debug, Clone)]
pub struct HashedAnswerer {
    pub seed: u64,
    /// Probability-like share of contexts reported answerable, in 0..=100.
    pub answerable_percent: u64,
    pub grid: u64,
}

impl HashedAnswerer {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            answerable_percent: 70,
            grid: 5,
        }
    }

    fn draw(&self, question: &str, context: &str) -> (f64, bool) {
        let mut h = DefaultHasher::new();
        (self.seed, question, context).hash(&mut h);
        let x = h.finish();
        let score = ((x % self.grid) + 1) as f64 / (self.grid + 1) as f64;
        let answerable = (x / self.grid) % 100 < self.answerable_percent;
        (score, answerable)
    }
}

impl Answerer for HashedAnswerer {
    fn answer(&self, question: &str, context: &str) -> Result<Answer> {
        if question.trim().is_empty() {
            return Err(Error::EmptyQuestion);
        }
        let (score, answerable) = self.draw(question, context);
        match first_body_sentence(context) {
            Some(span) if answerable => Ok(answer_at(context, span, score)),
            _ => Ok(Answer::unanswerable(score)),
        }
    }
}

/// Fails every call, as an unreachable backend would.
#[derive(Debug, Default)]
pub struct FailingAnswerer;

impl Answerer for FailingAnswerer {
    fn answer(&self, _question: &str, _context: &str) -> Result<Answer> {
        Err(Error::RemoteUnavailable("connection refused".into()))
    }
}

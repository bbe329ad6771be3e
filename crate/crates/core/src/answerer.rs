//! Extractive question answering behind one contract.
//!
//! Two backends implement [`Answerer`]: [`LexicalBaseline`], a deterministic
//! window-overlap scorer that needs no model, and (with the `remote` feature)
//! [`RemoteAnswerer`], which posts `{question, context}` to an inference
//! service and validates the span it returns.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::document_model::char_slice;
use crate::error::{Error, Result};
use crate::text_prep::{prepare_text, StopwordList, Token};

pub const DEFAULT_WINDOW_TOKENS: usize = 30;
pub const DEFAULT_NO_ANSWER_THRESHOLD: f64 = 0.2;
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// A span of the supplied context. Offsets count `char`s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub start_offset: usize,
    pub end_offset: usize,
    /// Confidence in `[0, 1]`. For unanswerable results this is the
    /// confidence that the context holds no answer.
    pub score: f64,
    pub answerable: bool,
}

impl Answer {
    pub fn unanswerable(no_answer_score: f64) -> Self {
        Self {
            text: String::new(),
            start_offset: 0,
            end_offset: 0,
            score: no_answer_score.clamp(0.0, 1.0),
            answerable: false,
        }
    }

    /// Moves the span by `delta` characters.
    pub fn shifted(mut self, delta: usize) -> Self {
        if self.answerable {
            self.start_offset += delta;
            self.end_offset += delta;
        }
        self
    }
}

pub trait Answerer: Send + Sync {
    /// Best answer to `question` within `context`.
    fn answer(&self, question: &str, context: &str) -> Result<Answer>;
}

impl<A: Answerer + ?Sized> Answerer for &A {
    fn answer(&self, question: &str, context: &str) -> Result<Answer> {
        (**self).answer(question, context)
    }
}

impl<A: Answerer + ?Sized> Answerer for Box<A> {
    fn answer(&self, question: &str, context: &str) -> Result<Answer> {
        (**self).answer(question, context)
    }
}

impl<A: Answerer + ?Sized> Answerer for std::sync::Arc<A> {
    fn answer(&self, question: &str, context: &str) -> Result<Answer> {
        (**self).answer(question, context)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[serde(alias = "lexical")]
    LexicalBaseline,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnswererConfig {
    pub backend: Backend,
    pub endpoint_url: Option<String>,
    pub window_tokens: usize,
    pub no_answer_threshold: f64,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for AnswererConfig {
    fn default() -> Self {
        Self {
            backend: Backend::LexicalBaseline,
            endpoint_url: None,
            window_tokens: DEFAULT_WINDOW_TOKENS,
            no_answer_threshold: DEFAULT_NO_ANSWER_THRESHOLD,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

impl AnswererConfig {
    pub fn validate(&self) -> Result<()> {
        if self.backend == Backend::Remote && self.endpoint_url.as_deref().is_none_or(str::is_empty) {
            return Err(Error::InvalidConfig("remote backend requires endpoint_url".into()));
        }
        if self.window_tokens < 5 {
            return Err(Error::InvalidConfig("window_tokens must be at least 5".into()));
        }
        if !(0.0..=1.0).contains(&self.no_answer_threshold) {
            return Err(Error::InvalidConfig("no_answer_threshold must lie in [0, 1]".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::InvalidConfig("max_in_flight must be positive".into()));
        }
        Ok(())
    }

    /// Builds the configured backend.
    pub fn build(&self) -> Result<Box<dyn Answerer>> {
        self.validate()?;
        match self.backend {
            Backend::LexicalBaseline => Ok(Box::new(LexicalBaseline::from_config(self))),
            #[cfg(feature = "remote")]
            Backend::Remote => Ok(Box::new(RemoteAnswerer::new(self)?)),
            #[cfg(not(feature = "remote"))]
            Backend::Remote => Err(Error::InvalidConfig(
                "remote backend not compiled in (enable the `remote` feature)".into(),
            )),
        }
    }
}

/// Deterministic stand-in for a reading-comprehension model.
///
/// A window of `window_tokens` tokens slides over the context with a stride of
/// half its size. A window scores the fraction of the question's content
/// lemmas it contains; the best window (earliest on ties) is kept, and the
/// answer is the shortest sentence in it containing the most matched lemmas.
#[derive(Debug, Clone)]
pub struct LexicalBaseline {
    pub window_tokens: usize,
    pub no_answer_threshold: f64,
    pub stopwords: StopwordList,
}

impl Default for LexicalBaseline {
    fn default() -> Self {
        Self {
            window_tokens: DEFAULT_WINDOW_TOKENS,
            no_answer_threshold: DEFAULT_NO_ANSWER_THRESHOLD,
            stopwords: StopwordList::default(),
        }
    }
}

impl LexicalBaseline {
    pub fn new(window_tokens: usize) -> Self {
        Self {
            window_tokens: window_tokens.max(1),
            ..Default::default()
        }
    }

    pub fn from_config(config: &AnswererConfig) -> Self {
        Self {
            window_tokens: config.window_tokens.max(1),
            no_answer_threshold: config.no_answer_threshold,
            stopwords: StopwordList::default(),
        }
    }

    pub fn with_stopwords(mut self, stopwords: StopwordList) -> Self {
        self.stopwords = stopwords;
        self
    }
}

impl Answerer for LexicalBaseline {
    fn answer(&self, question: &str, context: &str) -> Result<Answer> {
        if question.trim().is_empty() {
            return Err(Error::EmptyQuestion);
        }
        Ok(lexical_baseline_answer(
            question,
            context,
            self.window_tokens,
            self.no_answer_threshold,
            &self.stopwords,
        ))
    }
}

/// Char ranges of the sentences in `text`, trimmed of surrounding whitespace.
/// Sentences end after `.`, `!` or `?` followed by whitespace, and at newlines.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut start = 0;
    let push = |s: usize, e: usize, spans: &mut Vec<(usize, usize)>| {
        let mut s = s;
        let mut e = e;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            spans.push((s, e));
        }
    };
    for i in 0..chars.len() {
        let c = chars[i];
        if c == '\n' {
            push(start, i, &mut spans);
            start = i + 1;
        } else if matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|n| n.is_whitespace()) {
            push(start, i + 1, &mut spans);
            start = i + 1;
        }
    }
    push(start, chars.len(), &mut spans);
    spans
}

fn window_starts(n: usize, window: usize) -> Vec<usize> {
    let stride = (window / 2).max(1);
    let mut starts = Vec::new();
    let mut s = 0;
    while s < n {
        starts.push(s);
        if s + window >= n {
            break;
        }
        s += stride;
    }
    starts
}

fn matched<'t>(tokens: &'t [Token], question: &HashSet<String>) -> HashSet<&'t str> {
    tokens
        .iter()
        .filter(|t| !t.is_stopword && question.contains(&t.lemma))
        .map(|t| t.lemma.as_str())
        .collect()
}

/// The lexical baseline as a free function; see [`LexicalBaseline`].
pub fn lexical_baseline_answer(
    question: &str,
    context: &str,
    window_tokens: usize,
    no_answer_threshold: f64,
    stopwords: &StopwordList,
) -> Answer {
    let question_lemmas: HashSet<String> = prepare_text(question, stopwords)
        .into_iter()
        .filter(|t| !t.is_stopword)
        .map(|t| t.lemma)
        .collect();
    let tokens = prepare_text(context, stopwords);
    if question_lemmas.is_empty() || tokens.is_empty() {
        return Answer::unanswerable(1.0);
    }
    let window = window_tokens.max(1);
    let total = question_lemmas.len() as f64;

    let mut best: Option<(usize, usize, f64)> = None;
    for start in window_starts(tokens.len(), window) {
        let end = (start + window).min(tokens.len());
        let score = matched(&tokens[start..end], &question_lemmas).len() as f64 / total;
        if best.is_none_or(|(_, _, b)| score > b) {
            best = Some((start, end, score));
        }
    }
    let (start, end, score) = best.expect("at least one window");
    if score < no_answer_threshold || score == 0.0 {
        return Answer::unanswerable(1.0 - score);
    }

    let window_lo = tokens[start].start_offset;
    let window_hi = tokens[end - 1].end_offset;
    let mut pick: Option<(usize, usize, usize)> = None;
    for (s, e) in sentence_spans(context) {
        if e <= window_lo || s >= window_hi {
            continue;
        }
        let inside: Vec<Token> = tokens
            .iter()
            .filter(|t| t.start_offset >= s && t.end_offset <= e)
            .cloned()
            .collect();
        let count = matched(&inside, &question_lemmas).len();
        let better = match pick {
            None => true,
            Some((ps, pe, pc)) => count > pc || (count == pc && e - s < pe - ps),
        };
        if better {
            pick = Some((s, e, count));
        }
    }
    let (s, e, _) = pick.expect("window overlaps at least one sentence");
    Answer {
        text: char_slice(context, s, e).unwrap_or_default().to_string(),
        start_offset: s,
        end_offset: e,
        score,
        answerable: true,
    }
}

/// Request body of the remote answering endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub question: String,
    pub context: String,
}

/// Response body of the remote answering endpoint. `start`/`end` are char
/// offsets into the posted context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub answer: String,
    pub score: f64,
    pub start: usize,
    pub end: usize,
    pub answerable: bool,
}

impl RemoteResponse {
    /// Checks the response against the posted context.
    pub fn into_answer(self, context: &str) -> Result<Answer> {
        if !self.score.is_finite() || !(0.0..=1.0).contains(&self.score) {
            return Err(Error::RemoteMalformedResponse(format!(
                "score {} outside [0, 1]",
                self.score
            )));
        }
        if !self.answerable {
            return Ok(Answer::unanswerable(self.score));
        }
        match char_slice(context, self.start, self.end) {
            Some(span) if self.start < self.end && span == self.answer => Ok(Answer {
                text: self.answer,
                start_offset: self.start,
                end_offset: self.end,
                score: self.score,
                answerable: true,
            }),
            _ => Err(Error::RemoteMalformedResponse(format!(
                "span {}..{} does not match answer {:?}",
                self.start, self.end, self.answer
            ))),
        }
    }
}

#[cfg(feature = "remote")]
pub use remote::RemoteAnswerer;

#[cfg(feature = "remote")]
mod remote {
    use std::sync::{Condvar, Mutex};
    use std::time::Duration;

    use super::*;

    /// Counting gate bounding concurrent requests.
    #[derive(Debug)]
    struct InFlight {
        limit: usize,
        busy: Mutex<usize>,
        freed: Condvar,
    }

    struct Permit<'a>(&'a InFlight);

    impl InFlight {
        fn acquire(&self) -> Permit<'_> {
            let mut busy = self.busy.lock().unwrap_or_else(|e| e.into_inner());
            while *busy >= self.limit {
                busy = self.freed.wait(busy).unwrap_or_else(|e| e.into_inner());
            }
            *busy += 1;
            Permit(self)
        }
    }

    impl Drop for Permit<'_> {
        fn drop(&mut self) {
            let mut busy = self.0.busy.lock().unwrap_or_else(|e| e.into_inner());
            *busy -= 1;
            self.0.freed.notify_one();
        }
    }

    /// HTTP client for an external QA model.
    #[derive(Debug)]
    pub struct RemoteAnswerer {
        client: reqwest::blocking::Client,
        endpoint: String,
        timeout_ms: u64,
        gate: InFlight,
    }

    impl RemoteAnswerer {
        pub fn new(config: &AnswererConfig) -> Result<Self> {
            let endpoint = config
                .endpoint_url
                .clone()
                .filter(|u| !u.is_empty())
                .ok_or_else(|| Error::InvalidConfig("remote backend requires endpoint_url".into()))?;
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_millis(config.timeout_ms))
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            Ok(Self {
                client,
                endpoint,
                timeout_ms: config.timeout_ms,
                gate: InFlight {
                    limit: config.max_in_flight.max(1),
                    busy: Mutex::new(0),
                    freed: Condvar::new(),
                },
            })
        }

        fn map_err(&self, e: reqwest::Error) -> Error {
            if e.is_timeout() {
                Error::RemoteTimeout(self.timeout_ms)
            } else if e.is_decode() {
                Error::RemoteMalformedResponse(e.to_string())
            } else {
                Error::RemoteUnavailable(e.to_string())
            }
        }
    }

    impl Answerer for RemoteAnswerer {
        fn answer(&self, question: &str, context: &str) -> Result<Answer> {
            if question.trim().is_empty() {
                return Err(Error::EmptyQuestion);
            }
            if context.trim().is_empty() {
                return Ok(Answer::unanswerable(1.0));
            }
            let _permit = self.gate.acquire();
            let body = RemoteRequest {
                question: question.to_string(),
                context: context.to_string(),
            };
            let resp = self
                .client
                .post(&self.endpoint)
                .json(&body)
                .send()
                .map_err(|e| self.map_err(e))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(Error::RemoteUnavailable(format!("endpoint answered {status}")));
            }
            let bytes = resp.bytes().map_err(|e| self.map_err(e))?;
            let parsed: RemoteResponse =
                serde_json::from_slice(&bytes).map_err(|e| Error::RemoteMalformedResponse(e.to_string()))?;
            parsed.into_answer(context)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline() -> LexicalBaseline {
        LexicalBaseline::default()
    }

    #[test]
    fn empty_context_is_unanswerable() {
        let a = baseline().answer("What is the maximum age?", "").unwrap();
        assert!(!a.answerable);
        assert!(a.text.is_empty());
    }

    #[test]
    fn empty_question_rejected() {
        assert!(matches!(baseline().answer("  ", "text"), Err(Error::EmptyQuestion)));
    }

    #[test]
    fn disjoint_vocabulary_is_unanswerable() {
        let a = baseline()
            .answer(
                "What is the password maximum age?",
                "Backups run nightly on tape drives.",
            )
            .unwrap();
        assert!(!a.answerable);
        assert_eq!(a.score, 1.0);
    }

    #[test]
    fn full_overlap_sentence_scores_one() {
        let ctx = "Backups run nightly. The maximum password age is 60 days. Other things.";
        let a = baseline().answer("password maximum age", ctx).unwrap();
        assert!(a.answerable);
        assert_eq!(a.text, "The maximum password age is 60 days.");
        assert_eq!(a.score, 1.0);
        assert_eq!(char_slice(ctx, a.start_offset, a.end_offset), Some(a.text.as_str()));
    }

    #[test]
    fn ties_resolve_to_earliest_window() {
        let filler = " lorem".repeat(40);
        let ctx = format!("Audit logs are kept.{filler}.\nAudit logs are kept.");
        let a = LexicalBaseline::new(10).answer("audit logs", &ctx).unwrap();
        assert_eq!(a.start_offset, 0);
    }

    #[test]
    fn below_threshold_is_unanswerable() {
        // one of six question lemmas present: 1/6 < 0.2
        let a = baseline()
            .answer("alpha beta gamma delta epsilon zeta", "alpha only here.")
            .unwrap();
        assert!(!a.answerable);
        let a = baseline()
            .answer("alpha beta gamma delta epsilon", "alpha only here.")
            .unwrap();
        assert!(a.answerable);
        assert!((a.score - 0.2).abs() < 1e-12);
    }

    #[test]
    fn sentence_spans_split_on_terminators_and_newlines() {
        let text = "One. Two 4.2 three!\nFour";
        let spans: Vec<_> = sentence_spans(text)
            .into_iter()
            .map(|(s, e)| char_slice(text, s, e).unwrap())
            .collect();
        assert_eq!(spans, ["One.", "Two 4.2 three!", "Four"]);
    }

    #[test]
    fn window_layout() {
        assert_eq!(window_starts(0, 30), Vec::<usize>::new());
        assert_eq!(window_starts(10, 30), [0]);
        assert_eq!(window_starts(40, 30), [0, 15]);
        assert_eq!(window_starts(45, 30), [0, 15]);
        assert_eq!(window_starts(46, 30), [0, 15, 30]);
    }

    #[test]
    fn remote_response_validation() {
        let ctx = "Rotate keys every 90 days.";
        let ok = RemoteResponse {
            answer: "90 days".into(),
            score: 0.8,
            start: 18,
            end: 25,
            answerable: true,
        };
        let a = ok.clone().into_answer(ctx).unwrap();
        assert_eq!((a.start_offset, a.end_offset), (18, 25));
        let bad = RemoteResponse {
            start: 17,
            ..ok.clone()
        };
        assert!(matches!(bad.into_answer(ctx), Err(Error::RemoteMalformedResponse(_))));
        let bad = RemoteResponse {
            score: 1.5,
            ..ok.clone()
        };
        assert!(matches!(bad.into_answer(ctx), Err(Error::RemoteMalformedResponse(_))));
        let none = RemoteResponse {
            answerable: false,
            answer: String::new(),
            score: 0.9,
            ..ok
        };
        assert_eq!(none.into_answer(ctx).unwrap(), Answer::unanswerable(0.9));
    }

    #[test]
    fn config_validation() {
        let mut cfg = AnswererConfig::default();
        cfg.validate().unwrap();
        cfg.backend = Backend::Remote;
        assert!(cfg.validate().is_err());
        cfg.endpoint_url = Some("http://127.0.0.1:9/qa".into());
        cfg.validate().unwrap();
        cfg.window_tokens = 4;
        assert!(cfg.validate().is_err());
        let parsed: AnswererConfig = serde_json::from_str(r#"{"backend":"lexical"}"#).unwrap();
        assert_eq!(parsed.backend, Backend::LexicalBaseline);
        assert_eq!(parsed.window_tokens, 30);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn context_strategy() -> impl Strategy<Value = String> {
            proptest::collection::vec(
                prop_oneof![
                    Just("password"),
                    Just("maximum"),
                    Just("age"),
                    Just("days"),
                    Just("60"),
                    Just("the"),
                    Just("backup"),
                    Just("nightly"),
                    Just("must"),
                    Just("."),
                    Just("rotate"),
                    Just("\n"),
                ],
                0..120,
            )
            .prop_map(|w| w.join(" "))
        }

        proptest! {
            #[test]
            fn offsets_are_honest(ctx in context_strategy(), window in 5usize..40) {
                let a = LexicalBaseline::new(window).answer("What is the password maximum age?", &ctx).unwrap();
                if a.answerable {
                    prop_assert_eq!(char_slice(&ctx, a.start_offset, a.end_offset), Some(a.text.as_str()));
                    prop_assert!(a.score >= 0.2 && a.score <= 1.0);
                } else {
                    prop_assert!(a.text.is_empty());
                }
            }

            #[test]
            fn deterministic(ctx in context_strategy()) {
                let b = baseline();
                let q = "What is the password maximum age?";
                prop_assert_eq!(b.answer(q, &ctx).unwrap(), b.answer(q, &ctx).unwrap());
            }

            #[test]
            fn appending_unrelated_text_keeps_span(
                ctx in context_strategy(),
                tail in proptest::collection::vec(
                    prop_oneof![Just("backup"), Just("nightly"), Just("the"), Just("."), Just("tape")],
                    0..80,
                ),
            ) {
                let q = "What is the password maximum age?";
                let before = baseline().answer(q, &ctx).unwrap();
                let extended = format!("{ctx}\n{}", tail.join(" "));
                let after = baseline().answer(q, &extended).unwrap();
                prop_assert_eq!(before, after);
            }
        }
    }
}

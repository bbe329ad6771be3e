//! Tokenization, rule-based lemmatization and stop-word handling.
//!
//! Every downstream consumer (keyword filtering, sentence vectors, the lexical
//! answerer and the evaluation token-overlap check) goes through this module so
//! that they all agree on what a token is.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const BUNDLED_EXCEPTIONS: &str = include_str!("../data/lemma_exceptions.tsv");

static TOKEN_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\p{Alphabetic}\p{Nd}]+(?:['’\-][\p{Alphabetic}\p{Nd}]+)*").unwrap());

static DEFAULT_LEMMATIZER: LazyLock<Lemmatizer> =
    LazyLock::new(|| Lemmatizer::from_tsv(BUNDLED_EXCEPTIONS).expect("bundled lemma table"));

static DEFAULT_STOPWORDS: LazyLock<StopwordList> =
    LazyLock::new(|| StopwordList::parse(BUNDLED_STOPWORDS).expect("bundled stop-word list"));

/// A token with character offsets into the text it was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub start_offset: usize,
    pub end_offset: usize,
    pub is_stopword: bool,
}

impl Token {
    /// Numeric tokens carry target values and are exempt from lemmatization
    /// and stop-word removal.
    pub fn is_numeric(&self) -> bool {
        is_numeric(&self.surface)
    }
}

fn is_numeric(word: &str) -> bool {
    word.chars().filter(|c| c.is_alphanumeric()).all(|c| c.is_numeric())
}

/// Splits `text` into maximal alphanumeric runs (internal hyphens and
/// apostrophes allowed). Offsets are counted in `char`s.
///
/// `lemma` is the lowercased surface and `is_stopword` is false; use
/// [`prepare_text`] to get both filled in properly.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut byte_pos = 0;
    let mut char_pos = 0;
    for m in TOKEN_RE.find_iter(text) {
        char_pos += text[byte_pos..m.start()].chars().count();
        let len = m.as_str().chars().count();
        tokens.push(Token {
            surface: m.as_str().to_string(),
            lemma: m.as_str().to_lowercase(),
            start_offset: char_pos,
            end_offset: char_pos + len,
            is_stopword: false,
        });
        char_pos += len;
        byte_pos = m.end();
    }
    tokens
}

/// A set of lowercase stop words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl StopwordList {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        for w in words {
            let w = w.as_ref();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::InvalidStopword(w.to_string()));
            }
            set.insert(w.to_lowercase());
        }
        if set.is_empty() {
            return Err(Error::InvalidStopword("<empty list>".into()));
        }
        Ok(Self { words: set })
    }

    /// Parses the one-word-per-line format; `#` starts a comment line.
    pub fn parse(contents: &str) -> Result<Self> {
        Self::new(
            contents
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&contents)
    }

    /// The bundled English list.
    pub fn english() -> &'static StopwordList {
        &DEFAULT_STOPWORDS
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

impl Default for StopwordList {
    fn default() -> Self {
        DEFAULT_STOPWORDS.clone()
    }
}

/// Deterministic English lemmatizer: an exception table for irregular forms,
/// then ordered suffix rules, iterated to a fixed point.
#[derive(Debug, Clone)]
pub struct Lemmatizer {
    exceptions: HashMap<String, String>,
}

impl Lemmatizer {
    /// Parses `surface<TAB>lemma` lines. Blank lines and `#` comments are skipped.
    pub fn from_tsv(contents: &str) -> Result<Self> {
        let mut exceptions = HashMap::new();
        for (idx, line) in contents.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, lemma) = line.split_once('\t').ok_or_else(|| Error::Parse {
                what: "lemma exception table".into(),
                line: idx + 1,
                message: "expected `surface<TAB>lemma`".into(),
            })?;
            exceptions.insert(surface.trim().to_lowercase(), lemma.trim().to_lowercase());
        }
        Ok(Self { exceptions })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&contents)
    }

    pub fn english() -> &'static Lemmatizer {
        &DEFAULT_LEMMATIZER
    }

    pub fn exceptions(&self) -> impl Iterator<Item = (&str, &str)> {
        self.exceptions.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn lemmatize(&self, surface: &str) -> String {
        let mut word = strip_possessive(&surface.to_lowercase()).to_string();
        if is_numeric(&word) {
            return word;
        }
        // Each rule either shortens the word or ends it in 'e', which no rule
        // touches, so this converges quickly.
        for _ in 0..8 {
            let next = self.step(&word);
            if next == word {
                break;
            }
            word = next;
        }
        word
    }

    fn step(&self, w: &str) -> String {
        if let Some(lemma) = self.exceptions.get(w) {
            return lemma.clone();
        }
        if w.chars().count() <= 3 || is_numeric(w) {
            return w.to_string();
        }
        if let Some(stem) = w.strip_suffix("ies").or_else(|| w.strip_suffix("ied")) {
            if stem.chars().count() >= 2 {
                return format!("{stem}y");
            }
        }
        if let Some(stem) = w.strip_suffix("sses") {
            return format!("{stem}ss");
        }
        for suffix in ["xes", "ches", "shes", "zzes"] {
            if w.ends_with(suffix) {
                return w[..w.len() - 2].to_string();
            }
        }
        if ["ss", "us", "is", "'s"].iter().any(|s| w.ends_with(s)) {
            return w.to_string();
        }
        if let Some(stem) = w.strip_suffix('s') {
            return stem.to_string();
        }
        if w.ends_with("eed") {
            return w.to_string();
        }
        for suffix in ["ing", "ed"] {
            if let Some(stem) = w.strip_suffix(suffix) {
                if stem.chars().count() >= 3 && stem.chars().any(is_vowel) {
                    return repair_stem(stem);
                }
            }
        }
        w.to_string()
    }
}

fn strip_possessive(w: &str) -> &str {
    let w = w.strip_suffix("'s").or_else(|| w.strip_suffix("’s")).unwrap_or(w);
    w.trim_end_matches(['\'', '’'])
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Consonant test with the usual 'y' rule: y is a vowel after a consonant.
fn consonant_flags(word: &[char]) -> Vec<bool> {
    let mut flags: Vec<bool> = Vec::with_capacity(word.len());
    for (i, &c) in word.iter().enumerate() {
        let consonant = if is_vowel(c) {
            false
        } else if c == 'y' {
            i == 0 || !flags[i - 1]
        } else {
            true
        };
        flags.push(consonant);
    }
    flags
}

/// Number of vowel-consonant sequences in the stem.
fn measure(flags: &[bool]) -> usize {
    let mut m = 0;
    let mut seen_vowel = false;
    for &consonant in flags {
        if !consonant {
            seen_vowel = true;
        } else if seen_vowel {
            m += 1;
            seen_vowel = false;
        }
    }
    m
}

/// Repairs a stem left behind by stripping -ing / -ed.
fn repair_stem(stem: &str) -> String {
    let chars: Vec<char> = stem.chars().collect();
    let n = chars.len();
    let flags = consonant_flags(&chars);
    let last = chars[n - 1];

    if n >= 2 && chars[n - 2] == last && flags[n - 1] && !matches!(last, 'l' | 's' | 'z') {
        return chars[..n - 1].iter().collect();
    }
    if ["at", "bl", "iz", "yz"].iter().any(|s| stem.ends_with(s)) || matches!(last, 'v' | 'u' | 'c') {
        return format!("{stem}e");
    }
    let cvc = n >= 3 && flags[n - 3] && !flags[n - 2] && flags[n - 1] && !matches!(last, 'w' | 'x' | 'y');
    if cvc && measure(&flags) == 1 {
        return format!("{stem}e");
    }
    stem.to_string()
}

/// Lemmatizes with the bundled exception table.
pub fn lemmatize(token_surface: &str) -> String {
    DEFAULT_LEMMATIZER.lemmatize(token_surface)
}

fn flag_stopword(token: &Token, stopwords: &StopwordList) -> bool {
    if token.is_numeric() {
        return false;
    }
    stopwords.contains(&token.lemma) || stopwords.contains(&token.surface.to_lowercase())
}

/// Keeps tokens that are not stop words, preserving order.
pub fn remove_stopwords(tokens: Vec<Token>, stopwords: &StopwordList) -> Vec<Token> {
    tokens.into_iter().filter(|t| !flag_stopword(t, stopwords)).collect()
}

/// Tokenizes and fills in `lemma` and `is_stopword` for every token.
pub fn prepare_text(text: &str, stopwords: &StopwordList) -> Vec<Token> {
    prepare_text_with(text, stopwords, &DEFAULT_LEMMATIZER)
}

pub fn prepare_text_with(text: &str, stopwords: &StopwordList, lemmatizer: &Lemmatizer) -> Vec<Token> {
    let mut tokens = tokenize(text);
    for t in &mut tokens {
        t.lemma = lemmatizer.lemmatize(&t.surface);
        t.is_stopword = flag_stopword(t, stopwords);
    }
    tokens
}

/// Lemmas of the non-stop-word tokens of `text`, in order (duplicates kept).
pub fn content_lemmas(text: &str, stopwords: &StopwordList) -> Vec<String> {
    prepare_text(text, stopwords)
        .into_iter()
        .filter(|t| !t.is_stopword)
        .map(|t| t.lemma)
        .collect()
}

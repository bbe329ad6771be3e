//! Repairs converter-emitted HTML into an offset-addressable list of sections.
//!
//! The input is typically produced by a PDF-to-HTML converter: headings may be
//! missing their tags, split over several lines, or only recognizable by font
//! size and weight; every page may repeat the same header and footer; and the
//! first pages often hold a table of contents. [`normalize_html`] turns such
//! markup into a [`PolicyDocument`]:
//!
//! 1. the DOM is flattened into styled lines, tracking page breaks,
//! 2. repeated header/footer lines and table-of-contents runs are dropped,
//! 3. short large-font or bold lines are promoted to headings and
//!    consecutive heading fragments with the same style are merged,
//! 4. wrapped body lines are joined into paragraphs and everything is laid out
//!    into `full_text`, with each section's character range recorded.
//!
//! All offsets count Unicode scalar values (`char`s) of `full_text`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use scraper::{ElementRef, Html, Node};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const SECTION_SEPARATOR: &str = "\n\n";
const MAX_LEVEL: u8 = 6;

static CSS_CLASS_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\.([A-Za-z0-9_-]+)\s*\{([^}]*)\}").unwrap());
static FONT_SIZE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)font-size\s*:\s*([0-9]*\.?[0-9]+)").unwrap());
static FONT_WEIGHT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)font-weight\s*:\s*(bold|bolder|[6-9]00)").unwrap());
static ABSOLUTE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)position\s*:\s*absolute").unwrap());
static PAGE_ID_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^page\d+(-div)?$").unwrap());
// A line ending in a page number, optionally after dot leaders.
static TOC_LINE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\p{Alphabetic}.*?(?:\s*(?:\.\s?){2,}|\s*…+|\s)\s*\d{1,4}$").unwrap());
static TOC_TITLE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^(table of )?contents:?$").unwrap());
static NUMBERED_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d+(\.\d+)*\.?|[A-Z]\.|[IVX]+\.)\s").unwrap());

/// Knobs for heading repair and boilerplate stripping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationOptions {
    /// A line is "big" when its font size is at least this multiple of the
    /// median body font size.
    pub big_font_ratio: f64,
    pub treat_bold_as_heading: bool,
    pub max_heading_chars: usize,
    pub strip_toc: bool,
    pub strip_repeated_header_footer: bool,
}

impl Default for NormalizationOptions {
    fn default() -> Self {
        Self {
            big_font_ratio: 1.15,
            treat_bold_as_heading: true,
            max_heading_chars: 120,
            strip_toc: true,
            strip_repeated_header_footer: true,
        }
    }
}

impl NormalizationOptions {
    pub fn validate(&self) -> Result<()> {
        if self.big_font_ratio.is_nan() || self.big_font_ratio <= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "big_font_ratio must be > 1.0, got {}",
                self.big_font_ratio
            )));
        }
        if self.max_heading_chars == 0 {
            return Err(Error::InvalidConfig("max_heading_chars must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub section_id: String,
    /// Empty for the preamble before the first heading.
    pub heading: String,
    pub level: u8,
    /// Paragraphs separated by `\n`.
    pub body: String,
    pub start_offset: usize,
    pub end_offset: usize,
}

impl Section {
    /// Heading and body as laid out in `full_text`.
    pub fn text(&self) -> String {
        match (self.heading.is_empty(), self.body.is_empty()) {
            (true, _) => self.body.clone(),
            (false, true) => self.heading.clone(),
            (false, false) => format!("{}\n{}", self.heading, self.body),
        }
    }

    /// Offset in `full_text` where the body starts.
    pub fn body_offset(&self) -> usize {
        if self.heading.is_empty() {
            self.start_offset
        } else {
            self.start_offset + self.heading.chars().count() + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub doc_id: String,
    pub title: String,
    pub sections: Vec<Section>,
    pub full_text: String,
    #[serde(default)]
    pub source_name: String,
}

impl PolicyDocument {
    /// Number of `char`s in `full_text`.
    pub fn text_len(&self) -> usize {
        self.full_text.chars().count()
    }

    /// `full_text[start..end)` in char offsets.
    pub fn slice(&self, start: usize, end: usize) -> Result<&str> {
        char_slice(&self.full_text, start, end).ok_or(Error::SpanOutOfRange {
            start,
            end,
            len: self.text_len(),
        })
    }

    pub fn section(&self, section_id: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.section_id == section_id)
    }

    /// The section whose range contains `offset`.
    pub fn section_at(&self, offset: usize) -> Option<&Section> {
        self.sections
            .iter()
            .find(|s| s.start_offset <= offset && offset < s.end_offset)
    }

    /// Checks every structural invariant; used when a document is read back
    /// from JSON.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedInput(msg));
        let mut ids = HashSet::new();
        let mut prev_end = 0;
        for s in &self.sections {
            if !ids.insert(s.section_id.as_str()) {
                return bad(format!("duplicate section id {}", s.section_id));
            }
            if s.start_offset >= s.end_offset {
                return bad(format!("section {} has an empty range", s.section_id));
            }
            if s.start_offset < prev_end {
                return bad(format!("section {} overlaps its predecessor", s.section_id));
            }
            if s.level == 0 {
                return bad(format!("section {} has level 0", s.section_id));
            }
            let text = self.slice(s.start_offset, s.end_offset)?;
            if text != s.text() {
                return bad(format!("section {} does not match full_text", s.section_id));
            }
            prev_end = s.end_offset;
        }
        Ok(())
    }

    /// Serializes back to plain HTML that [`normalize_html`] reads into the
    /// same section list.
    pub fn to_html(&self) -> String {
        build_html(self, None)
    }
}

/// `s[start..end)` counted in chars.
pub fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let begin = indices.nth(start)?;
    let finish = if end == start {
        begin
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&s[begin..finish])
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Style {
    font_size: Option<f64>,
    bold: bool,
    tag_level: Option<u8>,
    positioned: bool,
}

#[derive(Debug, Default)]
struct RawLine {
    runs: Vec<(String, Style)>,
    page: usize,
    block: usize,
    container: usize,
    /// Follows a `<br>` inside the same block element.
    soft_break: bool,
}

#[derive(Debug, Clone)]
struct Line {
    text: String,
    page: usize,
    block: usize,
    container: usize,
    soft_break: bool,
    positioned: bool,
    font_size: Option<f64>,
    bold: bool,
    tag_level: Option<u8>,
}

struct Flattener<'a> {
    css: &'a HashMap<String, Style>,
    lines: Vec<RawLine>,
    current: RawLine,
    page: usize,
    next_block: usize,
    next_container: usize,
}

const BLOCK_TAGS: &[&str] = &[
    "p",
    "div",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "li",
    "ul",
    "ol",
    "table",
    "tr",
    "td",
    "th",
    "section",
    "article",
    "header",
    "footer",
    "blockquote",
    "pre",
    "body",
    "nav",
    "main",
    "dl",
    "dt",
    "dd",
    "figure",
    "figcaption",
    "caption",
    "address",
    "aside",
];
const SKIP_TAGS: &[&str] = &["head", "script", "style", "noscript", "template", "title"];

impl<'a> Flattener<'a> {
    fn new(css: &'a HashMap<String, Style>) -> Self {
        Self {
            css,
            lines: Vec::new(),
            current: RawLine::default(),
            page: 0,
            next_block: 1,
            next_container: 0,
        }
    }

    fn flush(&mut self, soft: bool) {
        let block = self.current.block;
        let container = self.current.container;
        let finished = std::mem::take(&mut self.current);
        if finished.runs.iter().any(|(t, _)| !t.trim().is_empty()) {
            self.lines.push(finished);
        }
        self.current.page = self.page;
        self.current.container = container;
        self.current.block = block;
        self.current.soft_break = soft;
    }

    fn start_block(&mut self, container: usize) {
        self.flush(false);
        self.current.block = self.next_block;
        self.current.container = container;
        self.next_block += 1;
    }

    fn page_break(&mut self) {
        self.flush(false);
        self.page += 1;
        self.current.page = self.page;
    }

    fn style_for(&self, el: &ElementRef<'_>, parent: Style) -> Style {
        let mut style = parent;
        let name = el.value().name();
        match name {
            "b" | "strong" => style.bold = true,
            "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => {
                style.tag_level = name[1..].parse().ok();
            }
            _ => {}
        }
        for class in el.value().classes() {
            if let Some(cls) = self.css.get(class) {
                if cls.font_size.is_some() {
                    style.font_size = cls.font_size;
                }
                style.bold |= cls.bold;
            }
        }
        if let Some(inline) = el.value().attr("style") {
            let parsed = parse_declarations(inline);
            if parsed.font_size.is_some() {
                style.font_size = parsed.font_size;
            }
            style.bold |= parsed.bold;
            style.positioned |= parsed.positioned;
        }
        style
    }

    fn walk(&mut self, el: ElementRef<'_>, parent: Style, container: usize) {
        let name = el.value().name();
        if SKIP_TAGS.contains(&name) {
            return;
        }
        if name == "hr" {
            self.page_break();
            return;
        }
        if name == "br" {
            self.flush(true);
            return;
        }
        let is_page = el.value().id().is_some_and(|id| PAGE_ID_RE.is_match(id))
            || el.value().classes().any(|c| c == "page")
            || (name == "a"
                && el
                    .value()
                    .attr("name")
                    .is_some_and(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit())));
        if is_page {
            self.page_break();
        }
        let container = if name == "section" {
            self.next_container += 1;
            self.next_container
        } else {
            container
        };
        let style = self.style_for(&el, parent);
        let block = BLOCK_TAGS.contains(&name);
        if block {
            self.start_block(container);
        }
        for child in el.children() {
            match child.value() {
                Node::Text(t) => {
                    if self.current.runs.is_empty() {
                        self.current.page = self.page;
                        self.current.container = container;
                    }
                    self.current.runs.push((t.to_string(), style));
                }
                Node::Element(_) => {
                    if let Some(child_el) = ElementRef::wrap(child) {
                        self.walk(child_el, style, container);
                    }
                }
                _ => {}
            }
        }
        if block {
            self.start_block(container);
        }
    }
}

fn parse_declarations(decl: &str) -> Style {
    Style {
        font_size: FONT_SIZE_RE
            .captures(decl)
            .and_then(|c| c[1].parse::<f64>().ok())
            .filter(|v| *v > 0.0),
        bold: FONT_WEIGHT_RE.is_match(decl),
        tag_level: None,
        positioned: ABSOLUTE_RE.is_match(decl),
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl RawLine {
    fn into_line(self) -> Option<Line> {
        let text = collapse_ws(&self.runs.iter().map(|(t, _)| t.as_str()).collect::<String>());
        if text.is_empty() {
            return None;
        }
        let visible: Vec<(usize, Style)> = self
            .runs
            .iter()
            .filter(|(t, _)| !t.trim().is_empty())
            .map(|(t, s)| (t.trim().chars().count(), *s))
            .collect();
        // Size covering most characters wins.
        let mut by_size: Vec<(f64, usize)> = Vec::new();
        for (n, s) in &visible {
            if let Some(fs) = s.font_size {
                match by_size.iter_mut().find(|(size, _)| *size == fs) {
                    Some(entry) => entry.1 += n,
                    None => by_size.push((fs, *n)),
                }
            }
        }
        let font_size = by_size
            .iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(a.0.total_cmp(&b.0)))
            .map(|(fs, _)| *fs);
        Some(Line {
            text,
            page: self.page,
            block: self.block,
            container: self.container,
            soft_break: self.soft_break,
            positioned: visible.iter().any(|(_, s)| s.positioned),
            font_size,
            bold: visible.iter().all(|(_, s)| s.bold),
            tag_level: visible.iter().filter_map(|(_, s)| s.tag_level).min(),
        })
    }

    fn is_positioned_block(&self) -> bool {
        self.runs.iter().any(|(_, s)| s.positioned)
    }
}

fn extract_css(html: &Html) -> HashMap<String, Style> {
    let mut css = HashMap::new();
    let selector = scraper::Selector::parse("style").unwrap();
    for style_el in html.select(&selector) {
        let text: String = style_el.text().collect();
        for cap in CSS_CLASS_RE.captures_iter(&text) {
            css.insert(cap[1].to_string(), parse_declarations(&cap[2]));
        }
    }
    css
}

fn extract_title(html: &Html) -> Option<String> {
    let selector = scraper::Selector::parse("title").unwrap();
    html.select(&selector)
        .next()
        .map(|t| collapse_ws(&t.text().collect::<String>()))
        .filter(|t| !t.is_empty())
}

fn check_tokenizable(raw: &str) -> Result<()> {
    if raw.contains('\0') {
        return Err(Error::MalformedInput("input contains NUL bytes".into()));
    }
    let total = raw.chars().count();
    let control = raw
        .chars()
        .filter(|c| c.is_control() && !matches!(c, '\n' | '\r' | '\t' | '\u{c}'))
        .count();
    if total > 0 && control * 10 > total {
        return Err(Error::MalformedInput("input does not look like text markup".into()));
    }
    Ok(())
}

fn strip_repeated_lines(lines: Vec<Line>) -> Vec<Line> {
    let mut pages: HashMap<&str, HashSet<usize>> = HashMap::new();
    for l in &lines {
        pages.entry(l.text.as_str()).or_default().insert(l.page);
    }
    let repeated: HashSet<String> = pages
        .into_iter()
        .filter(|(_, p)| p.len() >= 3)
        .map(|(t, _)| t.to_string())
        .collect();
    lines.into_iter().filter(|l| !repeated.contains(&l.text)).collect()
}

fn strip_toc_runs(lines: Vec<Line>) -> Vec<Line> {
    let toc_like: Vec<bool> = lines
        .iter()
        .map(|l| l.tag_level.is_none() && TOC_LINE_RE.is_match(&l.text))
        .collect();
    let mut drop = vec![false; lines.len()];
    let mut i = 0;
    while i < lines.len() {
        if !toc_like[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < lines.len() && toc_like[i] {
            i += 1;
        }
        if i - start >= 3 {
            drop[start..i].iter_mut().for_each(|d| *d = true);
            if start > 0 && TOC_TITLE_RE.is_match(&lines[start - 1].text) {
                drop[start - 1] = true;
            }
        }
    }
    lines
        .into_iter()
        .zip(drop)
        .filter(|(_, d)| !d)
        .map(|(l, _)| l)
        .collect()
}

/// Character-weighted median font size of lines that are not heading-tagged.
fn median_body_font(lines: &[Line]) -> Option<f64> {
    let mut sizes: Vec<(f64, usize)> = lines
        .iter()
        .filter(|l| l.tag_level.is_none())
        .filter_map(|l| l.font_size.map(|fs| (fs, l.text.chars().count())))
        .collect();
    if sizes.is_empty() {
        return None;
    }
    sizes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: usize = sizes.iter().map(|(_, n)| n).sum();
    let mut acc = 0;
    for (fs, n) in &sizes {
        acc += n;
        if acc * 2 >= total {
            return Some(*fs);
        }
    }
    sizes.last().map(|(fs, _)| *fs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum HeadingKind {
    Tag(u8),
    BigFont(f64),
    Bold,
}

#[derive(Debug)]
enum Item {
    Heading {
        text: String,
        kind: HeadingKind,
        style_key: (Option<u8>, Option<u64>, bool),
        container: usize,
    },
    Paragraph(String),
}

fn ends_sentence(text: &str) -> bool {
    text.ends_with(['.', '!', '?', ':', ';'])
}

fn classify(lines: Vec<Line>, opts: &NormalizationOptions) -> Vec<Item> {
    let median = median_body_font(&lines);
    let mut items: Vec<Item> = Vec::new();
    let mut prev: Option<Line> = None;
    for line in lines {
        let short = line.text.chars().count() <= opts.max_heading_chars;
        let kind = if let Some(level) = line.tag_level {
            Some(HeadingKind::Tag(level))
        } else if short && matches!((line.font_size, median), (Some(fs), Some(m)) if fs >= opts.big_font_ratio * m) {
            Some(HeadingKind::BigFont(line.font_size.unwrap()))
        } else if short && line.bold && opts.treat_bold_as_heading {
            Some(HeadingKind::Bold)
        } else {
            None
        };
        match kind {
            Some(kind) => {
                let style_key = (line.tag_level, line.font_size.map(f64::to_bits), line.bold);
                if let Some(Item::Heading {
                    text,
                    style_key: prev_key,
                    container,
                    ..
                }) = items.last_mut()
                {
                    let merged_len = text.chars().count() + 1 + line.text.chars().count();
                    if *prev_key == style_key
                        && *container == line.container
                        && !NUMBERED_RE.is_match(&line.text)
                        && merged_len <= opts.max_heading_chars
                    {
                        text.push(' ');
                        text.push_str(&line.text);
                        prev = Some(line);
                        continue;
                    }
                }
                items.push(Item::Heading {
                    text: line.text.clone(),
                    kind,
                    style_key,
                    container: line.container,
                });
            }
            None => {
                let joins = match (&prev, items.last_mut()) {
                    (Some(p), Some(Item::Paragraph(para))) => {
                        let continued = (line.soft_break && p.block == line.block)
                            || (p.positioned && line.positioned && p.page == line.page);
                        if continued && !ends_sentence(para) {
                            para.push(' ');
                            para.push_str(&line.text);
                            true
                        } else {
                            false
                        }
                    }
                    _ => false,
                };
                if !joins {
                    items.push(Item::Paragraph(line.text.clone()));
                }
            }
        }
        prev = Some(line);
    }
    items
}

fn assign_levels(items: &[Item]) -> HashMap<u64, u8> {
    let mut sizes: Vec<f64> = items
        .iter()
        .filter_map(|i| match i {
            Item::Heading {
                kind: HeadingKind::BigFont(fs),
                ..
            } => Some(*fs),
            _ => None,
        })
        .collect();
    sizes.sort_by(|a, b| b.total_cmp(a));
    sizes.dedup();
    sizes
        .iter()
        .enumerate()
        .map(|(rank, fs)| (fs.to_bits(), (rank as u8 + 1).min(MAX_LEVEL)))
        .collect()
}

struct SectionDraft {
    heading: String,
    level: u8,
    paragraphs: Vec<String>,
}

/// Parses converter HTML into a [`PolicyDocument`].
pub fn normalize_html(raw_html: &str, options: &NormalizationOptions) -> Result<PolicyDocument> {
    normalize_html_named(raw_html, options, "")
}

/// As [`normalize_html`], recording where the markup came from.
pub fn normalize_html_named(
    raw_html: &str,
    options: &NormalizationOptions,
    source_name: &str,
) -> Result<PolicyDocument> {
    options.validate()?;
    check_tokenizable(raw_html)?;
    let html = Html::parse_document(raw_html);
    let css = extract_css(&html);

    let mut flattener = Flattener::new(&css);
    flattener.walk(html.root_element(), Style::default(), 0);
    flattener.flush(false);
    let raw_lines = flattener.lines;

    let mut lines = Vec::with_capacity(raw_lines.len());
    for raw in raw_lines {
        let positioned_block = raw.is_positioned_block();
        if let Some(mut line) = raw.into_line() {
            line.positioned = positioned_block;
            lines.push(line);
        }
    }
    if options.strip_repeated_header_footer {
        lines = strip_repeated_lines(lines);
    }
    if options.strip_toc {
        lines = strip_toc_runs(lines);
    }

    let items = classify(lines, options);
    let font_levels = assign_levels(&items);
    let fallback_level = (font_levels.len() as u8 + 1).min(MAX_LEVEL);

    let mut drafts: Vec<SectionDraft> = Vec::new();
    for item in items {
        match item {
            Item::Heading { text, kind, .. } => {
                let level = match kind {
                    HeadingKind::Tag(l) => l.clamp(1, MAX_LEVEL),
                    HeadingKind::BigFont(fs) => font_levels[&fs.to_bits()],
                    HeadingKind::Bold => fallback_level,
                };
                drafts.push(SectionDraft {
                    heading: text,
                    level,
                    paragraphs: Vec::new(),
                });
            }
            Item::Paragraph(p) => match drafts.last_mut() {
                Some(d) => d.paragraphs.push(p),
                None => drafts.push(SectionDraft {
                    heading: String::new(),
                    level: 1,
                    paragraphs: vec![p],
                }),
            },
        }
    }
    if drafts.is_empty() {
        return Err(Error::EmptyDocument);
    }

    let mut full_text = String::new();
    let mut cursor = 0usize;
    let mut sections = Vec::with_capacity(drafts.len());
    for (idx, d) in drafts.into_iter().enumerate() {
        if idx > 0 {
            full_text.push_str(SECTION_SEPARATOR);
            cursor += SECTION_SEPARATOR.chars().count();
        }
        let section = Section {
            section_id: format!("s{idx}"),
            heading: d.heading,
            level: d.level,
            body: d.paragraphs.join("\n"),
            start_offset: cursor,
            end_offset: 0,
        };
        let text = section.text();
        cursor += text.chars().count();
        full_text.push_str(&text);
        sections.push(Section {
            end_offset: cursor,
            ..section
        });
    }

    let title = extract_title(&html)
        .or_else(|| {
            sections
                .iter()
                .find(|s| !s.heading.is_empty())
                .map(|s| s.heading.clone())
        })
        .unwrap_or_else(|| source_name.to_string());
    let digest = Sha256::digest(full_text.as_bytes());
    let doc_id = format!(
        "doc-{}",
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    );
    Ok(PolicyDocument {
        doc_id,
        title,
        sections,
        full_text,
        source_name: source_name.to_string(),
    })
}

/// Sections satisfying `predicate`, in document order.
pub fn sections_matching<F>(doc: &PolicyDocument, mut predicate: F) -> Vec<&Section>
where
    F: FnMut(&Section) -> bool,
{
    doc.sections.iter().filter(|s| predicate(s)).collect()
}

/// Marker element wrapped around a highlighted span.
pub const HIGHLIGHT_OPEN: &str = "<mark class=\"evidence\">";
pub const HIGHLIGHT_CLOSE: &str = "</mark>";

/// The document as HTML with `span` (char offsets into `full_text`) wrapped in
/// [`HIGHLIGHT_OPEN`]/[`HIGHLIGHT_CLOSE`]. A span crossing element boundaries
/// is split into one marker per element.
pub fn render_highlighted(doc: &PolicyDocument, span: (usize, usize)) -> Result<String> {
    let (start, end) = span;
    let len = doc.text_len();
    if start >= end || end > len {
        return Err(Error::SpanOutOfRange { start, end, len });
    }
    Ok(build_html(doc, Some(span)))
}

fn escape_into(out: &mut String, text: &str) {
    for c in text.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}

/// Emits `text` (which starts at `offset` in full_text) with the part
/// overlapping `span` highlighted.
fn emit_text(out: &mut String, text: &str, offset: usize, span: Option<(usize, usize)>) {
    let n = text.chars().count();
    let Some((s, e)) = span else {
        escape_into(out, text);
        return;
    };
    let lo = s.max(offset).min(offset + n) - offset;
    let hi = e.min(offset + n).max(offset) - offset;
    if lo >= hi {
        escape_into(out, text);
        return;
    }
    escape_into(out, char_slice(text, 0, lo).unwrap());
    out.push_str(HIGHLIGHT_OPEN);
    escape_into(out, char_slice(text, lo, hi).unwrap());
    out.push_str(HIGHLIGHT_CLOSE);
    escape_into(out, char_slice(text, hi, n).unwrap());
}

fn build_html(doc: &PolicyDocument, span: Option<(usize, usize)>) -> String {
    let mut out = String::from("<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>");
    escape_into(&mut out, &doc.title);
    out.push_str("</title></head>\n<body>\n");
    for s in &doc.sections {
        let _ = writeln!(out, "<section id=\"{}\">", s.section_id);
        if !s.heading.is_empty() {
            let _ = write!(out, "<h{}>", s.level);
            emit_text(&mut out, &s.heading, s.start_offset, span);
            let _ = writeln!(out, "</h{}>", s.level);
        }
        let mut offset = s.body_offset();
        for para in s.body.split('\n').filter(|p| !s.body.is_empty() || !p.is_empty()) {
            out.push_str("<p>");
            emit_text(&mut out, para, offset, span);
            out.push_str("</p>\n");
            offset += para.chars().count() + 1;
        }
        out.push_str("</section>\n");
    }
    out.push_str("</body>\n</html>\n");
    out
}

//! Seeded synthetic policy corpora with planted, annotated answers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use evidence_core::embeddings::WordVectorTable;
use evidence_core::evaluation::{AnnotatedSpan, AnnotationSet};
use evidence_core::metric_catalog::{parse_catalog, Catalog};
use evidence_core::text_prep::lemmatize;
use evidence_core::{normalize_html, NormalizationOptions, PolicyDocument};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::char_find;

/// (subject, attribute, heading alias that shares no keyword)
pub const TOPICS: [(&str, &str, &str); 10] = [
    ("password", "age", "Credentials"),
    ("backup", "retention", "Data Copies"),
    ("session", "timeout", "Idle Terminals"),
    ("log", "storage", "Audit Trail"),
    ("patch", "delay", "Software Updates"),
    ("certificate", "lifetime", "Public Infrastructure"),
    ("incident", "escalation", "Emergencies"),
    ("account", "inactivity", "Dormant Users"),
    ("key", "rotation", "Cryptography"),
    ("audit", "interval", "Oversight"),
];

const HEADING_SUFFIXES: [&str; 4] = ["Rules", "Requirements", "Controls", "Handling"];
const FILLER_NOUNS: [&str; 16] = [
    "staff", "team", "document", "quarter", "office", "manager", "training", "budget", "vendor", "contract", "meeting",
    "supplier", "building", "laptop", "printer", "visitor",
];
const FILLER_VERBS: [&str; 5] = ["inform", "support", "check", "update", "track"];

pub fn metric_name(subject: &str) -> String {
    let mut c = subject.chars();
    let first = c.next().unwrap().to_uppercase().collect::<String>();
    format!("{first}{}Max", c.as_str())
}

fn title_case(word: &str) -> String {
    let mut c = word.chars();
    c.next().unwrap().to_uppercase().chain(c).collect()
}

/// One metric per topic: "What is the maximum {attribute} of a {subject}?",
/// `<= 300`, Integer.
pub fn topic_catalog() -> Catalog {
    let metrics: Vec<serde_json::Value> = TOPICS
        .iter()
        .map(|(subject, attribute, _)| {
            serde_json::json!({
                "name": metric_name(subject),
                "description": format!("What is the maximum {attribute} of a {subject}?"),
                "keywords": [subject, attribute],
                "operator": "<=",
                "target_value": 300,
                "data_type": "Integer",
            })
        })
        .collect();
    parse_catalog(&serde_json::Value::Array(metrics).to_string()).expect("topic catalog is valid")
}

#[derive(Debug, Clone)]
pub struct SyntheticDoc {
    pub html: String,
    pub doc: PolicyDocument,
    pub annotations: AnnotationSet,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub catalog: Catalog,
    pub docs: Vec<SyntheticDoc>,
    pub vectors: WordVectorTable,
}

impl SyntheticCorpus {
    /// `n_docs` documents with a section count drawn from `sections` (at most
    /// one section per topic).
    pub fn generate(seed: u64, n_docs: usize, sections: RangeInclusive<usize>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = (0..n_docs)
            .map(|_| {
                let n = rng.gen_range(sections.clone()).clamp(1, TOPICS.len());
                synthetic_doc(&mut rng, n)
            })
            .collect();
        Self {
            catalog: topic_catalog(),
            docs,
            vectors: topic_vectors(seed),
        }
    }

    pub fn total_annotated(&self) -> usize {
        self.docs.iter().map(|d| d.annotations.entries.len()).sum()
    }
}

fn filler_sentence(rng: &mut ChaCha8Rng) -> String {
    let pick = |rng: &mut ChaCha8Rng| *FILLER_NOUNS.choose(rng).unwrap();
    format!(
        "The {} {} must {} the {}.",
        pick(rng),
        pick(rng),
        FILLER_VERBS.choose(rng).unwrap(),
        pick(rng)
    )
}

struct Planted {
    metric: String,
    needle: String,
}

fn synthetic_doc(rng: &mut ChaCha8Rng, n_sections: usize) -> SyntheticDoc {
    let mut topics: Vec<usize> = (0..TOPICS.len()).collect();
    topics.shuffle(rng);
    topics.truncate(n_sections);

    let mut bodies: Vec<Vec<String>> = topics
        .iter()
        .map(|_| (0..rng.gen_range(1..=3)).map(|_| filler_sentence(rng)).collect())
        .collect();
    let mut used_numbers = BTreeSet::new();
    let mut planted = Vec::new();
    for (i, &t) in topics.iter().enumerate() {
        let (subject, attribute, _) = TOPICS[t];
        let roll = rng.gen_range(0..100);
        if roll >= 90 {
            continue;
        }
        // Mostly in its own section, sometimes somewhere else.
        let target = if roll < 75 { i } else { rng.gen_range(0..topics.len()) };
        let n = loop {
            // Three digits, so no needle is a substring of another.
            let n: u32 = rng.gen_range(100..1000);
            if used_numbers.insert(n) {
                break n;
            }
        };
        let sentence = format!("The maximum {attribute} of a {subject} is {n} days.");
        let at = rng.gen_range(0..=bodies[target].len());
        bodies[target].insert(at, sentence);
        planted.push(Planted {
            metric: metric_name(subject),
            needle: n.to_string(),
        });
        if rng.gen_bool(0.3) {
            let other = rng.gen_range(0..topics.len());
            bodies[other].push(format!("A {subject} must be registered by the manager."));
        }
    }

    let mut html = String::from("<html><body>\n");
    if rng.gen_bool(0.3) {
        let _ = writeln!(html, "<p>{}</p>", filler_sentence(rng));
    }
    for (i, (&t, body)) in topics.iter().zip(&bodies).enumerate() {
        let (subject, _, alias) = TOPICS[t];
        let heading = if rng.gen_bool(0.7) {
            format!(
                "{} {} {}",
                i + 1,
                title_case(subject),
                HEADING_SUFFIXES.choose(rng).unwrap()
            )
        } else {
            format!("{} {alias}", i + 1)
        };
        let _ = writeln!(html, "<h2>{heading}</h2>");
        let mut paragraph = Vec::new();
        for sentence in body {
            paragraph.push(sentence.as_str());
            if rng.gen_bool(0.4) {
                let _ = writeln!(html, "<p>{}</p>", paragraph.join(" "));
                paragraph.clear();
            }
        }
        if !paragraph.is_empty() {
            let _ = writeln!(html, "<p>{}</p>", paragraph.join(" "));
        }
    }
    html.push_str("</body></html>\n");

    let doc = normalize_html(&html, &NormalizationOptions::default()).expect("synthetic html normalizes");
    let mut entries: BTreeMap<String, Vec<AnnotatedSpan>> = BTreeMap::new();
    for p in planted {
        let start = char_find(&doc.full_text, &p.needle).expect("planted text survives normalization");
        let end = start + p.needle.chars().count();
        entries.entry(p.metric).or_default().push(AnnotatedSpan {
            start_offset: start,
            end_offset: end,
            text: p.needle,
        });
    }
    let annotations = AnnotationSet {
        doc_id: doc.doc_id.clone(),
        entries,
        unknown_metrics: Vec::new(),
    };
    SyntheticDoc { html, doc, annotations }
}

/// Vectors for every lemma the generator can emit. Words of one topic share a
/// direction, so keyword similarity is informative but imperfect.
pub fn topic_vectors(seed: u64) -> WordVectorTable {
    const DIM: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let unit = |rng: &mut ChaCha8Rng| -> Vec<f32> { (0..DIM).map(|_| rng.gen_range(-1.0f32..1.0)).collect() };
    let mut vectors: HashMap<String, Vec<f32>> = HashMap::new();
    let mut add = |text: &str, base: &[f32], noise: &[f32]| {
        for word in text.split_whitespace() {
            let v = base.iter().zip(noise).map(|(b, n)| b + 0.3 * n).collect();
            vectors.insert(lemmatize(&word.to_lowercase()), v);
        }
    };
    for (subject, attribute, alias) in TOPICS {
        let base = unit(&mut rng);
        for text in [subject, attribute, alias] {
            let noise = unit(&mut rng);
            add(text, &base, &noise);
        }
    }
    let zero = [0.0f32; DIM];
    for word in FILLER_NOUNS
        .iter()
        .chain(&FILLER_VERBS)
        .chain(&HEADING_SUFFIXES)
        .chain(&["maximum", "day", "register", "manager"])
    {
        let v = unit(&mut rng);
        add(word, &v, &zero);
    }
    WordVectorTable::new(DIM, vectors).expect("non-empty table")
}

//! Shared test support: bundled fixtures, seeded synthetic corpora, scripted
//! answerers and a local stand-in for a remote answering endpoint.

pub mod corpus;
pub mod scripted;
pub mod stub;

use std::path::PathBuf;

use evidence_core::document_model::normalize_html_named;
use evidence_core::embeddings::WordVectorTable;
use evidence_core::metric_catalog::{load_catalog, Catalog, Metric};
use evidence_core::{NormalizationOptions, PolicyDocument};

pub const POLICY_FIXTURE: &str = "password_policy.html";
pub const CATALOG_FIXTURE: &str = "catalog.json";
pub const VECTORS_FIXTURE: &str = "vectors.txt";

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_path(name: &str) -> PathBuf {
    fixtures_dir().join(name)
}

pub fn read_fixture(name: &str) -> String {
    let path = fixture_path(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// The password policy excerpt, normalized with default options.
pub fn policy_document() -> PolicyDocument {
    normalize_html_named(
        &read_fixture(POLICY_FIXTURE),
        &NormalizationOptions::default(),
        POLICY_FIXTURE,
    )
    .expect("policy fixture normalizes")
}

pub fn password_catalog() -> Catalog {
    load_catalog(fixture_path(CATALOG_FIXTURE)).expect("catalog fixture loads")
}

/// `PasswordPolicyQ2`: maximum password age, `<= 100`, Integer.
pub fn password_metric() -> Metric {
    password_catalog()
        .get("PasswordPolicyQ2")
        .cloned()
        .expect("metric present")
}

pub fn vector_table() -> WordVectorTable {
    WordVectorTable::load(fixture_path(VECTORS_FIXTURE)).expect("vector fixture loads")
}

/// `(file name, html)` for every golden fixture, sorted by name.
pub fn golden_fixtures() -> Vec<(String, String)> {
    let dir = fixtures_dir().join("golden");
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "html"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let html = std::fs::read_to_string(&p).unwrap();
            (name, html)
        })
        .collect();
    out.sort();
    out
}

/// Char offset of the first occurrence of `needle` in `haystack`.
pub fn char_find(haystack: &str, needle: &str) -> Option<usize> {
    haystack.find(needle).map(|b| haystack[..b].chars().count())
}

//! Golden corpus: expected sections, idempotence and offset honesty.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the `.sections.json` expectations.

use evidence_core::document_model::render_highlighted;
use evidence_core::{normalize_html, NormalizationOptions, PolicyDocument, Section};
use evidence_testkit::{fixtures_dir, golden_fixtures, policy_document};

fn normalize(html: &str) -> PolicyDocument {
    normalize_html(html, &NormalizationOptions::default()).unwrap()
}

#[test]
fn golden_corpus_has_enough_fixtures() {
    assert!(golden_fixtures().len() >= 10);
}

#[test]
fn sections_match_expectations() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for (name, html) in golden_fixtures() {
        let doc = normalize(&html);
        let expected_path = fixtures_dir()
            .join("golden")
            .join(name.replace(".html", ".sections.json"));
        if update {
            std::fs::write(
                &expected_path,
                serde_json::to_string_pretty(&doc.sections).unwrap() + "\n",
            )
            .unwrap();
            continue;
        }
        let expected: Vec<Section> = serde_json::from_str(&std::fs::read_to_string(&expected_path).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", expected_path.display()));
        assert_eq!(doc.sections, expected, "{name}");
    }
}

#[test]
fn normalization_is_idempotent() {
    for (name, html) in golden_fixtures() {
        let once = normalize(&html);
        let twice = normalize(&once.to_html());
        assert_eq!(once.sections, twice.sections, "{name}");
        assert_eq!(once.full_text, twice.full_text, "{name}");
        assert_eq!(once.doc_id, twice.doc_id, "{name}");
    }
}

#[test]
fn offsets_are_honest() {
    for (name, html) in golden_fixtures() {
        let doc = normalize(&html);
        doc.validate().unwrap();
        for s in &doc.sections {
            assert_eq!(
                doc.slice(s.start_offset, s.end_offset).unwrap(),
                s.text(),
                "{name} {}",
                s.section_id
            );
        }
        let len = doc.text_len();
        assert_eq!(doc.sections.last().unwrap().end_offset, len, "{name}");
    }
}

#[test]
fn boilerplate_is_removed() {
    let by_name = |n: &str| {
        let (_, html) = golden_fixtures().into_iter().find(|(f, _)| f == n).unwrap();
        normalize(&html)
    };
    let toc = by_name("toc.html");
    assert!(!toc.full_text.contains("...."));
    assert!(!toc.full_text.contains("Contents"));
    assert_eq!(toc.sections.len(), 5);

    let footer = by_name("repeated_footer.html");
    assert!(!footer.full_text.contains("Confidential"));
    assert!(!footer.full_text.contains("Version 2.1"));

    let split = by_name("split_heading_font.html");
    assert_eq!(split.sections[0].heading, "Incident Detection and Response Procedure");
}

#[test]
fn unicode_offsets_count_chars() {
    let (_, html) = golden_fixtures()
        .into_iter()
        .find(|(f, _)| f == "unicode.html")
        .unwrap();
    let doc = normalize(&html);
    let start = evidence_testkit::char_find(&doc.full_text, "🙂").unwrap();
    assert_eq!(doc.slice(start, start + 1).unwrap(), "🙂");
    let html = render_highlighted(&doc, (start, start + 1)).unwrap();
    assert!(html.contains("<mark class=\"evidence\">🙂</mark>"));
}

#[test]
fn policy_fixture_structure() {
    let doc = policy_document();
    let headings: Vec<&str> = doc.sections.iter().map(|s| s.heading.as_str()).collect();
    assert_eq!(
        headings,
        [
            "Information Security Guideline",
            "1 Purpose",
            "2 Scope",
            "3 Access Control",
            "4 Password Management",
            "5 Backup"
        ]
    );
    assert!(!doc.full_text.contains("Example Corp Internal"));
    assert_eq!(doc.title, "Information Security Guideline");
}

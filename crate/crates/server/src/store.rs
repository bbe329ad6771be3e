//! On-disk store: one JSON file per collection, replaced atomically on every
//! mutation (write to a temporary file in the same directory, then rename).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use evidence_core::evaluation::AnnotationSet;
use evidence_core::metric_catalog::Metric;
use evidence_core::records::{EvidenceRecord, ReviewStatus};
use evidence_core::{Error, PolicyDocument, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

const DOCUMENTS: &str = "documents.json";
const METRICS: &str = "metrics.json";
const RECORDS: &str = "records.json";
const ANNOTATIONS: &str = "annotations.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub doc_id: String,
    pub title: String,
    pub source_name: String,
    pub sections: usize,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RecordFilter {
    pub doc_id: Option<String>,
    pub status: Option<ReviewStatus>,
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    documents: RwLock<BTreeMap<String, PolicyDocument>>,
    metrics: RwLock<Vec<Metric>>,
    records: RwLock<BTreeMap<String, EvidenceRecord>>,
    annotations: RwLock<BTreeMap<String, AnnotationSet>>,
}

fn load<T: DeserializeOwned + Default>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    match std::fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            what: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(T::default()),
        Err(e) => Err(Error::Io { path, source: e }),
    }
}

fn persist<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let io = |e: std::io::Error| Error::Io {
        path: path.clone(),
        source: e,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    serde_json::to_writer_pretty(&mut tmp, value)?;
    tmp.write_all(b"\n").map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(&path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Clones the collection, applies `f`, persists the copy and only then makes
/// it visible. A failed write leaves memory and disk unchanged.
fn mutate<T, R>(lock: &RwLock<T>, dir: &Path, name: &str, f: impl FnOnce(&mut T) -> Result<R>) -> Result<R>
where
    T: Clone + Serialize,
{
    let mut guard = lock.write().unwrap_or_else(|e| e.into_inner());
    let mut next = guard.clone();
    let out = f(&mut next)?;
    persist(dir, name, &next)?;
    *guard = next;
    Ok(out)
}

fn read<T>(lock: &RwLock<T>) -> std::sync::RwLockReadGuard<'_, T> {
    lock.read().unwrap_or_else(|e| e.into_inner())
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        Ok(Self {
            documents: RwLock::new(load(&dir, DOCUMENTS)?),
            metrics: RwLock::new(load(&dir, METRICS)?),
            records: RwLock::new(load(&dir, RECORDS)?),
            annotations: RwLock::new(load(&dir, ANNOTATIONS)?),
            dir,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Returns false when a document with the same id was already stored.
    pub fn put_document(&self, doc: PolicyDocument) -> Result<bool> {
        if read(&self.documents).contains_key(&doc.doc_id) {
            return Ok(false);
        }
        mutate(&self.documents, &self.dir, DOCUMENTS, |docs| {
            Ok(docs.insert(doc.doc_id.clone(), doc).is_none())
        })
    }

    pub fn document(&self, doc_id: &str) -> Option<PolicyDocument> {
        read(&self.documents).get(doc_id).cloned()
    }

    pub fn documents(&self) -> Vec<DocumentSummary> {
        read(&self.documents)
            .values()
            .map(|d| DocumentSummary {
                doc_id: d.doc_id.clone(),
                title: d.title.clone(),
                source_name: d.source_name.clone(),
                sections: d.sections.len(),
            })
            .collect()
    }

    /// Replaces the catalog. Metrics that existing records refer to must stay.
    pub fn replace_metrics(&self, metrics: Vec<Metric>) -> std::result::Result<(), Vec<String>> {
        let records = read(&self.records);
        let mut missing: Vec<String> = records
            .values()
            .map(|r| r.metric_name.clone())
            .filter(|name| !metrics.iter().any(|m| &m.name == name))
            .collect();
        missing.sort();
        missing.dedup();
        if !missing.is_empty() {
            return Err(missing);
        }
        mutate(&self.metrics, &self.dir, METRICS, |m| {
            *m = metrics;
            Ok(())
        })
        .map_err(|e| vec![e.to_string()])
    }

    pub fn metrics(&self) -> Vec<Metric> {
        read(&self.metrics).clone()
    }

    pub fn metric(&self, name: &str) -> Option<Metric> {
        read(&self.metrics).iter().find(|m| m.name == name).cloned()
    }

    pub fn record(&self, record_id: &str) -> Option<EvidenceRecord> {
        read(&self.records).get(record_id).cloned()
    }

    /// Records ordered by document, metric and pipeline.
    pub fn records(&self, filter: &RecordFilter) -> Vec<EvidenceRecord> {
        let mut out: Vec<EvidenceRecord> = read(&self.records)
            .values()
            .filter(|r| filter.doc_id.as_ref().is_none_or(|d| &r.doc_id == d))
            .filter(|r| filter.status.is_none_or(|s| r.status == s))
            .cloned()
            .collect();
        out.sort_by(|a, b| (&a.doc_id, &a.metric_name, a.pipeline).cmp(&(&b.doc_id, &b.metric_name, b.pipeline)));
        out
    }

    /// Inserts or replaces records in one write. Reviewed records are never
    /// replaced; the stored version is returned for those instead.
    pub fn save_records(&self, records: Vec<EvidenceRecord>) -> Result<Vec<EvidenceRecord>> {
        mutate(&self.records, &self.dir, RECORDS, |all| {
            Ok(records
                .into_iter()
                .map(|r| match all.get(&r.record_id) {
                    Some(existing) if !existing.is_pending() => existing.clone(),
                    _ => {
                        all.insert(r.record_id.clone(), r.clone());
                        r
                    }
                })
                .collect())
        })
    }

    pub fn update_record<R>(
        &self,
        record_id: &str,
        f: impl FnOnce(&mut EvidenceRecord) -> Result<R>,
    ) -> Option<Result<R>> {
        if !read(&self.records).contains_key(record_id) {
            return None;
        }
        Some(mutate(&self.records, &self.dir, RECORDS, |all| {
            match all.get_mut(record_id) {
                Some(r) => f(r),
                None => Err(Error::InvalidConfig(format!("record {record_id} vanished"))),
            }
        }))
    }

    pub fn put_annotations(&self, set: AnnotationSet) -> Result<()> {
        mutate(&self.annotations, &self.dir, ANNOTATIONS, |all| {
            all.insert(set.doc_id.clone(), set);
            Ok(())
        })
    }

    pub fn annotations(&self, doc_id: &str) -> Option<AnnotationSet> {
        read(&self.annotations).get(doc_id).cloned()
    }

    pub fn all_annotations(&self) -> Vec<AnnotationSet> {
        read(&self.annotations).values().cloned().collect()
    }
}

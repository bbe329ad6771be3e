//! Evidence extraction and assessment over organizational policy documents.
//!
//! The crate turns converter HTML into a structured [`PolicyDocument`], runs
//! metric questions through one of five extraction pipelines, derives an
//! assessment hint from the extracted answer, and scores pipelines against
//! annotated ground truth.

pub mod answerer;
pub mod assessment;
pub mod document_model;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod metric_catalog;
pub mod pipelines;
pub mod records;
pub mod text_prep;

pub use document_model::{normalize_html, NormalizationOptions, PolicyDocument, Section};
pub use error::{Error, Result};
pub use metric_catalog::{Catalog, Metric};
pub use pipelines::{ExtractionResult, Extractor, PipelineKind};

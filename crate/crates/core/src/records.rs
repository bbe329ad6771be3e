//! Evidence records and the review state machine.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::answerer::Answer;
use crate::assessment::AssessmentHint;
use crate::error::{Error, Result};
use crate::pipelines::{ExtractionResult, PipelineKind, SectionScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReviewStatus {
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    NoError,
    PartialMatching,
    FalseOrOtherError,
    NotInDocument,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::NoError,
        ErrorCategory::PartialMatching,
        ErrorCategory::FalseOrOtherError,
        ErrorCategory::NotInDocument,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::NoError => "NoError",
            ErrorCategory::PartialMatching => "PartialMatching",
            ErrorCategory::FalseOrOtherError => "FalseOrOtherError",
            ErrorCategory::NotInDocument => "NotInDocument",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::NoError => "No error",
            ErrorCategory::PartialMatching => "Partial matching",
            ErrorCategory::FalseOrOtherError => "False or other error",
            ErrorCategory::NotInDocument => "Not in document",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ErrorCategory::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown error category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub record_id: String,
    pub metric_name: String,
    pub doc_id: String,
    pub pipeline: PipelineKind,
    pub answer: Answer,
    #[serde(default)]
    pub winning_section_id: Option<String>,
    #[serde(default)]
    pub section_scores: Vec<SectionScore>,
    #[serde(default)]
    pub duration_ms: u64,
    pub assessment: AssessmentHint,
    pub status: ReviewStatus,
    #[serde(default)]
    pub reviewer_category: Option<ErrorCategory>,
    #[serde(default)]
    pub reviewer_comment: Option<String>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub reviewed_at: Option<DateTime<Utc>>,
}

/// Stable id for a (document, metric, pipeline) triple.
pub fn record_id(doc_id: &str, metric_name: &str, pipeline: PipelineKind) -> String {
    let mut h = Sha256::new();
    for part in [doc_id, metric_name, pipeline.as_str()] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    format!("rec-{hex}")
}

impl EvidenceRecord {
    pub fn new(result: ExtractionResult, assessment: AssessmentHint, created_at: DateTime<Utc>) -> Self {
        Self {
            record_id: record_id(&result.doc_id, &result.metric_name, result.pipeline),
            metric_name: result.metric_name,
            doc_id: result.doc_id,
            pipeline: result.pipeline,
            answer: result.answer,
            winning_section_id: result.winning_section_id,
            section_scores: result.section_scores,
            duration_ms: result.duration_ms,
            assessment,
            status: ReviewStatus::Pending,
            reviewer_category: None,
            reviewer_comment: None,
            created_at,
            reviewed_at: None,
        }
    }

    pub fn is_pending(&self) -> bool {
        self.status == ReviewStatus::Pending
    }

    /// Pending → Approved/Rejected. Any other transition is `AlreadyReviewed`.
    pub fn review(
        &mut self,
        decision: Decision,
        category: ErrorCategory,
        comment: Option<String>,
        at: DateTime<Utc>,
    ) -> Result<()> {
        if !self.is_pending() {
            return Err(Error::AlreadyReviewed(self.record_id.clone()));
        }
        self.status = match decision {
            Decision::Approve => ReviewStatus::Approved,
            Decision::Reject => ReviewStatus::Rejected,
        };
        self.reviewer_category = Some(category);
        self.reviewer_comment = comment;
        self.reviewed_at = Some(at);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.status {
            ReviewStatus::Pending => self.reviewed_at.is_none() && self.reviewer_category.is_none(),
            _ => self.reviewed_at.is_some(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "record {} has inconsistent review fields",
                self.record_id
            )))
        }
    }

    /// The extraction part of the record.
    pub fn extraction(&self) -> ExtractionResult {
        ExtractionResult {
            metric_name: self.metric_name.clone(),
            doc_id: self.doc_id.clone(),
            pipeline: self.pipeline,
            answer: self.answer.clone(),
            winning_section_id: self.winning_section_id.clone(),
            section_scores: self.section_scores.clone(),
            duration_ms: self.duration_ms,
        }
    }
}

/// Parses a JSON-lines stream of records; blank lines are skipped.
pub fn parse_records_jsonl(contents: &str) -> Result<Vec<EvidenceRecord>> {
    contents
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let rec: EvidenceRecord = serde_json::from_str(l).map_err(|e| Error::Parse {
                what: "evidence records".into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            rec.validate()?;
            Ok(rec)
        })
        .collect()
}

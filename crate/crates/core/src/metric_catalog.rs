//! Organizational metrics: a question, keywords, and an (operator, target,
//! data type) triple used to assess the extracted answer.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assessment::{parse_value, DurationUnits};
use crate::error::{Error, Result};
use crate::text_prep::{prepare_text, StopwordList};

/// Comparison operator of a metric. The set is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Less,
    LessEqual,
    Equal,
    GreaterEqual,
    Greater,
    /// Written `==` in catalogs; same semantics as [`Operator::Equal`].
    StrictEqual,
    Contains,
}

impl Operator {
    pub const ALL: [Operator; 7] = [
        Operator::Less,
        Operator::LessEqual,
        Operator::Equal,
        Operator::GreaterEqual,
        Operator::Greater,
        Operator::StrictEqual,
        Operator::Contains,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Less => "<",
            Operator::LessEqual => "≤",
            Operator::Equal => "=",
            Operator::GreaterEqual => "≥",
            Operator::Greater => ">",
            Operator::StrictEqual => "==",
            Operator::Contains => "contains",
        }
    }

    pub fn is_ordering(self) -> bool {
        matches!(
            self,
            Operator::Less | Operator::LessEqual | Operator::GreaterEqual | Operator::Greater
        )
    }
}

impl FromStr for Operator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "<" => Operator::Less,
            "<=" | "≤" => Operator::LessEqual,
            "=" => Operator::Equal,
            ">=" | "≥" => Operator::GreaterEqual,
            ">" => Operator::Greater,
            "==" => Operator::StrictEqual,
            "contains" => Operator::Contains,
            other => return Err(Error::UnknownOperator(other.to_string())),
        })
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl Serialize for Operator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Operator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataType {
    Integer,
    Float,
    Boolean,
    String,
    /// A time span, compared in days.
    Duration,
}

impl FromStr for DataType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "integer" | "int" => DataType::Integer,
            "float" | "double" | "number" => DataType::Float,
            "boolean" | "bool" => DataType::Boolean,
            "string" | "text" => DataType::String,
            "duration" => DataType::Duration,
            _ => return Err(Error::UnknownDataType(s.to_string())),
        })
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DataType::Integer => "Integer",
            DataType::Float => "Float",
            DataType::Boolean => "Boolean",
            DataType::String => "String",
            DataType::Duration => "Duration",
        };
        f.write_str(s)
    }
}

/// A typed scalar: a metric's target or a value parsed from an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum Value {
    Integer(i64),
    Float(f64),
    Boolean(bool),
    String(String),
    /// Normalized to days.
    Duration(f64),
}

impl Value {
    pub fn data_type(&self) -> DataType {
        match self {
            Value::Integer(_) => DataType::Integer,
            Value::Float(_) => DataType::Float,
            Value::Boolean(_) => DataType::Boolean,
            Value::String(_) => DataType::String,
            Value::Duration(_) => DataType::Duration,
        }
    }

    /// The plain JSON form used in catalogs.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Integer(i) => (*i).into(),
            Value::Float(f) | Value::Duration(f) => serde_json::Number::from_f64(*f)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::Boolean(b) => (*b).into(),
            Value::String(s) => s.clone().into(),
        }
    }

    /// Reads a catalog target value as `data_type`.
    pub fn from_json(json: &serde_json::Value, data_type: DataType) -> Result<Value> {
        let mismatch = || Error::TypeMismatch(format!("target value {json} is not a {data_type}"));
        match (data_type, json) {
            (DataType::Integer, serde_json::Value::Number(n)) => {
                if let Some(i) = n.as_i64() {
                    Ok(Value::Integer(i))
                } else {
                    match n.as_f64() {
                        Some(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Ok(Value::Integer(f as i64)),
                        _ => Err(mismatch()),
                    }
                }
            }
            (DataType::Float, serde_json::Value::Number(n)) => n.as_f64().map(Value::Float).ok_or_else(mismatch),
            (DataType::Boolean, serde_json::Value::Bool(b)) => Ok(Value::Boolean(*b)),
            (DataType::String, serde_json::Value::String(s)) => Ok(Value::String(s.clone())),
            (DataType::Duration, serde_json::Value::Number(n)) => n.as_f64().map(Value::Duration).ok_or_else(mismatch),
            (DataType::Duration, serde_json::Value::String(s)) => {
                match parse_value(s, DataType::Duration, &DurationUnits::default()) {
                    Some(v) => Ok(v),
                    None => Err(mismatch()),
                }
            }
            _ => Err(mismatch()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Integer(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Boolean(true) => f.write_str("True"),
            Value::Boolean(false) => f.write_str("False"),
            Value::String(s) => write!(f, "\"{s}\""),
            Value::Duration(d) if *d == 1.0 => f.write_str("1 day"),
            Value::Duration(d) => write!(f, "{d} days"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMetric", into = "RawMetric")]
pub struct Metric {
    pub name: String,
    /// The question put to the answerer.
    pub description: String,
    pub keywords: Vec<String>,
    pub operator: Operator,
    pub target_value: Value,
    pub data_type: DataType,
    pub requirement_id: Option<String>,
}

/// Wire form of a metric; field names follow the catalog JSON schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawMetric {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    pub operator: String,
    pub target_value: serde_json::Value,
    pub data_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement_id: Option<String>,
}

impl TryFrom<RawMetric> for Metric {
    type Error = Error;

    fn try_from(raw: RawMetric) -> Result<Self> {
        let name = raw.name.trim().to_string();
        if name.is_empty() {
            return Err(Error::TypeMismatch("metric name must not be empty".into()));
        }
        if raw.description.trim().is_empty() {
            return Err(Error::TypeMismatch(format!("metric {name}: empty description")));
        }
        let operator: Operator = raw.operator.parse()?;
        let data_type: DataType = raw.data_type.parse()?;
        let target_value = Value::from_json(&raw.target_value, data_type)?;
        check_operator(operator, data_type).map_err(|e| match e {
            Error::TypeMismatch(m) => Error::TypeMismatch(format!("metric {name}: {m}")),
            other => other,
        })?;
        Ok(Metric {
            name,
            description: raw.description,
            keywords: raw.keywords,
            operator,
            target_value,
            data_type,
            requirement_id: raw.requirement_id,
        })
    }
}

impl From<Metric> for RawMetric {
    fn from(m: Metric) -> Self {
        RawMetric {
            name: m.name,
            description: m.description,
            keywords: m.keywords,
            operator: m.operator.symbol().to_string(),
            target_value: m.target_value.to_json(),
            data_type: m.data_type.to_string(),
            requirement_id: m.requirement_id,
        }
    }
}

/// Rejects operator/type pairs that could never be assessed.
pub fn check_operator(operator: Operator, data_type: DataType) -> Result<()> {
    let ok = match data_type {
        DataType::Integer | DataType::Float | DataType::Duration => operator != Operator::Contains,
        DataType::Boolean => matches!(operator, Operator::Equal | Operator::StrictEqual),
        DataType::String => !operator.is_ordering(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::TypeMismatch(format!(
            "operator {operator} is not defined for {data_type}"
        )))
    }
}

/// A validated list of metrics plus non-fatal validation warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    pub metrics: Vec<Metric>,
    pub warnings: Vec<String>,
}

impl Catalog {
    pub fn from_metrics(metrics: Vec<Metric>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut warnings = Vec::new();
        for m in &metrics {
            if !seen.insert(m.name.as_str()) {
                return Err(Error::DuplicateMetricName(m.name.clone()));
            }
            if !m.description.trim_end().ends_with('?') {
                warnings.push(format!("metric {}: description is not phrased as a question", m.name));
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(Self { metrics, warnings })
    }

    pub fn get(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.metrics)?)
    }
}

/// Parses the catalog JSON (an array of metric objects).
pub fn parse_catalog(json: &str) -> Result<Catalog> {
    let raws: Vec<RawMetric> = serde_json::from_str(json).map_err(|e| Error::Parse {
        what: "metric catalog".into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let metrics = raws.into_iter().map(Metric::try_from).collect::<Result<Vec<_>>>()?;
    Catalog::from_metrics(metrics)
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_catalog(&json)
}

/// Stop-word-free, lemmatized, deduplicated metric keywords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedKeywords {
    pub lemmas: BTreeSet<String>,
    pub source_metric: String,
}

impl PreparedKeywords {
    pub fn is_empty(&self) -> bool {
        self.lemmas.is_empty()
    }

    pub fn as_vec(&self) -> Vec<String> {
        self.lemmas.iter().cloned().collect()
    }
}

pub fn prepare_keywords(metric: &Metric, stopwords: &StopwordList) -> PreparedKeywords {
    let lemmas = metric
        .keywords
        .iter()
        .flat_map(|k| prepare_text(k, stopwords))
        .filter(|t| !t.is_stopword)
        .map(|t| t.lemma)
        .collect();
    PreparedKeywords {
        lemmas,
        source_metric: metric.name.clone(),
    }
}

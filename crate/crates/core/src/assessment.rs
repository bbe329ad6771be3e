//! Converts an extracted answer into a typed value and compares it with the
//! metric's target, producing a rendered hint such as `60 ≤ 100 → True`.

use std::cmp::Ordering;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric_catalog::{DataType, Metric, Operator, Value};

static NUMBER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|[^\p{Alphabetic}\p{Nd}.,\-+])([+-]?)(\d{1,3}(?:,\d{3})+|\d+)(\.\d+)?").unwrap());
static UNIT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(day|week|month|year)s?\b").unwrap());
static WORD_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{Alphabetic}+").unwrap());

/// Day counts used to normalize durations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DurationUnits {
    pub day: f64,
    pub week: f64,
    pub month: f64,
    pub year: f64,
}

impl Default for DurationUnits {
    fn default() -> Self {
        Self {
            day: 1.0,
            week: 7.0,
            month: 30.0,
            year: 365.0,
        }
    }
}

impl DurationUnits {
    fn days_per(&self, unit: &str) -> f64 {
        match unit {
            "day" => self.day,
            "week" => self.week,
            "month" => self.month,
            _ => self.year,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Compliant,
    NotCompliant,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentHint {
    pub parsed_value: Option<Value>,
    pub operator: Operator,
    pub target_value: Value,
    pub outcome: Outcome,
    pub rendered: String,
}

struct NumberMatch {
    negative: bool,
    integer: String,
    fraction: Option<String>,
    end: usize,
}

fn first_number(text: &str) -> Option<NumberMatch> {
    let caps = NUMBER_RE.captures(text)?;
    Some(NumberMatch {
        negative: &caps[1] == "-",
        integer: caps[2].replace(',', ""),
        fraction: caps.get(3).map(|m| m.as_str().to_string()),
        end: caps.get(0).unwrap().end(),
    })
}

impl NumberMatch {
    fn as_f64(&self) -> Option<f64> {
        let s = format!(
            "{}{}{}",
            if self.negative { "-" } else { "" },
            self.integer,
            self.fraction.as_deref().unwrap_or("")
        );
        s.parse().ok()
    }

    fn as_i64(&self) -> Option<i64> {
        if self.fraction.as_deref().is_some_and(|f| f.trim_end_matches('0') != ".") {
            return None;
        }
        let v: i64 = self.integer.parse().ok()?;
        Some(if self.negative { -v } else { v })
    }
}

/// Parses an answer into a value of `data_type`; `None` when nothing fits.
///
/// Numbers are taken from the first numeric token (sign allowed, thousands
/// separators stripped). Integers must be whole. Durations pair the first
/// number with the nearest unit word after it.
pub fn parse_value(answer_text: &str, data_type: DataType, units: &DurationUnits) -> Option<Value> {
    let text = answer_text.trim();
    if text.is_empty() {
        return None;
    }
    match data_type {
        DataType::Integer => first_number(text)?.as_i64().map(Value::Integer),
        DataType::Float => first_number(text)?.as_f64().map(Value::Float),
        DataType::Boolean => WORD_RE
            .find_iter(text)
            .find_map(|w| match w.as_str().to_lowercase().as_str() {
                "yes" | "true" | "enabled" => Some(Value::Boolean(true)),
                "no" | "false" | "disabled" => Some(Value::Boolean(false)),
                _ => None,
            }),
        DataType::String => Some(Value::String(text.to_string())),
        DataType::Duration => {
            let num = first_number(text)?;
            let amount = num.as_f64()?;
            let unit = UNIT_RE.captures(&text[num.end..])?;
            let unit = unit[1].to_lowercase();
            Some(Value::Duration(amount * units.days_per(&unit)))
        }
    }
}

fn mismatch(parsed: &Value, op: Operator, target: &Value) -> Error {
    Error::TypeMismatch(format!(
        "cannot evaluate {} {op} {} ({} vs {})",
        parsed,
        target,
        parsed.data_type(),
        target.data_type()
    ))
}

fn numeric(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

fn compare(parsed: &Value, op: Operator, target: &Value) -> Result<bool> {
    let ordering = |ord: Ordering| -> bool {
        match op {
            Operator::Less => ord == Ordering::Less,
            Operator::LessEqual => ord != Ordering::Greater,
            Operator::Equal | Operator::StrictEqual => ord == Ordering::Equal,
            Operator::GreaterEqual => ord != Ordering::Less,
            Operator::Greater => ord == Ordering::Greater,
            Operator::Contains => unreachable!("contains is rejected for ordered types"),
        }
    };
    match (parsed, target) {
        _ if op == Operator::Contains => match (parsed, target) {
            (Value::String(a), Value::String(b)) => Ok(a.trim().to_lowercase().contains(&b.trim().to_lowercase())),
            _ => Err(mismatch(parsed, op, target)),
        },
        (Value::Integer(a), Value::Integer(b)) => Ok(ordering(a.cmp(b))),
        (Value::Duration(a), Value::Duration(b)) => Ok(ordering(a.total_cmp(b))),
        (Value::Boolean(a), Value::Boolean(b)) if !op.is_ordering() => Ok(a == b),
        (Value::String(a), Value::String(b)) if !op.is_ordering() => {
            Ok(a.trim().to_lowercase() == b.trim().to_lowercase())
        }
        _ => match (numeric(parsed), numeric(target)) {
            (Some(a), Some(b)) => Ok(ordering(a.total_cmp(&b))),
            _ => Err(mismatch(parsed, op, target)),
        },
    }
}

/// Applies `operator` to the parsed value and the target.
pub fn assess(parsed: Option<&Value>, operator: Operator, target: &Value) -> Result<AssessmentHint> {
    let Some(value) = parsed else {
        return Ok(AssessmentHint {
            parsed_value: None,
            operator,
            target_value: target.clone(),
            outcome: Outcome::Undetermined,
            rendered: format!("n/a {operator} {target} → Undetermined"),
        });
    };
    let holds = compare(value, operator, target)?;
    Ok(AssessmentHint {
        parsed_value: Some(value.clone()),
        operator,
        target_value: target.clone(),
        outcome: if holds {
            Outcome::Compliant
        } else {
            Outcome::NotCompliant
        },
        rendered: format!("{value} {operator} {target} → {}", if holds { "True" } else { "False" }),
    })
}

/// Parses `answer_text` with the metric's data type and assesses it.
/// Unanswerable results are always undetermined.
pub fn assess_answer(
    metric: &Metric,
    answer_text: &str,
    answerable: bool,
    units: &DurationUnits,
) -> Result<AssessmentHint> {
    let parsed = if answerable {
        parse_value(answer_text, metric.data_type, units)
    } else {
        None
    };
    assess(parsed.as_ref(), metric.operator, &metric.target_value)
}

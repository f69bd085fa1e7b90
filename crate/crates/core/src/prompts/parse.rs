//! Parsers turning raw model output into domain values.
//!
//! Parsers only read; they never touch a [`SlotSet`](crate::slots::SlotSet).
//! Merging parsed values is a separate step in the engine.

use super::AbductionRecord;
use crate::llm::{extract_json_payload, PayloadError};
use crate::slots::{split_categories, SlotDraft, SlotValueMap};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error("expected a JSON object at the top level")]
    NotAnObject,
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("expected a boolean verdict")]
    NoVerdict,
}

/// Recoverable oddities in otherwise usable output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "warning")]
pub enum ParseWarning {
    MissingNewSlotKey,
    MissingTargetSlots,
    /// C was present without an explanation A.
    ReasonWithoutFact,
    /// A was given but C was absent; A was dropped.
    OrphanReason,
    IgnoredValue { slot: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub target_slots: Vec<String>,
    pub question: String,
}

fn object(raw: &str) -> Result<Map<String, Value>, ParseError> {
    match extract_json_payload(raw)? {
        Value::Object(map) => Ok(map),
        _ => Err(ParseError::NotAnObject),
    }
}

/// Lowercased alphanumerics only, so `"Surprising Fact C"` and `"surprising_fact_c"` agree.
fn key_form(key: &str) -> String {
    key.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

fn lookup<'a>(map: &'a Map<String, Value>, candidates: &[&str]) -> Option<&'a Value> {
    let wanted: Vec<String> = candidates.iter().map(|c| key_form(c)).collect();
    map.iter()
        .find(|(k, _)| wanted.contains(&key_form(k)))
        .map(|(_, v)| v)
}

/// Non-empty text; `null`, blank strings and "none"/"null" literals are absent.
fn text_field(value: Option<&Value>) -> Option<String> {
    let text = match value? {
        Value::String(s) => s.trim().to_owned(),
        Value::Null => return None,
        Value::Bool(_) => return None,
        other => other.to_string(),
    };
    let lowered = text.to_lowercase();
    if text.is_empty() || lowered == "null" || lowered == "none" || lowered == "n/a" {
        None
    } else {
        Some(text)
    }
}

fn categories_of(entry: &Value) -> Vec<String> {
    let field = match entry {
        Value::Object(map) => lookup(map, &["category", "categories"]),
        _ => None,
    };
    match field {
        Some(Value::String(s)) => split_categories(s),
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(Value::as_str)
            .flat_map(split_categories)
            .collect(),
        _ => Vec::new(),
    }
}

fn drafts_from(map: &Map<String, Value>, warnings: &mut Vec<ParseWarning>) -> Vec<SlotDraft> {
    map.iter()
        .map(|(name, entry)| {
            if let Value::Object(fields) = entry {
                if text_field(lookup(fields, &["value"])).is_some() {
                    warnings.push(ParseWarning::IgnoredValue { slot: name.clone() });
                }
            }
            SlotDraft::new(name.trim(), categories_of(entry))
        })
        .collect()
}

/// Reads each slot's `value`; null or empty values are omitted.
pub fn parse_slot_fill_output(raw: &str) -> Result<SlotValueMap, ParseError> {
    let map = object(raw)?;
    let mut values = SlotValueMap::new();
    for (name, entry) in &map {
        let value = match entry {
            Value::Object(fields) => text_field(lookup(fields, &["value"])),
            other => text_field(Some(other)),
        };
        if let Some(value) = value {
            values.insert(name, &value);
        }
    }
    Ok(values)
}

/// Each top-level key becomes an unfilled draft.
pub fn parse_slot_gen_direct_output(raw: &str) -> Result<(Vec<SlotDraft>, Vec<ParseWarning>), ParseError> {
    let map = object(raw)?;
    let mut warnings = Vec::new();
    let drafts = drafts_from(&map, &mut warnings);
    Ok((drafts, warnings))
}

pub fn parse_slot_gen_abductive_output(
    raw: &str,
    turn: usize,
) -> Result<(AbductionRecord, Vec<ParseWarning>), ParseError> {
    let map = object(raw)?;
    let mut warnings = Vec::new();
    let fact = text_field(lookup(&map, &["Surprising Fact C", "Surprising Fact", "C"]));
    let mut reason = text_field(lookup(
        &map,
        &["Reason to Suspect A", "Reason to Suspect", "Inferred Matter A", "A"],
    ));
    match (&fact, &reason) {
        (None, Some(_)) => {
            warnings.push(ParseWarning::OrphanReason);
            reason = None;
        }
        (Some(_), None) => warnings.push(ParseWarning::ReasonWithoutFact),
        _ => {}
    }
    let drafts = match lookup(&map, &["New Slot", "New Slots"]) {
        Some(Value::Object(slots)) => drafts_from(slots, &mut warnings),
        Some(Value::Null) => Vec::new(),
        _ => {
            warnings.push(ParseWarning::MissingNewSlotKey);
            Vec::new()
        }
    };
    for w in &warnings {
        tracing::debug!(?w, turn, "abductive generation output warning");
    }
    Ok((
        AbductionRecord {
            surprising_fact_c: fact,
            suspected_reason_a: reason,
            drafts,
            turn,
        },
        warnings,
    ))
}

pub fn parse_question_output(raw: &str) -> Result<(QuestionResult, Vec<ParseWarning>), ParseError> {
    let map = object(raw)?;
    let mut warnings = Vec::new();
    let question = text_field(lookup(&map, &["Question"])).ok_or(ParseError::EmptyQuestion)?;
    let target_slots = match lookup(&map, &["Target Slot S", "Target Slot", "Target Slots"]) {
        Some(Value::Object(slots)) => slots.keys().map(|k| k.trim().to_owned()).collect(),
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(Value::as_str)
            .map(|s| s.trim().to_owned())
            .collect(),
        Some(Value::String(s)) if !s.trim().is_empty() => vec![s.trim().to_owned()],
        _ => Vec::new(),
    };
    if target_slots.is_empty() {
        warnings.push(ParseWarning::MissingTargetSlots);
        tracing::warn!("question output has no target slots");
    }
    Ok((
        QuestionResult {
            target_slots,
            question,
        },
        warnings,
    ))
}

fn verdict(raw: &str, keys: &[&str]) -> Result<bool, ParseError> {
    if let Ok(Value::Object(map)) = extract_json_payload(raw) {
        match lookup(&map, keys) {
            Some(Value::Bool(b)) => return Ok(*b),
            Some(Value::String(s)) => {
                let s = s.trim().to_lowercase();
                if s == "true" || s == "yes" {
                    return Ok(true);
                }
                if s == "false" || s == "no" {
                    return Ok(false);
                }
            }
            _ => {}
        }
    }
    let lowered = raw.trim().to_lowercase();
    if lowered.starts_with("yes") || lowered.starts_with("true") {
        Ok(true)
    } else if lowered.starts_with("no") || lowered.starts_with("false") {
        Ok(false)
    } else {
        Err(ParseError::NoVerdict)
    }
}

/// `{"career_topic": bool}`, or a bare yes/no.
pub fn parse_topic_probe_output(raw: &str) -> Result<bool, ParseError> {
    verdict(raw, &["career_topic"])
}

pub fn parse_coverage_judge_output(raw: &str) -> Result<bool, ParseError> {
    verdict(raw, &["covered"])
}

pub fn parse_value_judge_output(raw: &str) -> Result<bool, ParseError> {
    verdict(raw, &["equivalent"])
}

/// Slot display name to summary sentence.
pub fn parse_report_output(raw: &str) -> Result<IndexMap<String, String>, ParseError> {
    let map = object(raw)?;
    Ok(map
        .iter()
        .filter_map(|(k, v)| {
            let text = match v {
                Value::Object(fields) => text_field(lookup(fields, &["summary", "value"])),
                other => text_field(Some(other)),
            };
            text.map(|t| (k.trim().to_owned(), t))
        })
        .collect())
}

//! Strict parsing of model replies.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::{IntentSummary, SuggestionKind, SuggestionSet};
use crate::error::{Error, Result};
use crate::evalkit::{Rubric, ScoreCard};

/// Removes one surrounding markdown code fence, with or without a language tag.
pub fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    let Some(inner) = t.strip_prefix("```") else {
        return t;
    };
    let Some(inner) = inner.strip_suffix("```") else {
        return t;
    };
    // Drop the info string (e.g. `json`) on the opening line.
    match inner.find('\n') {
        Some(nl) if !inner[..nl].trim_start().starts_with('{') => inner[nl + 1..].trim(),
        _ => inner.trim(),
    }
}

fn object(raw: &str) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(strip_fences(raw)) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::Parse("expected a JSON object".into())),
        Err(e) => Err(Error::Parse(format!("malformed JSON: {e}"))),
    }
}

fn text_field(map: &Map<String, Value>, key: &str) -> Result<String> {
    match map.get(key) {
        None => Err(Error::Parse(format!("missing {key}"))),
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_owned()),
        Some(Value::String(_)) => Err(Error::Parse(format!("empty {key}"))),
        Some(_) => Err(Error::Parse(format!("{key} is not a string"))),
    }
}

/// Reads `{"Operation": ..., "Intent": ...}`; keys are case-sensitive.
pub fn parse_intent_response(raw: &str) -> Result<IntentSummary> {
    let map = object(raw)?;
    Ok(IntentSummary {
        operation: text_field(&map, "Operation")?,
        intent: text_field(&map, "Intent")?,
    })
}

/// Reads `{"Suggestions": ["...", ...]}` with at least one nonempty entry.
pub fn parse_suggestions(raw: &str, kind: SuggestionKind) -> Result<SuggestionSet> {
    let map = object(raw)?;
    let list = map
        .get("Suggestions")
        .ok_or_else(|| Error::Parse("missing Suggestions".into()))?
        .as_array()
        .ok_or_else(|| Error::Parse("Suggestions is not a list".into()))?;
    let suggestions = list
        .iter()
        .map(|v| match v.as_str().map(str::trim) {
            Some(s) if !s.is_empty() => Ok(s.to_owned()),
            _ => Err(Error::Parse("suggestions must be nonempty strings".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    if suggestions.is_empty() {
        return Err(Error::Parse("empty suggestion list".into()));
    }
    Ok(SuggestionSet { kind, suggestions })
}

/// Reads a JSON map from the rubric's five metric names to integers 0-2.
pub fn parse_scorecard(raw: &str, rubric: Rubric) -> Result<ScoreCard> {
    let map = object(raw)?;
    let mut scores = BTreeMap::new();
    for (metric, value) in &map {
        let score = value
            .as_u64()
            .filter(|_| value.is_u64())
            .ok_or_else(|| Error::Rubric(format!("score for {metric} is not a non-negative integer")))?;
        let score = u8::try_from(score).map_err(|_| Error::Rubric(format!("score out of range: {metric} = {score}")))?;
        scores.insert(metric.clone(), score);
    }
    ScoreCard::new(rubric, scores)
}

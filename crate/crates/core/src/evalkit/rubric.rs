//! Five-metric rubrics on a 0-2 scale and their aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rubric {
    Summary,
    Suggestion,
}

pub const SUMMARY_METRICS: [&str; 5] = [
    "Action Information Completeness",
    "Action Sequence Accuracy",
    "Object Detail Accuracy",
    "Output Format Standardization",
    "Generated Intent Reasonableness",
];

pub const SUGGESTION_METRICS: [&str; 5] = ["Relevance", "Usefulness", "Clarity", "Executability", "Novelty/Surprise"];

pub const MAX_SCORE: u8 = 2;

impl Rubric {
    pub fn metrics(self) -> [&'static str; 5] {
        match self {
            Rubric::Summary => SUMMARY_METRICS,
            Rubric::Suggestion => SUGGESTION_METRICS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rubric::Summary => "summary",
            Rubric::Suggestion => "suggestion",
        }
    }
}

impl fmt::Display for Rubric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rubric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "summary" => Ok(Rubric::Summary),
            "suggestion" => Ok(Rubric::Suggestion),
            other => Err(Error::InvalidParam(format!("unknown rubric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub rubric: Rubric,
    pub scores: BTreeMap<String, u8>,
}

impl ScoreCard {
    /// Validates that exactly the rubric's five metrics are present and
    /// every score lies in `0..=2`.
    pub fn new(rubric: Rubric, scores: BTreeMap<String, u8>) -> Result<Self> {
        for (metric, &score) in &scores {
            if !rubric.metrics().contains(&metric.as_str()) {
                return Err(Error::Rubric(format!("unknown metric {metric:?} for the {rubric} rubric")));
            }
            if score > MAX_SCORE {
                return Err(Error::Rubric(format!("score out of range: {metric} = {score}")));
            }
        }
        if let Some(missing) = rubric.metrics().iter().find(|m| !scores.contains_key(**m)) {
            return Err(Error::Rubric(format!("incomplete rubric: missing {missing}")));
        }
        Ok(Self { rubric, scores })
    }

    pub fn get(&self, metric: &str) -> Option<u8> {
        self.scores.get(metric).copied()
    }

    pub fn total(&self) -> u32 {
        self.scores.values().map(|&v| v as u32).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub metric: String,
    pub sum: u32,
    /// Mean of `score / 2`.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorecardAggregate {
    pub rubric: Rubric,
    pub n: usize,
    pub metrics: Vec<MetricAggregate>,
}

/// Per-metric sums and normalized means, in rubric order.
pub fn aggregate_scorecards(cards: &[ScoreCard]) -> Result<ScorecardAggregate> {
    let first = cards.first().ok_or(Error::EmptyInput("no score cards"))?;
    let rubric = first.rubric;
    if cards.iter().any(|c| c.rubric != rubric) {
        return Err(Error::Rubric("score cards mix rubrics".into()));
    }
    let n = cards.len();
    let metrics = rubric
        .metrics()
        .iter()
        .map(|&m| {
            let sum: u32 = cards.iter().map(|c| c.get(m).unwrap_or(0) as u32).sum();
            MetricAggregate {
                metric: m.to_owned(),
                sum,
                normalized: sum as f64 / (MAX_SCORE as f64 * n as f64),
            }
        })
        .collect();
    Ok(ScorecardAggregate { rubric, n, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn card(rubric: Rubric, values: [u8; 5]) -> ScoreCard {
        let scores = rubric
            .metrics()
            .iter()
            .zip(values)
            .map(|(m, v)| (m.to_string(), v))
            .collect();
        ScoreCard::new(rubric, scores).unwrap()
    }

    #[test]
    fn validation() {
        assert_eq!(card(Rubric::Summary, [2; 5]).total(), 10);
        let mut scores: BTreeMap<String, u8> = SUMMARY_METRICS.iter().map(|m| (m.to_string(), 1)).collect();
        scores.insert(SUMMARY_METRICS[0].into(), 3);
        let err = ScoreCard::new(Rubric::Summary, scores.clone()).unwrap_err();
        assert!(err.to_string().contains("score out of range"));
        scores.remove(SUMMARY_METRICS[0]);
        let err = ScoreCard::new(Rubric::Summary, scores).unwrap_err();
        assert!(err.to_string().contains("incomplete rubric"));
    }

    #[test]
    fn aggregation_examples() {
        let all_twos: Vec<ScoreCard> = (0..30).map(|_| card(Rubric::Summary, [2; 5])).collect();
        let agg = aggregate_scorecards(&all_twos).unwrap();
        assert!(agg.metrics.iter().all(|m| m.sum == 60 && m.normalized == 1.0));
        assert!(aggregate_scorecards(&[]).is_err());
        let mixed = vec![card(Rubric::Summary, [2; 5]), card(Rubric::Suggestion, [2; 5])];
        assert!(aggregate_scorecards(&mixed).is_err());
    }

    #[test]
    fn expert_sums_normalize() {
        // 30 cards whose per-metric sums are 57, 58, 54, 58, 57.
        let sums = [57u32, 58, 54, 58, 57];
        let cards: Vec<ScoreCard> = (0..30)
            .map(|i| {
                let mut v = [2u8; 5];
                for (k, &s) in sums.iter().enumerate() {
                    let ones = 60 - s as usize;
                    if i < ones {
                        v[k] = 1;
                    }
                }
                card(Rubric::Summary, v)
            })
            .collect();
        let agg = aggregate_scorecards(&cards).unwrap();
        let got: Vec<u32> = agg.metrics.iter().map(|m| m.sum).collect();
        assert_eq!(got, sums);
        let rounded: Vec<f64> = agg.metrics.iter().map(|m| (m.normalized * 100.0).round() / 100.0).collect();
        assert_eq!(rounded, vec![0.95, 0.97, 0.90, 0.97, 0.95]);
    }
}

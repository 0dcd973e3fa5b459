//! Format and total rewards for intent summaries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embed::{embedding_similarity, EmbeddingProvider};
use super::text::{rouge_all, tokenize};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub w_sim: f64,
    pub w_fmt: f64,
    /// Share of the similarity taken by the embedding cosine.
    pub sim_sbert_weight: f64,
    /// Share taken by the mean ROUGE F1.
    pub sim_rouge_weight: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_sim: 0.8,
            w_fmt: 0.2,
            sim_sbert_weight: 0.7,
            sim_rouge_weight: 0.3,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if self.w_sim < 0.0 || self.w_fmt < 0.0 || self.sim_sbert_weight < 0.0 || self.sim_rouge_weight < 0.0 {
            return Err(Error::InvalidParam("reward weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Inclusive count range `[min, max]`; `max = None` is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub min: usize,
    pub max: Option<usize>,
    pub score: f64,
}

impl Band {
    fn new(min: usize, max: Option<usize>, score: f64) -> Self {
        Self { min, max, score }
    }

    fn contains(&self, n: usize) -> bool {
        n >= self.min && self.max.is_none_or(|m| n <= m)
    }
}

fn band_score(bands: &[Band], n: usize, default: f64) -> f64 {
    bands.iter().find(|b| b.contains(n)).map_or(default, |b| b.score)
}

/// Point values for the four format components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormatTable {
    /// Scored on the character count of the trimmed text.
    pub length_bands: Vec<Band>,
    pub length_default: f64,
    /// Characters counted as intra-sentence delimiters.
    pub delimiters: String,
    pub delimiter_bands: Vec<Band>,
    pub delimiter_default: f64,
    pub digit_score: f64,
    pub location_score: f64,
}

impl Default for FormatTable {
    fn default() -> Self {
        Self {
            length_bands: vec![
                Band::new(20, Some(50), 1.0),
                Band::new(10, Some(19), 0.5),
                Band::new(51, Some(70), 0.5),
                Band::new(71, Some(100), 0.0),
                Band::new(101, None, -0.5),
            ],
            length_default: 0.0,
            delimiters: ",，、;；:：".into(),
            delimiter_bands: vec![Band::new(0, Some(2), 1.0), Band::new(3, Some(4), 0.5)],
            delimiter_default: 0.0,
            digit_score: 1.0,
            location_score: 1.0,
        }
    }
}

/// Location keywords, matched case-insensitively as substrings.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationLexicon {
    keywords: Vec<String>,
}

const BUNDLED_LEXICON: &str = include_str!("../../lexicon/locations.txt");

impl Default for LocationLexicon {
    fn default() -> Self {
        Self::parse(BUNDLED_LEXICON)
    }
}

impl LocationLexicon {
    /// One keyword per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        let keywords = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self { keywords }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn new(keywords: impl IntoIterator<Item = String>) -> Self {
        Self {
            keywords: keywords.into_iter().map(|k| k.to_lowercase()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn matches(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        self.keywords.iter().any(|k| lower.contains(k.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormatBreakdown {
    pub length: f64,
    pub delimiters: f64,
    pub digits: f64,
    pub location: f64,
    /// Mean of the four components.
    pub score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FormatScorer {
    pub table: FormatTable,
    pub lexicon: LocationLexicon,
}

impl FormatScorer {
    /// Blank text scores 0 on every component.
    pub fn score(&self, pred: &str) -> FormatBreakdown {
        let text = pred.trim();
        if text.is_empty() {
            return FormatBreakdown {
                length: 0.0,
                delimiters: 0.0,
                digits: 0.0,
                location: 0.0,
                score: 0.0,
            };
        }
        let t = &self.table;
        let length = band_score(&t.length_bands, text.chars().count(), t.length_default);
        let delims = text.chars().filter(|c| t.delimiters.contains(*c)).count();
        let delimiters = band_score(&t.delimiter_bands, delims, t.delimiter_default);
        let digits = if text.chars().any(|c| c.is_numeric()) {
            t.digit_score
        } else {
            0.0
        };
        let location = if self.lexicon.matches(text) {
            t.location_score
        } else {
            0.0
        };
        let score = ((length + delimiters + digits + location) / 4.0).clamp(-1.0, 1.0);
        FormatBreakdown {
            length,
            delimiters,
            digits,
            location,
            score,
        }
    }
}

pub fn format_reward(pred: &str, scorer: &FormatScorer) -> f64 {
    scorer.score(pred).score
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub embedding: f64,
    pub rouge_mean: f64,
    pub similarity: f64,
    pub format: f64,
    pub total: f64,
}

/// `clip(w_sim * similarity + w_fmt * format, -1, 1)`.
pub fn combine(similarity: f64, format: f64, w: &RewardWeights) -> f64 {
    (w.w_sim * similarity + w.w_fmt * format).clamp(-1.0, 1.0)
}

/// Similarity is `sim_sbert_weight * cosine + sim_rouge_weight * mean ROUGE F1`.
/// A blank prediction has no embedding and gets a cosine of 0.
pub fn total_reward(
    pred: &str,
    label: &str,
    provider: &dyn EmbeddingProvider,
    w: &RewardWeights,
    scorer: &FormatScorer,
) -> Result<RewardBreakdown> {
    if tokenize(label).is_empty() {
        return Err(Error::Eval("label is empty".into()));
    }
    let embedding = if tokenize(pred).is_empty() {
        0.0
    } else {
        embedding_similarity(pred, label, provider)?
    };
    let rouge_mean = rouge_all(pred, label)?.mean();
    let similarity = w.sim_sbert_weight * embedding + w.sim_rouge_weight * rouge_mean;
    let format = format_reward(pred, scorer);
    Ok(RewardBreakdown {
        embedding,
        rouge_mean,
        similarity,
        format,
        total: combine(similarity, format, w),
    })
}

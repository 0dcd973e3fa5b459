//! Tokenization and ROUGE.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScores {
    pub fn from_counts(overlap: usize, pred_total: usize, ref_total: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(overlap, pred_total);
        let recall = ratio(overlap, ref_total);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Han ideographs, kana and Hangul syllables are scored one character at a time.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FFFF)
}

/// Lowercased tokens: each CJK character on its own, other alphanumeric
/// runs split at whitespace and punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if is_cjk(c) || !c.is_alphanumeric() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if is_cjk(c) {
                out.push(c.to_string());
            }
        } else {
            word.extend(c.to_lowercase());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap between token sequences.
pub fn rouge_n_tokens(pred: &[String], reference: &[String], n: usize) -> Result<RougeScores> {
    if n == 0 {
        return Err(Error::InvalidParam("ROUGE n must be at least 1".into()));
    }
    if reference.len() < n {
        return Err(Error::Eval(format!(
            "reference has {} tokens, too short for ROUGE-{n}",
            reference.len()
        )));
    }
    let p = ngram_counts(pred, n);
    let r = ngram_counts(reference, n);
    let overlap = p
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    let pred_total = pred.len().saturating_sub(n - 1);
    Ok(RougeScores::from_counts(overlap, pred_total, reference.len() - n + 1))
}

pub fn rouge_n(pred: &str, reference: &str, n: usize) -> Result<RougeScores> {
    rouge_n_tokens(&tokenize(pred), &tokenize(reference), n)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l_tokens(pred: &[String], reference: &[String]) -> Result<RougeScores> {
    if reference.is_empty() {
        return Err(Error::Eval("empty reference".into()));
    }
    Ok(RougeScores::from_counts(lcs_len(pred, reference), pred.len(), reference.len()))
}

pub fn rouge_l(pred: &str, reference: &str) -> Result<RougeScores> {
    rouge_l_tokens(&tokenize(pred), &tokenize(reference))
}

/// ROUGE-1, ROUGE-2 and ROUGE-L F1 for one pair. ROUGE-2 is `None` when the
/// reference has a single token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeTriple {
    pub rouge1: f64,
    pub rouge2: Option<f64>,
    pub rouge_l: f64,
}

impl RougeTriple {
    pub fn mean(&self) -> f64 {
        match self.rouge2 {
            Some(r2) => (self.rouge1 + r2 + self.rouge_l) / 3.0,
            None => (self.rouge1 + self.rouge_l) / 2.0,
        }
    }
}

pub fn rouge_all(pred: &str, reference: &str) -> Result<RougeTriple> {
    let (p, r) = (tokenize(pred), tokenize(reference));
    Ok(RougeTriple {
        rouge1: rouge_n_tokens(&p, &r, 1)?.f1,
        rouge2: if r.len() >= 2 {
            Some(rouge_n_tokens(&p, &r, 2)?.f1)
        } else {
            None
        },
        rouge_l: rouge_l_tokens(&p, &r)?.f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("打开App"), toks(&["打", "开", "app"]));
        assert_eq!(tokenize("a  b"), toks(&["a", "b"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Book, 2025-tour!"), toks(&["book", "2025", "tour"]));
        assert_eq!(tokenize("杭州，Leon演唱会"), toks(&["杭", "州", "leon", "演", "唱", "会"]));
    }

    #[test]
    fn rouge_n_examples() {
        assert_eq!(rouge_n("a b c", "a b c", 1).unwrap().f1, 1.0);
        assert!((rouge_n("a b c", "a b d", 1).unwrap().f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_n("x y", "a b", 1).unwrap().f1, 0.0);
        assert!(rouge_n("a b", "a", 2).is_err());
        assert_eq!(rouge_n("a", "a b", 2).unwrap().f1, 0.0);
    }

    #[test]
    fn clipping_limits_repeated_grams() {
        let s = rouge_n("the the the", "the cat", 1).unwrap();
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rouge_l_examples() {
        assert_eq!(rouge_l("a b c", "a b c").unwrap().f1, 1.0);
        assert!((rouge_l("a c b", "a b c").unwrap().f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(rouge_l("a", "").is_err());
        assert_eq!(lcs_len(&[1, 2, 3, 4], &[2, 4]), 2);
    }

    #[test]
    fn single_token_reference_skips_bigrams() {
        let t = rouge_all("打", "打").unwrap();
        assert_eq!(t.rouge2, None);
        assert_eq!(t.mean(), 1.0);
    }
}

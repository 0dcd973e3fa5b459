//! Descriptor matching and vertical offset estimation.

use serde::{Deserialize, Serialize};

use super::orb::Descriptor;
use super::StitchParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPair {
    pub query_index: usize,
    pub best_train_index: usize,
    pub d1: u32,
    pub d2: u32,
}

/// A matched point in the accumulated image and in the incoming one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub acc: (f64, f64),
    pub next: (f64, f64),
}

/// Best and second-best Hamming matches in `train` for every query
/// descriptor. Queries are dropped when `train` has fewer than two entries.
pub fn knn_match(query: &[Descriptor], train: &[Descriptor], k: usize) -> Result<Vec<MatchPair>> {
    if k < 2 {
        return Err(Error::InvalidParam(format!("knn k must be at least 2, got {k}")));
    }
    if train.len() < 2 {
        return Ok(Vec::new());
    }
    Ok(query
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            let (mut best, mut d1, mut d2) = (0, u32::MAX, u32::MAX);
            for (ti, t) in train.iter().enumerate() {
                let d = q.distance(t);
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                    best = ti;
                } else if d < d2 {
                    d2 = d;
                }
            }
            MatchPair {
                query_index: qi,
                best_train_index: best,
                d1,
                d2,
            }
        })
        .collect())
}

/// Lowe's ratio test: keeps pairs with `d1 / d2 < tau`; `d2 = 0` is rejected.
pub fn lowe_filter(pairs: &[MatchPair], tau: f64) -> Vec<MatchPair> {
    pairs
        .iter()
        .filter(|m| m.d2 > 0 && (m.d1 as f64) < tau * m.d2 as f64)
        .copied()
        .collect()
}

fn upper_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Median of `y_acc - y_next` over the matches: the row of the accumulated
/// image where the incoming image's first row lands.
pub fn overlap_offset(matches: &[Correspondence], p: &StitchParams) -> Result<i64> {
    if matches.len() < p.min_matches {
        return Err(Error::TooFewMatches {
            found: matches.len(),
            required: p.min_matches,
        });
    }
    let drift = upper_median(matches.iter().map(|m| (m.acc.0 - m.next.0).abs()).collect());
    if drift > p.max_x_drift {
        return Err(Error::HorizontalDrift {
            drift,
            max: p.max_x_drift,
        });
    }
    let y = upper_median(matches.iter().map(|m| m.acc.1 - m.next.1).collect());
    Ok(y.round() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stitch::orb::Keypoint;

    fn desc(bits: [u64; 4]) -> Descriptor {
        Descriptor {
            bits,
            keypoint: Keypoint {
                x: 0.0,
                y: 0.0,
                score: 1.0,
                orientation: 0.0,
            },
        }
    }

    fn offsets(dys: &[f64]) -> Vec<Correspondence> {
        dys.iter()
            .map(|&dy| Correspondence {
                acc: (50.0, 200.0 + dy),
                next: (50.0, 200.0),
            })
            .collect()
    }

    #[test]
    fn identical_descriptor_matches_at_zero() {
        let train = vec![desc([1, 2, 3, 4]), desc([!0, 0, 0, 0]), desc([0; 4])];
        let m = knn_match(&[desc([!0, 0, 0, 0])], &train, 2).unwrap();
        assert_eq!(m[0].best_train_index, 1);
        assert_eq!(m[0].d1, 0);
        assert!(m[0].d1 <= m[0].d2);
    }

    #[test]
    fn single_train_descriptor_leaves_queries_unmatched() {
        assert!(knn_match(&[desc([0; 4])], &[desc([0; 4])], 2).unwrap().is_empty());
        assert!(knn_match(&[desc([0; 4])], &[desc([0; 4]), desc([1; 4])], 1).is_err());
    }

    #[test]
    fn ratio_examples() {
        let pair = |d1, d2| MatchPair {
            query_index: 0,
            best_train_index: 0,
            d1,
            d2,
        };
        assert_eq!(lowe_filter(&[pair(10, 30)], 0.5).len(), 1);
        assert!(lowe_filter(&[pair(20, 30)], 0.5).is_empty());
        assert!(lowe_filter(&[pair(0, 0)], 0.5).is_empty());
    }

    #[test]
    fn offset_examples() {
        let p = StitchParams {
            min_matches: 2,
            ..StitchParams::default()
        };
        assert_eq!(overlap_offset(&offsets(&[100.0, 101.0, 99.0, 100.0, 250.0]), &p).unwrap(), 100);
        assert_eq!(overlap_offset(&offsets(&[10.0, 20.0]), &p).unwrap(), 20);
        let strict = StitchParams::default();
        assert!(matches!(
            overlap_offset(&offsets(&[1.0; 5]), &strict),
            Err(Error::TooFewMatches { found: 5, required: 10 })
        ));
    }

    #[test]
    fn drift_is_rejected() {
        let moved: Vec<Correspondence> = offsets(&[40.0; 12])
            .into_iter()
            .map(|c| Correspondence {
                next: (c.next.0 + 9.0, c.next.1),
                ..c
            })
            .collect();
        assert!(matches!(
            overlap_offset(&moved, &StitchParams::default()),
            Err(Error::HorizontalDrift { .. })
        ));
    }
}

//! Report builders behind `fcmir eval`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::Config;
use super::parallel_map;
use super::pipeline::spread_indices;
use crate::error::{Error, Result};
use crate::evalkit::{
    aggregate_scorecards, agreement, embedding_similarity, ols_fit, rouge_all, total_reward, EmbeddingProvider,
    FormatScorer, RegressionFit, RewardBreakdown, RewardWeights, Rubric, ScoreCard, ScorecardAggregate,
};
use crate::ingest::{load_frames, Comparator, LoadOptions, SamplingParams, SourceKind};
use crate::keyframe::{retained_frames, select_keyframes};
use crate::llm::{judge_score, summarize_intent, Client, PromptTemplate, TemplateKind};
use crate::synth::read_truth;

/// Reads a headed CSV; schema problems name the file and line.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::Headers)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse(format!("{}:{line}: {e}", path.display()))
        })?);
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PairRow {
    #[serde(default)]
    pub id: String,
    pub prediction: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub id: String,
    pub rouge1: f64,
    /// Empty when the reference has a single token.
    pub rouge2: Option<f64>,
    pub rouge_l: f64,
    pub sbert: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMeans {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub sbert: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub embedder: String,
    pub n: usize,
    pub mean: SimilarityMeans,
    pub rows: Vec<SimilarityRow>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// ROUGE F1 and embedding cosine per pair, with column means.
pub fn similarity_report(rows: &[PairRow], provider: &dyn EmbeddingProvider, jobs: usize) -> Result<SimilarityReport> {
    let scored = parallel_map(rows, jobs, |r| -> Result<SimilarityRow> {
        let t = rouge_all(&r.prediction, &r.reference)?;
        let sbert = if r.prediction.trim().is_empty() {
            0.0
        } else {
            embedding_similarity(&r.prediction, &r.reference, provider)?
        };
        Ok(SimilarityRow {
            id: r.id.clone(),
            rouge1: t.rouge1,
            rouge2: t.rouge2,
            rouge_l: t.rouge_l,
            sbert,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityReport {
        embedder: provider.identity(),
        n: scored.len(),
        mean: SimilarityMeans {
            rouge1: mean(scored.iter().map(|r| r.rouge1)),
            rouge2: mean(scored.iter().filter_map(|r| r.rouge2)),
            rouge_l: mean(scored.iter().map(|r| r.rouge_l)),
            sbert: mean(scored.iter().map(|r| r.sbert)),
        },
        rows: scored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub id: String,
    pub embedding: f64,
    pub rouge_mean: f64,
    pub similarity: f64,
    pub format: f64,
    pub total: f64,
}

impl RewardRow {
    fn new(id: String, r: RewardBreakdown) -> Self {
        Self {
            id,
            embedding: r.embedding,
            rouge_mean: r.rouge_mean,
            similarity: r.similarity,
            format: r.format,
            total: r.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardReport {
    pub embedder: String,
    pub weights: RewardWeights,
    pub n: usize,
    pub mean_total: f64,
    pub rows: Vec<RewardRow>,
}

pub fn reward_report(
    rows: &[PairRow],
    provider: &dyn EmbeddingProvider,
    weights: &RewardWeights,
    scorer: &FormatScorer,
    jobs: usize,
) -> Result<RewardReport> {
    let scored = parallel_map(rows, jobs, |r| {
        total_reward(&r.prediction, &r.reference, provider, weights, scorer).map(|reward| RewardRow::new(r.id.clone(), reward))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(RewardReport {
        embedder: provider.identity(),
        weights: weights.clone(),
        n: scored.len(),
        mean_total: mean(scored.iter().map(|r| r.total)),
        rows: scored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedCard {
    pub id: String,
    pub card: ScoreCard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub cards: Vec<JudgedCard>,
    pub aggregate: ScorecardAggregate,
}

/// One judge call per row, issued concurrently up to `jobs`.
pub fn judge_report(
    rows: &[PairRow],
    client: &Client,
    tpl: &PromptTemplate,
    rubric: Rubric,
    jobs: usize,
) -> Result<JudgeReport> {
    let indexed: Vec<(usize, &PairRow)> = rows.iter().enumerate().collect();
    let cards = parallel_map(&indexed, jobs, |(i, r)| {
        let label = if r.id.is_empty() {
            format!("judge-{i:05}")
        } else {
            format!("judge-{}", r.id)
        };
        judge_score(client, tpl, &r.prediction, &r.reference, rubric, &label).map(|(card, _)| JudgedCard {
            id: r.id.clone(),
            card,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate_scorecards(&cards.iter().map(|c| c.card.clone()).collect::<Vec<_>>())?;
    Ok(JudgeReport { cards, aggregate })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RatingRow {
    pub metric: String,
    pub a: u8,
    pub b: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub metric: String,
    pub n: usize,
    pub accuracy: f64,
    /// Empty when chance agreement is 1 and kappa is undefined.
    pub kappa: Option<f64>,
}

/// Accuracy and Cohen's kappa between raters `a` and `b`, per metric in
/// first-seen order.
pub fn agreement_report(rows: &[RatingRow]) -> Result<Vec<AgreementRow>> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_metric: BTreeMap<&str, (Vec<u8>, Vec<u8>)> = BTreeMap::new();
    for r in rows {
        if !by_metric.contains_key(r.metric.as_str()) {
            order.push(&r.metric);
        }
        let e = by_metric.entry(&r.metric).or_default();
        e.0.push(r.a);
        e.1.push(r.b);
    }
    order
        .into_iter()
        .map(|m| {
            let (a, b) = &by_metric[m];
            let s = agreement(a, b).map_err(|e| Error::Eval(format!("{m}: {e}")))?;
            Ok(AgreementRow {
                metric: m.to_owned(),
                n: s.n,
                accuracy: s.accuracy,
                kappa: s.kappa,
            })
        })
        .collect()
}

/// Pulls numeric columns `x` and `y` out of a headed CSV.
pub fn read_xy(path: &Path, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows: Vec<BTreeMap<String, String>> = read_csv(path)?;
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        let get = |col: &str| -> Result<f64> {
            let v = row
                .get(col)
                .ok_or_else(|| Error::Parse(format!("{}: no column {col:?}", path.display())))?;
            v.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{}:{line}: {col} = {v:?} is not a number", path.display())))
        };
        xs.push(get(x)?);
        ys.push(get(y)?);
    }
    Ok((xs, ys))
}

pub fn regression_report(xs: &[f64], ys: &[f64]) -> Result<RegressionFit> {
    ols_fit(xs, ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub comparator: Comparator,
    pub trajectories: usize,
    pub frames_sampled: usize,
    pub frames_retained: usize,
    /// Pooled over the corpus.
    pub frame_compression_pct: f64,
    pub pixel_compression_pct: f64,
    /// Ground-truth screens with no retained frame; empty without truth files.
    pub screens_lost: Option<usize>,
    pub rouge1: Option<f64>,
    pub rouge2: Option<f64>,
    pub rouge_l: Option<f64>,
    pub sbert: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub corpus: PathBuf,
    pub embedder: Option<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// Fixed-width text table, one row per comparator.
    pub fn render_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.4}"));
        let mut s = format!(
            "{:<12} {:>8} {:>8} {:>10} {:>10} {:>7} {:>8} {:>8} {:>8} {:>8}\n",
            "comparator", "sampled", "kept", "frame_cr%", "pixel_cr%", "lost", "ROUGE-1", "ROUGE-2", "ROUGE-L", "SBERT"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<12} {:>8} {:>8} {:>10.2} {:>10.2} {:>7} {:>8} {:>8} {:>8} {:>8}\n",
                r.comparator.name(),
                r.frames_sampled,
                r.frames_retained,
                r.frame_compression_pct,
                r.pixel_compression_pct,
                r.screens_lost.map_or_else(|| "-".to_owned(), |n| n.to_string()),
                opt(r.rouge1),
                opt(r.rouge2),
                opt(r.rouge_l),
                opt(r.sbert),
            ));
        }
        s
    }
}

/// Subdirectories of `corpus` holding frames, sorted by name.
pub fn corpus_entries(corpus: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(corpus)
        .map_err(|e| Error::io(corpus, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::NoFrames { path: corpus.into() });
    }
    Ok(dirs)
}

struct EntryResult {
    sampled: usize,
    retained: usize,
    sampled_px: u64,
    retained_px: u64,
    lost: Option<usize>,
    similarity: Option<(f64, Option<f64>, f64, f64)>,
}

/// Keyframe selection on every corpus entry under each comparator. With a
/// client, retained keyframes are also summarized and the `Operation` text is
/// scored against the entry's truth label.
pub fn ablation_report(
    corpus: &Path,
    cfg: &Config,
    comparators: &[Comparator],
    model: Option<(&Client, &PromptTemplate, &dyn EmbeddingProvider)>,
    jobs: usize,
) -> Result<AblationReport> {
    let entries = corpus_entries(corpus)?;
    let opts = LoadOptions {
        fps: cfg.sampling.fps,
        decoder_cmd: cfg.ingest.decoder_cmd.clone(),
    };
    let mut rows = Vec::new();
    for &comparator in comparators {
        let params = SamplingParams {
            comparator,
            ..cfg.sampling.clone()
        };
        let results = parallel_map(&entries, jobs, |dir| -> Result<EntryResult> {
            let frames = load_frames(dir, SourceKind::FrameDir, &opts)?;
            let id = super::pipeline::source_id(dir);
            let km = select_keyframes(&id, &frames, &params, &cfg.ssim)?;
            let kept = retained_frames(&km, &frames);
            let sampled_px = km
                .sampled_indices
                .iter()
                .filter_map(|i| frames.iter().find(|f| f.index == *i))
                .map(|f| f.area())
                .sum();
            let truth = dir.join("truth.json").exists().then(|| read_truth(dir)).transpose()?;
            let lost = truth.as_ref().map(|t| {
                let covered: std::collections::BTreeSet<usize> =
                    kept.iter().filter_map(|f| t.screen_of.get(f.index).copied()).collect();
                t.distinct_screens - covered.len().min(t.distinct_screens)
            });
            let similarity = match (model, &truth) {
                (Some((client, tpl, provider)), Some(t)) if !t.label.is_empty() => {
                    let max = client.config().max_images.min(tpl.max_images).max(1);
                    let imgs: Vec<_> = spread_indices(kept.len(), max)
                        .into_iter()
                        .map(|i| kept[i].pixels.clone())
                        .collect();
                    let label = format!("{id}-{}", comparator.name());
                    let (s, _) = summarize_intent(client, tpl, &imgs, &cfg.pipeline.context, &label)?;
                    let r = rouge_all(&s.operation, &t.label)?;
                    let sb = embedding_similarity(&s.operation, &t.label, provider)?;
                    Some((r.rouge1, r.rouge2, r.rouge_l, sb))
                }
                _ => None,
            };
            Ok(EntryResult {
                sampled: km.sampled_indices.len(),
                retained: kept.len(),
                sampled_px,
                retained_px: kept.iter().map(|f| f.area()).sum(),
                lost,
                similarity,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        let sampled: usize = results.iter().map(|r| r.sampled).sum();
        let retained: usize = results.iter().map(|r| r.retained).sum();
        let sampled_px: u64 = results.iter().map(|r| r.sampled_px).sum();
        let retained_px: u64 = results.iter().map(|r| r.retained_px).sum();
        let pct = |kept: f64, total: f64| if total == 0.0 { 0.0 } else { (1.0 - kept / total) * 100.0 };
        let sims: Vec<_> = results.iter().filter_map(|r| r.similarity).collect();
        let col = |f: &dyn Fn(&(f64, Option<f64>, f64, f64)) -> Option<f64>| {
            let v: Vec<f64> = sims.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| mean(v.into_iter()))
        };
        rows.push(AblationRow {
            comparator,
            trajectories: results.len(),
            frames_sampled: sampled,
            frames_retained: retained,
            frame_compression_pct: pct(retained as f64, sampled as f64),
            pixel_compression_pct: pct(retained_px as f64, sampled_px as f64),
            screens_lost: results.iter().map(|r| r.lost).sum(),
            rouge1: col(&|s| Some(s.0)),
            rouge2: col(&|s| s.1),
            rouge_l: col(&|s| Some(s.2)),
            sbert: col(&|s| Some(s.3)),
        });
    }
    Ok(AblationReport {
        corpus: corpus.into(),
        embedder: model.map(|(_, _, p)| p.identity()),
        rows,
    })
}

/// Template used by `eval judge` for a rubric.
pub fn judge_template_kind(rubric: Rubric) -> TemplateKind {
    match rubric {
        Rubric::Summary => TemplateKind::JudgeSummary,
        Rubric::Suggestion => TemplateKind::JudgeSuggestion,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::HashingEmbedder;

    fn pairs(v: &[(&str, &str)]) -> Vec<PairRow> {
        v.iter()
            .enumerate()
            .map(|(i, (p, r))| PairRow {
                id: i.to_string(),
                prediction: p.to_string(),
                reference: r.to_string(),
            })
            .collect()
    }

    #[test]
    fn similarity_means() {
        let rows = pairs(&[("a b c", "a b c"), ("x y", "a b")]);
        let rep = similarity_report(&rows, &HashingEmbedder::default(), 2).unwrap();
        assert_eq!(rep.rows[0].rouge1, 1.0);
        assert_eq!(rep.rows[1].rouge1, 0.0);
        assert!((rep.mean.rouge1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn agreement_groups_by_metric() {
        let rows = vec![
            RatingRow { metric: "B".into(), a: 2, b: 2 },
            RatingRow { metric: "A".into(), a: 1, b: 2 },
            RatingRow { metric: "B".into(), a: 1, b: 1 },
            RatingRow { metric: "A".into(), a: 2, b: 2 },
        ];
        let rep = agreement_report(&rows).unwrap();
        assert_eq!(rep[0].metric, "B");
        assert_eq!(rep[0].accuracy, 1.0);
        assert_eq!(rep[0].kappa, Some(1.0));
        assert_eq!(rep[1].accuracy, 0.5);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "metric,a,b\nX,1,2\nX,1,seven\n").unwrap();
        let err = read_csv::<RatingRow>(&p).unwrap_err().to_string();
        assert!(err.contains("r.csv:3"), "{err}");
        std::fs::write(&p, "x,y\n1,2\n2,4\n3,oops\n").unwrap();
        let err = read_xy(&p, "x", "y").unwrap_err().to_string();
        assert!(err.contains("r.csv:4"), "{err}");
    }
}

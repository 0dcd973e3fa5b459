//! Evaluation maths: ROUGE, embedding similarity, rewards, rubric
//! aggregation, inter-rater agreement and regression.

pub mod embed;
pub mod reward;
pub mod rubric;
pub mod stats;
pub mod text;

pub use embed::{cosine, embedding_similarity, EmbeddingProvider, HashingEmbedder, HttpEmbedder, TableEmbedder};
pub use reward::{
    combine, format_reward, total_reward, FormatBreakdown, FormatScorer, FormatTable, LocationLexicon, RewardBreakdown,
    RewardWeights,
};
pub use rubric::{
    aggregate_scorecards, MetricAggregate, Rubric, ScoreCard, ScorecardAggregate, MAX_SCORE, SUGGESTION_METRICS, SUMMARY_METRICS,
};
pub use stats::{agreement, ols_fit, AgreementStats, RegressionFit};
pub use text::{rouge_all, rouge_l, rouge_n, tokenize, RougeScores, RougeTriple};

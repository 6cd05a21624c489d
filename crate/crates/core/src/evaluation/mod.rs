//! Automatic metrics for generated summaries and the control-compliance
//! experiment.

mod classify;
mod compliance;
mod overlap;
mod report;

pub use classify::{category_micro_f1, sentiment_accuracy, F1Counts, Sentiment, SentimentClassifier};
pub use compliance::{control_compliance, prompt_coverage, ComplianceConfig, ComplianceReport};
pub use overlap::{dist_metrics, dist_n, lcs_len, rouge_l, rouge_n, DistScores};
pub use report::{EvalItem, EvalReport};

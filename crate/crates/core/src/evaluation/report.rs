//! Aggregate metric report for a set of generated summaries.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::classify::{category_micro_f1, sentiment_accuracy, F1Counts, SentimentClassifier};
use super::overlap::{dist_metrics, rouge_l, rouge_n};
use crate::control::LinearClassifier;
use crate::error::{Error, Result};

/// One summary with everything it is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub summary: String,
    pub reference: String,
    pub input_ratings: Vec<u8>,
    pub gold_categories: BTreeSet<String>,
}

/// Column names follow the published results tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "ROUGE-1")]
    pub rouge1_f: f64,
    #[serde(rename = "ROUGE-2")]
    pub rouge2_f: f64,
    #[serde(rename = "ROUGE-L")]
    pub rouge_l_f: f64,
    #[serde(rename = "Dist-1")]
    pub dist_1: f64,
    #[serde(rename = "Dist-2")]
    pub dist_2: f64,
    #[serde(rename = "Dist-3")]
    pub dist_3: f64,
    #[serde(rename = "Dist_c-1")]
    pub dist_c_1: f64,
    #[serde(rename = "Dist_c-2")]
    pub dist_c_2: f64,
    #[serde(rename = "Dist_c-3")]
    pub dist_c_3: f64,
    #[serde(rename = "Sentiment Acc.")]
    pub sentiment_accuracy: f64,
    #[serde(rename = "F_category")]
    pub category_micro_f1: f64,
    pub summaries: usize,
    pub category_counts: F1Counts,
}

impl EvalReport {
    pub const COLUMNS: [&'static str; 11] = [
        "ROUGE-1",
        "ROUGE-2",
        "ROUGE-L",
        "Dist-1",
        "Dist-2",
        "Dist-3",
        "Dist_c-1",
        "Dist_c-2",
        "Dist_c-3",
        "Sentiment Acc.",
        "F_category",
    ];

    pub fn compute(
        items: &[EvalItem],
        sentiment: &SentimentClassifier,
        categories: &[LinearClassifier],
    ) -> Result<EvalReport> {
        if items.is_empty() {
            return Err(Error::data("no summaries to evaluate"));
        }
        let n = items.len() as f64;
        let avg = |f: &dyn Fn(&EvalItem) -> f64| items.iter().map(f).sum::<f64>() / n;
        let texts: Vec<&str> = items.iter().map(|i| i.summary.as_str()).collect();
        let dist = dist_metrics(&texts)?;
        let senti: Vec<(&str, Vec<u8>)> = items.iter().map(|i| (i.summary.as_str(), i.input_ratings.clone())).collect();
        let cats: Vec<(&str, BTreeSet<String>)> =
            items.iter().map(|i| (i.summary.as_str(), i.gold_categories.clone())).collect();
        let (f1, counts) = category_micro_f1(categories, &cats);
        Ok(EvalReport {
            rouge1_f: avg(&|i| rouge_n(&i.summary, &i.reference, 1)),
            rouge2_f: avg(&|i| rouge_n(&i.summary, &i.reference, 2)),
            rouge_l_f: avg(&|i| rouge_l(&i.summary, &i.reference)),
            dist_1: dist.summary_level[0].unwrap_or(0.0),
            dist_2: dist.summary_level[1].unwrap_or(0.0),
            dist_3: dist.summary_level[2].unwrap_or(0.0),
            dist_c_1: dist.corpus_level[0].unwrap_or(0.0),
            dist_c_2: dist.corpus_level[1].unwrap_or(0.0),
            dist_c_3: dist.corpus_level[2].unwrap_or(0.0),
            sentiment_accuracy: sentiment_accuracy(sentiment, &senti)?,
            category_micro_f1: f1,
            summaries: items.len(),
            category_counts: counts,
        })
    }

    pub fn values(&self) -> [f64; 11] {
        [
            self.rouge1_f,
            self.rouge2_f,
            self.rouge_l_f,
            self.dist_1,
            self.dist_2,
            self.dist_3,
            self.dist_c_1,
            self.dist_c_2,
            self.dist_c_3,
            self.sentiment_accuracy,
            self.category_micro_f1,
        ]
    }

    /// Two-row tab-separated table: column names, then scores.
    pub fn render_table(&self) -> String {
        let vals: Vec<String> = self.values().iter().map(|v| format!("{v:.4}")).collect();
        format!("{}\n{}\n", Self::COLUMNS.join("\t"), vals.join("\t"))
    }

    pub fn write(&self, json_path: &Path, table_path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::data(e.to_string()))?;
        std::fs::write(json_path, json + "\n").map_err(|e| Error::io(json_path, e))?;
        std::fs::write(table_path, self.render_table()).map_err(|e| Error::io(table_path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EvalReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }
}

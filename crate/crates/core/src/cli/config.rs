//! Layered pipeline configuration: defaults, then a TOML file, then
//! command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::ClassifierConfig;
use crate::decoding::{DecodeConfig, InputSelection};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::selfsup::PairBuilderConfig;
use crate::training::TrainConfig;

/// File locations. Relative paths are taken relative to `work_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub work_dir: PathBuf,
    pub corpus: PathBuf,
    pub train_corpus: PathBuf,
    pub valid_corpus: PathBuf,
    pub vocab: PathBuf,
    /// Subword vocabulary extended with the control tokens.
    pub control_vocab: PathBuf,
    pub classifiers: PathBuf,
    pub lexicon: PathBuf,
    pub train_pairs: PathBuf,
    pub valid_pairs: PathBuf,
    pub checkpoints: PathBuf,
    pub summaries: PathBuf,
    pub reports: PathBuf,
    /// Optional JSONL of `{"entity_id", "summary"}` gold summaries; empty
    /// means the held-out review of each summarized pair is the reference.
    pub references: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            work_dir: "work".into(),
            corpus: "corpus.jsonl".into(),
            train_corpus: "train.jsonl".into(),
            valid_corpus: "valid.jsonl".into(),
            vocab: "vocab.txt".into(),
            control_vocab: "vocab_control.txt".into(),
            classifiers: "classifiers.json".into(),
            lexicon: "lexicon.tsv".into(),
            train_pairs: "pairs_train.jsonl".into(),
            valid_pairs: "pairs_valid.jsonl".into(),
            checkpoints: "checkpoints".into(),
            summaries: "summaries.jsonl".into(),
            reports: "reports".into(),
            references: "".into(),
        }
    }
}

impl Paths {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.work_dir.join(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub min_reviews_per_entity: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            min_reviews_per_entity: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub valid_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { valid_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabConfig {
    pub size: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig { size: 8000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SummarizeConfig {
    /// Inputs per summary when choosing them from an entity's reviews.
    pub k: usize,
    pub selection: InputSelection,
    /// Upper bound on summaries written; 0 means no bound.
    pub max_entities: usize,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        SummarizeConfig {
            k: 8,
            selection: InputSelection::Central,
            max_entities: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSplit {
    Train,
    Valid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplianceSection {
    pub n_reviews: usize,
    pub repeats: usize,
    pub tokens_per_prompt: usize,
    /// Which pairs the sampled reviews come from.
    pub pairs: PairSplit,
}

impl Default for ComplianceSection {
    fn default() -> Self {
        ComplianceSection {
            n_reviews: 20,
            repeats: 5,
            tokens_per_prompt: 8,
            pairs: PairSplit::Valid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckSection {
    pub coordinates: usize,
    pub step: f64,
    /// Lower bound of the relative-error denominator.
    pub floor: f64,
    pub tolerance: f64,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        GradCheckSection {
            coordinates: 300,
            step: 1e-4,
            floor: 1e-6,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Every stage seed is derived from this one.
    pub seed: u64,
    pub paths: Paths,
    pub ingest: IngestConfig,
    pub split: SplitConfig,
    pub vocab: VocabConfig,
    pub classifier: ClassifierConfig,
    pub pairs: PairBuilderConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub summarize: SummarizeConfig,
    pub compliance: ComplianceSection,
    pub grad_check: GradCheckSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            paths: Paths::default(),
            ingest: IngestConfig::default(),
            split: SplitConfig::default(),
            vocab: VocabConfig::default(),
            classifier: ClassifierConfig::default(),
            pairs: PairBuilderConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            decode: DecodeConfig::yelp(),
            summarize: SummarizeConfig::default(),
            compliance: ComplianceSection::default(),
            grad_check: GradCheckSection::default(),
        }
    }
}

/// Stage seed: the first eight bytes of SHA-256(seed || stage).
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("eight bytes"))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `section.key=value`; the value is read as a TOML literal and
/// falls back to a bare string.
pub fn parse_override(s: &str) -> Result<toml::Table> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{s}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::config(format!("override `{s}` has an empty key")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut table = toml::Table::new();
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = &mut table;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .expect("fresh table");
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(table)
}

fn has_key(t: &toml::Table, section: &str, key: &str) -> bool {
    t.get(section).and_then(|v| v.as_table()).is_some_and(|s| s.contains_key(key))
}

/// Merges defaults, the optional file and the overrides (later wins), then
/// rejects unknown keys and invalid values. The training seed is derived
/// from the global seed unless set explicitly.
pub fn resolve_config(file_text: Option<&str>, overrides: &[String], seed: Option<u64>) -> Result<PipelineConfig> {
    let mut merged = toml::Table::try_from(PipelineConfig::default()).map_err(|e| Error::config(e.to_string()))?;
    let mut explicit_train_seed = false;
    if let Some(text) = file_text {
        let t: toml::Table = toml::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))?;
        explicit_train_seed |= has_key(&t, "train", "seed");
        merge(&mut merged, t);
    }
    for o in overrides {
        let t = parse_override(o)?;
        explicit_train_seed |= has_key(&t, "train", "seed");
        merge(&mut merged, t);
    }
    if let Some(s) = seed {
        merged.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    let mut cfg: PipelineConfig = merged.try_into().map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
    if !explicit_train_seed {
        cfg.train.seed = derive_seed(cfg.seed, "train");
    }
    cfg.validate()?;
    Ok(cfg)
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.pairs.validate()?;
        self.train.validate()?;
        self.decode.validate()?;
        if self.summarize.k == 0 {
            return Err(Error::config("summarize.k must be at least 1"));
        }
        if self.vocab.size == 0 {
            return Err(Error::config("vocab.size must be positive"));
        }
        Ok(())
    }

    /// The resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_file_or_flags() {
        let cfg = resolve_config(None, &[], None).unwrap();
        let mut expected = PipelineConfig::default();
        expected.train.seed = derive_seed(1, "train");
        assert_eq!(cfg, expected);
        assert_eq!(cfg.decode.beam_size, 35);
    }

    #[test]
    fn flags_beat_file() {
        let file = "[decode]\nbeam_size = 4\nbudget = 30\n";
        let cfg = resolve_config(Some(file), &["decode.beam_size=2".into()], None).unwrap();
        assert_eq!(cfg.decode.beam_size, 2);
        assert_eq!(cfg.decode.budget, 30);
        let cfg = resolve_config(Some(file), &[], Some(9)).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.seed, derive_seed(9, "train"));
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = resolve_config(Some("[decode]\nbeem_size = 3\n"), &[], None).unwrap_err();
        assert!(err.to_string().contains("beem_size"), "{err}");
        assert_eq!(err.exit_code(), 1);
        assert!(resolve_config(None, &["nope=1".into()], None).is_err());
        assert!(resolve_config(Some("not toml ["), &[], None).is_err());
    }

    #[test]
    fn explicit_train_seed_is_kept() {
        let cfg = resolve_config(None, &["train.seed=42".into()], None).unwrap();
        assert_eq!(cfg.train.seed, 42);
    }

    #[test]
    fn override_values() {
        let t = parse_override("summarize.selection=recent").unwrap();
        assert_eq!(t["summarize"]["selection"].as_str(), Some("recent"));
        let t = parse_override("train.lr_base = 0.5").unwrap();
        assert_eq!(t["train"]["lr_base"].as_float(), Some(0.5));
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("a..b=1").is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        assert_ne!(derive_seed(1, "split"), derive_seed(1, "train"));
        assert_ne!(derive_seed(1, "split"), derive_seed(2, "split"));
        assert_eq!(derive_seed(3, "x"), derive_seed(3, "x"));
    }
}

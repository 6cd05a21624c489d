//! One function per pipeline stage. Each reads its inputs through `Run`,
//! so their hashes land in the run log.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{derive_seed, PairSplit, PipelineConfig};
use crate::control::{
    all_control_tokens, augment_review, extract_lexicon, infer_prompt, load_classifiers, save_classifiers,
    train_all_categories, AugmentedReview, ControlLexicon, MAX_INFERRED,
};
use crate::corpus::{ingest_corpus, partition_corpus, Corpus};
use crate::decoding::{encode_inputs, generate, EntitySummary, Summarizer};
use crate::error::{Error, Result};
use crate::evaluation::{control_compliance, ComplianceConfig, ComplianceReport, EvalItem, EvalReport, SentimentClassifier};
use crate::model::{grad_check, gradcheck_config, gradcheck_example, load_checkpoint, ModelConfig, Transformer};
use crate::selfsup::{build_pairs, fit_tfidf, pairs_by_entity, read_pairs, write_pairs, TrainingPair};
use crate::tokenizer::{train_subword_vocab, SubwordVocab};
use crate::training::{build_example, train_model, TrainOutput};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Bookkeeping for one subcommand invocation.
pub struct Run {
    pub cfg: PipelineConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    config: &'a PipelineConfig,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a [String],
}

impl Run {
    pub fn new(cfg: PipelineConfig) -> Self {
        Run {
            cfg,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    /// Resolves a work-dir path, hashes the file and records it.
    pub fn input(&mut self, p: &Path) -> Result<PathBuf> {
        let path = self.cfg.paths.resolve(p);
        self.input_abs(&path)?;
        Ok(path)
    }

    pub fn input_abs(&mut self, path: &Path) -> Result<()> {
        let h = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    /// Resolves a work-dir path and creates its parent directory.
    pub fn output(&mut self, p: &Path) -> Result<PathBuf> {
        let path = self.cfg.paths.resolve(p);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        self.outputs.push(path.display().to_string());
        Ok(path)
    }

    /// Appends one JSON line to `<work_dir>/run_log.jsonl`.
    pub fn log(&self, command: &str) -> Result<()> {
        let dir = &self.cfg.paths.work_dir;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("run_log.jsonl");
        let rec = RunRecord {
            command,
            config: &self.cfg,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::data(e.to_string()))?;
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
    }

    fn corpus(&mut self, p: &Path) -> Result<Corpus> {
        let path = self.input(p)?;
        Ok(ingest_corpus(&path, 1)?.corpus)
    }

    fn vocab(&mut self, p: &Path) -> Result<SubwordVocab> {
        SubwordVocab::load(&self.input(p)?)
    }

    fn lexicon(&mut self) -> Result<ControlLexicon> {
        let p = self.cfg.paths.lexicon.clone();
        ControlLexicon::load(&self.input(&p)?)
    }

    fn pairs(&mut self, p: &Path) -> Result<Vec<TrainingPair>> {
        read_pairs(&self.input(p)?)
    }

    fn model(&mut self, vocab: &SubwordVocab) -> Result<Transformer<f32>> {
        let ckpt = self.cfg.paths.resolve(&self.cfg.paths.checkpoints).join("best.ckpt");
        self.input_abs(&ckpt)?;
        Ok(load_checkpoint::<f32>(&ckpt, Some(&vocab.hash()))?.0)
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::data(e.to_string()))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn ingest(run: &mut Run, input: &Path) -> Result<()> {
    run.input_abs(input)?;
    let ing = ingest_corpus(input, run.cfg.ingest.min_reviews_per_entity)?;
    let out = run.output(&run.cfg.paths.corpus.clone())?;
    ing.corpus.write_jsonl(&out)?;
    println!(
        "ingested {} reviews of {} entities; skipped {} lines, dropped {} entities",
        ing.corpus.len(),
        ing.corpus.num_entities(),
        ing.skipped_lines,
        ing.dropped_entities
    );
    Ok(())
}

pub fn split(run: &mut Run) -> Result<()> {
    let p = run.cfg.paths.clone();
    let corpus = run.corpus(&p.corpus)?;
    let (train, valid) = partition_corpus(&corpus, run.cfg.split.valid_fraction, derive_seed(run.cfg.seed, "split"))?;
    train.write_jsonl(&run.output(&p.train_corpus)?)?;
    valid.write_jsonl(&run.output(&p.valid_corpus)?)?;
    println!("train: {} entities; valid: {} entities", train.num_entities(), valid.num_entities());
    Ok(())
}

pub fn train_vocab(run: &mut Run) -> Result<()> {
    let p = run.cfg.paths.clone();
    let corpus = run.corpus(&p.train_corpus)?;
    let texts: Vec<&str> = corpus.reviews().iter().map(|r| r.text.as_str()).collect();
    let vocab = train_subword_vocab(&texts, run.cfg.vocab.size)?;
    vocab.save(&run.output(&p.vocab)?)?;
    println!("vocabulary: {} tokens, {} merges", vocab.len(), vocab.merges().len());
    Ok(())
}

pub fn mine_controls(run: &mut Run) -> Result<()> {
    let p = run.cfg.paths.clone();
    let train = run.corpus(&p.train_corpus)?;
    let all = run.corpus(&p.corpus)?;
    let mut vocab = run.vocab(&p.vocab)?;
    let classifiers = train_all_categories(&train, &run.cfg.classifier, derive_seed(run.cfg.seed, "classifier"))?;
    let (lexicon, empty) = extract_lexicon(&classifiers);
    save_classifiers(&run.output(&p.classifiers)?, &classifiers)?;
    lexicon.save(&run.output(&p.lexicon)?)?;
    let cats = all.categories();
    vocab.register_control_tokens(all_control_tokens(cats.iter().map(String::as_str), &lexicon));
    vocab.save(&run.output(&p.control_vocab)?)?;
    for (cat, entries) in lexicon.categories() {
        let top: Vec<&str> = entries.iter().take(5).map(|(g, _)| g.as_str()).collect();
        println!("{cat}: {} n-grams; top {}", entries.len(), top.join(", "));
    }
    if !empty.is_empty() {
        println!("categories without positive weights: {}", empty.join(", "));
    }
    println!("vocabulary with control tokens: {}", vocab.len());
    Ok(())
}

pub fn build_pairs_cmd(run: &mut Run) -> Result<()> {
    let p = run.cfg.paths.clone();
    for (corpus_path, pairs_path) in [(&p.train_corpus, &p.train_pairs), (&p.valid_corpus, &p.valid_pairs)] {
        let corpus = run.corpus(corpus_path)?;
        let tfidf = fit_tfidf(&corpus)?;
        let pairs = build_pairs(&corpus, &tfidf, &run.cfg.pairs)?;
        write_pairs(&run.output(pairs_path)?, &pairs)?;
        println!("{}: {} pairs", pairs_path.display(), pairs.len());
    }
    Ok(())
}

fn examples(
    run: &mut Run,
    corpus: &Path,
    pairs: &Path,
    lexicon: &ControlLexicon,
    vocab: &SubwordVocab,
) -> Result<Vec<crate::model::SeqExample>> {
    let corpus = run.corpus(corpus)?;
    let pairs = run.pairs(pairs)?;
    let t = &run.cfg.train;
    pairs
        .iter()
        .map(|pair| build_example(pair, &corpus, lexicon, vocab, t.max_source_len, t.max_target_len, t.mask_prompt))
        .collect()
}

pub fn train(run: &mut Run) -> Result<()> {
    let p = run.cfg.paths.clone();
    let vocab = run.vocab(&p.control_vocab)?;
    let lexicon = run.lexicon()?;
    let train = examples(run, &p.train_corpus, &p.train_pairs, &lexicon, &vocab)?;
    let valid = examples(run, &p.valid_corpus, &p.valid_pairs, &lexicon, &vocab)?;
    let mut mc: ModelConfig = run.cfg.model.clone();
    if mc.vocab_size == 0 {
        mc.vocab_size = vocab.len();
    } else if mc.vocab_size != vocab.len() {
        return Err(Error::config(format!(
            "model.vocab_size {} disagrees with the vocabulary ({})",
            mc.vocab_size,
            vocab.len()
        )));
    }
    mc.num_sources = run.cfg.pairs.k;
    run.cfg.model = mc.clone();
    let mut model = Transformer::<f32>::new(mc, derive_seed(run.cfg.seed, "model"))?;
    let dir = run.output(&p.checkpoints.join("best.ckpt"))?;
    let out = TrainOutput {
        dir: dir.parent().expect("checkpoint dir").to_path_buf(),
        vocab_hash: vocab.hash(),
    };
    let outcome = train_model(&mut model, &train, &valid, &run.cfg.train, Some(&out))?;
    println!(
        "trained {} steps on {} pairs; best step {} (validation perplexity {})",
        outcome.steps,
        train.len(),
        outcome.best_step,
        outcome.best_valid_ppl.map_or("n/a".to_string(), |v| format!("{v:.3}"))
    );
    Ok(())
}

/// Summaries for the first-ranked validation pair of every entity, or for
/// the given entities with inputs picked from the whole corpus.
pub fn summarize(run: &mut Run, entities: &[String]) -> Result<()> {
    let p = run.cfg.paths.clone();
    let vocab = run.vocab(&p.control_vocab)?;
    let lexicon = run.lexicon()?;
    let model = run.model(&vocab)?;
    let mut out = Vec::new();
    if entities.is_empty() {
        let corpus = run.corpus(&p.valid_corpus)?;
        let pairs = run.pairs(&p.valid_pairs)?;
        for (entity, group) in pairs_by_entity(&pairs) {
            let pair = group.iter().min_by_key(|q| q.entity_rank).expect("non-empty group");
            let (target, inputs) = pair.resolve(&corpus)?;
            let cats = corpus.entity_categories(entity);
            let augmented: Vec<AugmentedReview> =
                inputs.iter().map(|r| augment_review(r, &cats, &lexicon, MAX_INFERRED)).collect();
            let prompt = infer_prompt(&augmented, MAX_INFERRED)?;
            let sources = encode_inputs(&augmented, &vocab, model.config().max_positions)?;
            let hyp = generate(&model, &vocab, &sources, &prompt, &run.cfg.decode, None)?;
            out.push(EntitySummary {
                entity_id: entity.to_string(),
                summary: vocab.decode(&hyp.tokens)?,
                input_review_ids: pair.input_review_ids.clone(),
                prompt: prompt.tokens(),
                reference_review_id: Some(target.review_id.clone()),
            });
            if out.len() == run.cfg.summarize.max_entities {
                break;
            }
        }
    } else {
        let corpus = run.corpus(&p.corpus)?;
        let tfidf = fit_tfidf(&corpus)?;
        let s = Summarizer {
            model: &model,
            vocab: &vocab,
            lexicon: &lexicon,
            tfidf: &tfidf,
            k: run.cfg.summarize.k,
            selection: run.cfg.summarize.selection,
            decode: run.cfg.decode.clone(),
        };
        for e in entities {
            out.push(s.summarize_entity(&corpus, e)?);
        }
    }
    write_jsonl(&run.output(&p.summaries)?, &out)?;
    for s in &out {
        println!("{}\t{}", s.entity_id, s.summary);
    }
    Ok(())
}

#[derive(Deserialize)]
struct Reference {
    entity_id: String,
    summary: String,
}

pub fn evaluate(run: &mut Run) -> Result<()> {
    let p = run.cfg.paths.clone();
    let summaries: Vec<EntitySummary> = read_jsonl(&run.input(&p.summaries)?)?;
    let corpus = run.corpus(&p.corpus)?;
    let train = run.corpus(&p.train_corpus)?;
    let classifiers = load_classifiers(&run.input(&p.classifiers)?)?;
    let gold: BTreeMap<String, String> = if p.references.as_os_str().is_empty() {
        BTreeMap::new()
    } else {
        let refs: Vec<Reference> = read_jsonl(&run.input(&p.references)?)?;
        refs.into_iter().map(|r| (r.entity_id, r.summary)).collect()
    };
    let ids = corpus.id_map();
    let mut items = Vec::new();
    for s in &summaries {
        let reference = match (gold.get(&s.entity_id), &s.reference_review_id) {
            (Some(g), _) => g.clone(),
            (None, Some(id)) => ids
                .get(id.as_str())
                .ok_or_else(|| Error::data(format!("reference review {id} not in corpus")))?
                .text
                .clone(),
            (None, None) => return Err(Error::data(format!("no reference for entity {}", s.entity_id))),
        };
        let input_ratings = s
            .input_review_ids
            .iter()
            .map(|id| {
                ids.get(id.as_str())
                    .map(|r| r.rating)
                    .ok_or_else(|| Error::data(format!("input review {id} not in corpus")))
            })
            .collect::<Result<Vec<u8>>>()?;
        items.push(EvalItem {
            summary: s.summary.clone(),
            reference,
            input_ratings,
            gold_categories: corpus.entity_categories(&s.entity_id),
        });
    }
    let sentiment = SentimentClassifier::train(&train, &run.cfg.classifier, derive_seed(run.cfg.seed, "sentiment"))?;
    let report = EvalReport::compute(&items, &sentiment, &classifiers)?;
    let json = run.output(&p.reports.join("eval.json"))?;
    let table = run.output(&p.reports.join("eval.tsv"))?;
    report.write(&json, &table)?;
    print!("{}", report.render_table());
    Ok(())
}

#[derive(Serialize)]
struct ComplianceRecord<'a> {
    mean_correct: f64,
    mean_incorrect: f64,
    difference: f64,
    share_correct_above_half: f64,
    share_incorrect_above_half: f64,
    #[serde(flatten)]
    report: &'a ComplianceReport,
}

pub fn compliance(run: &mut Run) -> Result<()> {
    let p = run.cfg.paths.clone();
    let vocab = run.vocab(&p.control_vocab)?;
    let lexicon = run.lexicon()?;
    let model = run.model(&vocab)?;
    let (corpus_path, pairs_path) = match run.cfg.compliance.pairs {
        PairSplit::Train => (&p.train_corpus, &p.train_pairs),
        PairSplit::Valid => (&p.valid_corpus, &p.valid_pairs),
    };
    let corpus = run.corpus(corpus_path)?;
    let pairs = run.pairs(pairs_path)?;
    let c = &run.cfg.compliance;
    let cfg = ComplianceConfig {
        n_reviews: c.n_reviews,
        repeats: c.repeats,
        tokens_per_prompt: c.tokens_per_prompt,
        decode: run.cfg.decode.clone(),
    };
    let report = control_compliance(&model, &vocab, &corpus, &pairs, &lexicon, &cfg, derive_seed(run.cfg.seed, "compliance"))?;
    let rec = ComplianceRecord {
        mean_correct: report.mean_correct(),
        mean_incorrect: report.mean_incorrect(),
        difference: report.difference(),
        share_correct_above_half: ComplianceReport::share_above_half(&report.correct),
        share_incorrect_above_half: ComplianceReport::share_above_half(&report.incorrect),
        report: &report,
    };
    write_json(&run.output(&p.reports.join("compliance.json"))?, &rec)?;
    print!("{}", report.render());
    Ok(())
}

pub fn grad_check_cmd(run: &mut Run) -> Result<()> {
    let g = run.cfg.grad_check.clone();
    let cfg = gradcheck_config(run.cfg.model.combination);
    let model = Transformer::<f64>::new(cfg, run.cfg.seed)?;
    let report = grad_check(&model, &gradcheck_example(), g.coordinates, g.step, g.floor, run.cfg.seed)?;
    println!(
        "checked {} coordinates; max relative error {:.3e}",
        report.entries.len(),
        report.max_rel_error
    );
    if !(report.max_rel_error < g.tolerance) {
        return Err(Error::numerical(format!(
            "gradient check failed: {:.3e} >= {:.1e}",
            report.max_rel_error, g.tolerance
        )));
    }
    Ok(())
}

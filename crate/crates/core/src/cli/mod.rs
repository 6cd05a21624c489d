//! Command-line front end: subcommands, layered configuration and the run
//! log.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{sha256_file, Run};
pub use config::{
    derive_seed, parse_override, resolve_config, ComplianceSection, GradCheckSection, IngestConfig, PairSplit, Paths,
    PipelineConfig, SplitConfig, SummarizeConfig, VocabConfig,
};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "revsum", version, about = "Controllable multi-review summarization pipeline")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set decode.beam_size=4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory holding every artifact; same as `--set paths.work_dir=...`.
    #[arg(long, global = true)]
    pub work_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a JSONL review file, drop small entities, write the corpus.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Split the corpus by entity into train and validation.
    Split,
    /// Learn the subword vocabulary on the training split.
    TrainVocab,
    /// Train category classifiers, extract the lexicon, add control tokens.
    MineControls,
    /// Build (inputs, target) pairs for both splits.
    BuildPairs,
    /// Train the summarizer.
    Train,
    /// Summarize validation entities (or the given ones).
    Summarize {
        #[arg(long = "entity")]
        entities: Vec<String>,
    },
    /// Score summaries: ROUGE, Dist-n, sentiment accuracy, category F1.
    Evaluate,
    /// Measure how often prompted keywords appear in the output.
    ControlCompliance,
    /// Compare analytic and finite-difference gradients on a tiny model.
    GradCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Split => "split",
            Command::TrainVocab => "train-vocab",
            Command::MineControls => "mine-controls",
            Command::BuildPairs => "build-pairs",
            Command::Train => "train",
            Command::Summarize { .. } => "summarize",
            Command::Evaluate => "evaluate",
            Command::ControlCompliance => "control-compliance",
            Command::GradCheck => "grad-check",
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let text = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    let mut overrides = cli.overrides.clone();
    if let Some(w) = &cli.work_dir {
        let s = toml::Value::String(w.display().to_string());
        overrides.push(format!("paths.work_dir={s}"));
    }
    let cfg = resolve_config(text.as_deref(), &overrides, cli.seed)?;
    let mut run = Run::new(cfg);
    if let Some(p) = &cli.config {
        run.input_abs(p)?;
    }
    match &cli.command {
        Command::Ingest { input } => commands::ingest(&mut run, input)?,
        Command::Split => commands::split(&mut run)?,
        Command::TrainVocab => commands::train_vocab(&mut run)?,
        Command::MineControls => commands::mine_controls(&mut run)?,
        Command::BuildPairs => commands::build_pairs_cmd(&mut run)?,
        Command::Train => commands::train(&mut run)?,
        Command::Summarize { entities } => commands::summarize(&mut run, entities)?,
        Command::Evaluate => commands::evaluate(&mut run)?,
        Command::ControlCompliance => commands::compliance(&mut run)?,
        Command::GradCheck => commands::grad_check_cmd(&mut run)?,
    }
    run.log(cli.command.name())
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code: 0 success, 1 usage or configuration error, 2 data or
/// i/o error, 3 numerical failure.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_cli(["revsum", "frobnicate"]), 1);
        assert_eq!(run_cli(["revsum"]), 1);
        assert_eq!(run_cli(["revsum", "--help"]), 0);
    }

    #[test]
    fn bad_override_exits_one() {
        assert_eq!(run_cli(["revsum", "grad-check", "--set", "decode.beem_size=3"]), 1);
    }

    #[test]
    fn missing_input_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let w = dir.path().to_str().unwrap();
        assert_eq!(run_cli(["revsum", "split", "--work-dir", w]), 2);
    }
}

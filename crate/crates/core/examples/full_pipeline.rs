//! Runs every CLI stage on the bundled mini corpus in a scratch directory,
//! exactly as the `revsum` binary would.
//!
//!     cargo run --release --example full_pipeline [work_dir]

use std::path::Path;

use revsum::cli::run_cli;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let work = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("revsum_pipeline").display().to_string());
    let config = root.join("configs/mini.toml").display().to_string();
    let corpus = root.join("data/mini_corpus.jsonl").display().to_string();
    let stages: [&[&str]; 9] = [
        &["ingest", "--input", &corpus],
        &["split"],
        &["train-vocab"],
        &["mine-controls"],
        &["build-pairs"],
        &["train"],
        &["summarize"],
        &["evaluate"],
        &["control-compliance"],
    ];
    for stage in stages {
        println!("== {}", stage[0]);
        let mut args = vec!["revsum"];
        args.extend_from_slice(stage);
        args.extend_from_slice(&["--config", &config, "--work-dir", &work]);
        let code = run_cli(args);
        if code != 0 {
            eprintln!("{} failed with exit code {code}", stage[0]);
            std::process::exit(code);
        }
    }
    println!("artifacts and reports in {work}");
}

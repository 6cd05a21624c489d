//! ROUGE, distinct-n, sentiment accuracy and category micro-F1 on a few
//! hand-made summaries.
//!
//!     cargo run --example evaluate_metrics

use std::collections::BTreeSet;

use revsum::control::{train_all_categories, ClassifierConfig};
use revsum::corpus::Corpus;
use revsum::evaluation::{dist_metrics, rouge_l, rouge_n, EvalItem, EvalReport, Sentiment, SentimentClassifier};
use revsum::synthetic::{mini_corpus, MINI_SEED};

fn main() -> revsum::Result<()> {
    let (cand, reference) = ("the cat sat on the mat", "the cat lay on the mat");
    println!(
        "{cand:?} vs {reference:?}: R1 {:.3} R2 {:.3} RL {:.3}",
        rouge_n(cand, reference, 1),
        rouge_n(cand, reference, 2),
        rouge_l(cand, reference)
    );
    let d = dist_metrics(&["a a a b", "a b c d", "a b c d"])?;
    println!("dist {:?} corpus {:?}", d.summary_level, d.corpus_level);
    for r in 1..=5 {
        println!("{r} stars -> {}", Sentiment::from_rating(r).label());
    }

    let corpus = Corpus::new(mini_corpus(MINI_SEED))?;
    let sentiment = SentimentClassifier::train(&corpus, &ClassifierConfig::default(), 1)?;
    let categories = train_all_categories(&corpus, &ClassifierConfig::default(), 1)?;
    let item = |summary: &str, reference: &str, ratings: &[u8], cat: &str| EvalItem {
        summary: summary.into(),
        reference: reference.into(),
        input_ratings: ratings.to_vec(),
        gold_categories: BTreeSet::from([cat.to_string()]),
    };
    let items = vec![
        item(
            "I love this place. Great crust and perfect pepperoni. Ask for the wood fired menu.",
            "I love this place. Lovely crust and great pepperoni.",
            &[5, 4, 5],
            "Pizzeria",
        ),
        item(
            "I hate this place. Burnt latte and stale scone. The cold brew is bad.",
            "I hate this place. Bitter espresso.",
            &[1, 2, 2],
            "Coffee Shop",
        ),
        item("It was okay overall. Decent haircut.", "It was okay overall. Fine color and decent fade.", &[3, 3], "Hair Salon"),
    ];
    let report = EvalReport::compute(&items, &sentiment, &categories)?;
    print!("\n{}", report.render_table());
    Ok(())
}

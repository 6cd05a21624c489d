//! Review records, line-delimited corpus files and entity-level splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single user review of one entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: String,
    pub entity_id: String,
    pub text: String,
    pub rating: u8,
    #[serde(default)]
    pub categories: BTreeSet<String>,
}

impl Review {
    pub fn validate(&self) -> Result<()> {
        if self.review_id.is_empty() {
            return Err(Error::data("empty review_id"));
        }
        if !(1..=5).contains(&self.rating) {
            return Err(Error::data(format!(
                "review {}: rating {} outside [1,5]",
                self.review_id, self.rating
            )));
        }
        if self.text.trim().is_empty() {
            return Err(Error::data(format!("review {}: empty text", self.review_id)));
        }
        Ok(())
    }
}

/// An immutable set of reviews indexed by entity.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    reviews: Vec<Review>,
    entity_index: BTreeMap<String, Vec<usize>>,
}

/// Outcome of reading a corpus file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: Corpus,
    /// Lines that could not be parsed or failed validation.
    pub skipped_lines: usize,
    /// Entities removed for having too few reviews.
    pub dropped_entities: usize,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids and invalid records.
    pub fn new(reviews: Vec<Review>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(reviews.len());
        let mut entity_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in reviews.iter().enumerate() {
            r.validate()?;
            if !seen.insert(r.review_id.as_str()) {
                return Err(Error::data(format!("duplicate review_id {}", r.review_id)));
            }
            entity_index.entry(r.entity_id.clone()).or_default().push(i);
        }
        Ok(Corpus {
            reviews,
            entity_index,
        })
    }

    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    /// Entity ids in sorted order.
    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.entity_index.keys().map(String::as_str)
    }

    pub fn num_entities(&self) -> usize {
        self.entity_index.len()
    }

    /// Reviews of one entity, in file order.
    pub fn entity_reviews(&self, entity_id: &str) -> Vec<&Review> {
        self.entity_index
            .get(entity_id)
            .map(|ix| ix.iter().map(|&i| &self.reviews[i]).collect())
            .unwrap_or_default()
    }

    pub fn has_entity(&self, entity_id: &str) -> bool {
        self.entity_index.contains_key(entity_id)
    }

    /// Union of the category labels carried by an entity's reviews.
    pub fn entity_categories(&self, entity_id: &str) -> BTreeSet<String> {
        self.entity_reviews(entity_id)
            .into_iter()
            .flat_map(|r| r.categories.iter().cloned())
            .collect()
    }

    /// Every category label in the corpus.
    pub fn categories(&self) -> BTreeSet<String> {
        self.reviews
            .iter()
            .flat_map(|r| r.categories.iter().cloned())
            .collect()
    }

    pub fn get(&self, review_id: &str) -> Option<&Review> {
        self.reviews.iter().find(|r| r.review_id == review_id)
    }

    /// Map from review id to review, for repeated lookups.
    pub fn id_map(&self) -> BTreeMap<&str, &Review> {
        self.reviews
            .iter()
            .map(|r| (r.review_id.as_str(), r))
            .collect()
    }

    fn restricted_to(&self, keep: &BTreeSet<&str>) -> Result<Corpus> {
        let reviews = self
            .reviews
            .iter()
            .filter(|r| keep.contains(r.entity_id.as_str()))
            .cloned()
            .collect();
        Corpus::new(reviews)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.reviews {
            let line = serde_json::to_string(r).map_err(|e| Error::data(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Parses line-delimited review records from a reader.
///
/// Blank lines are ignored; lines that fail to parse or validate are counted
/// in `skipped_lines`. Entities with fewer than `min_reviews_per_entity`
/// reviews are dropped.
pub fn ingest_reader<R: BufRead>(reader: R, min_reviews_per_entity: usize) -> Result<Ingested> {
    let mut reviews = Vec::new();
    let mut skipped = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::data(format!("unreadable line: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Review>(&line) {
            Ok(r) if r.validate().is_ok() => reviews.push(r),
            _ => skipped += 1,
        }
    }
    if reviews.is_empty() {
        return Err(Error::data("corpus contains zero valid reviews"));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &reviews {
        *counts.entry(r.entity_id.as_str()).or_default() += 1;
    }
    let keep: BTreeSet<String> = counts
        .iter()
        .filter(|(_, &c)| c >= min_reviews_per_entity)
        .map(|(e, _)| e.to_string())
        .collect();
    let dropped_entities = counts.len() - keep.len();
    let reviews: Vec<Review> = reviews
        .into_iter()
        .filter(|r| keep.contains(&r.entity_id))
        .collect();
    if reviews.is_empty() {
        return Err(Error::data(format!(
            "no entity has at least {min_reviews_per_entity} reviews"
        )));
    }
    Ok(Ingested {
        corpus: Corpus::new(reviews)?,
        skipped_lines: skipped,
        dropped_entities,
    })
}

pub fn ingest_corpus(path: &Path, min_reviews_per_entity: usize) -> Result<Ingested> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(BufReader::new(file), min_reviews_per_entity)
}

/// Splits a corpus by entity into (train, valid).
///
/// The validation side receives `floor(n * valid_fraction)` entities, at
/// least one, and never all of them.
pub fn partition_corpus(corpus: &Corpus, valid_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(Error::config(format!(
            "valid_fraction {valid_fraction} outside (0,1)"
        )));
    }
    let n = corpus.num_entities();
    if n < 2 {
        return Err(Error::data("partition needs at least 2 entities"));
    }
    let mut entities: Vec<&str> = corpus.entities().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    entities.shuffle(&mut rng);
    let n_valid = ((n as f64 * valid_fraction + 1e-9).floor() as usize).clamp(1, n - 1);
    let valid: BTreeSet<&str> = entities[..n_valid].iter().copied().collect();
    let train: BTreeSet<&str> = entities[n_valid..].iter().copied().collect();
    Ok((corpus.restricted_to(&train)?, corpus.restricted_to(&valid)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn review(id: &str, entity: &str) -> Review {
        Review {
            review_id: id.into(),
            entity_id: entity.into(),
            text: format!("text of {id}"),
            rating: 4,
            categories: BTreeSet::new(),
        }
    }

    fn lines(reviews: &[Review]) -> String {
        reviews
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn ingests_well_formed_lines() {
        let rs = vec![review("a", "x"), review("b", "x"), review("c", "y")];
        let got = ingest_reader(lines(&rs).as_bytes(), 1).unwrap();
        assert_eq!(got.corpus.len(), 3);
        assert_eq!(got.skipped_lines, 0);
    }

    #[test]
    fn drops_small_entities() {
        let rs = vec![
            review("a1", "A"),
            review("a2", "A"),
            review("b1", "B"),
            review("b2", "B"),
            review("b3", "B"),
        ];
        let got = ingest_reader(lines(&rs).as_bytes(), 3).unwrap();
        assert_eq!(got.corpus.len(), 3);
        assert!(!got.corpus.has_entity("A"));
        assert_eq!(got.dropped_entities, 1);
    }

    #[test]
    fn counts_malformed_lines() {
        let rs: Vec<Review> = (0..4).map(|i| review(&format!("r{i}"), "e")).collect();
        let mut text = lines(&rs);
        text.push_str("\n{\"review_id\": \"broken\", ");
        let got = ingest_reader(text.as_bytes(), 1).unwrap();
        assert_eq!(got.corpus.len(), 4);
        assert_eq!(got.skipped_lines, 1);
    }

    #[test]
    fn invalid_rating_is_skipped() {
        let mut bad = review("z", "e");
        bad.rating = 6;
        let text = lines(&[review("a", "e"), bad]);
        let got = ingest_reader(text.as_bytes(), 1).unwrap();
        assert_eq!(got.skipped_lines, 1);
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        let text = lines(&[review("a", "e"), review("a", "f")]);
        assert!(ingest_reader(text.as_bytes(), 1).is_err());
        assert!(ingest_reader("garbage\n".as_bytes(), 1).is_err());
    }

    fn ten_entities() -> Corpus {
        let rs = (0..10)
            .flat_map(|e| (0..3).map(move |i| review(&format!("e{e}r{i}"), &format!("e{e}"))))
            .collect();
        Corpus::new(rs).unwrap()
    }

    #[test]
    fn partition_sizes_and_disjointness() {
        let c = ten_entities();
        let (train, valid) = partition_corpus(&c, 0.2, 7).unwrap();
        assert_eq!(train.num_entities(), 8);
        assert_eq!(valid.num_entities(), 2);
        let t: BTreeSet<_> = train.entities().collect();
        let v: BTreeSet<_> = valid.entities().collect();
        assert!(t.is_disjoint(&v));
        assert_eq!(t.len() + v.len(), 10);
        assert_eq!(train.len() + valid.len(), c.len());
    }

    #[test]
    fn partition_is_deterministic() {
        let c = ten_entities();
        let a = partition_corpus(&c, 0.2, 7).unwrap();
        let b = partition_corpus(&c, 0.2, 7).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn partition_two_entities() {
        let c = Corpus::new(vec![review("a", "A"), review("b", "B")]).unwrap();
        let (t, v) = partition_corpus(&c, 0.2, 1).unwrap();
        assert_eq!((t.num_entities(), v.num_entities()), (1, 1));
        let one = Corpus::new(vec![review("a", "A")]).unwrap();
        assert!(partition_corpus(&one, 0.2, 1).is_err());
    }
}

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::classifier::LinearClassifier;
use crate::error::{Error, Result};

/// Ranked, L1-normalized positive n-gram weights per category.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControlLexicon {
    categories: BTreeMap<String, Vec<(String, f64)>>,
}

/// Keeps each classifier's positive weights, sorted descending and
/// normalized to sum to one. Returns the lexicon and the labels whose
/// classifier had no positive weight.
pub fn extract_lexicon(classifiers: &[LinearClassifier]) -> (ControlLexicon, Vec<String>) {
    let mut lex = ControlLexicon::default();
    let mut empty = Vec::new();
    for clf in classifiers {
        let mut kept: Vec<(String, f64)> = clf
            .weights
            .iter()
            .filter(|(_, &w)| w > 0.0)
            .map(|(g, &w)| (g.clone(), w))
            .collect();
        if kept.is_empty() {
            empty.push(clf.label.clone());
        }
        let total: f64 = kept.iter().map(|(_, w)| w).sum();
        kept.iter_mut().for_each(|(_, w)| *w /= total);
        sort_ranked(&mut kept);
        lex.categories.insert(clf.label.clone(), kept);
    }
    (lex, empty)
}

fn sort_ranked(v: &mut [(String, f64)]) {
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

impl ControlLexicon {
    pub fn from_entries(categories: BTreeMap<String, Vec<(String, f64)>>) -> Self {
        let mut categories = categories;
        categories.values_mut().for_each(|v| sort_ranked(v));
        ControlLexicon { categories }
    }

    pub fn category(&self, label: &str) -> &[(String, f64)] {
        self.categories.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn categories(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.categories.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Highest weight of an n-gram across all categories.
    pub fn weight(&self, ngram: &str) -> Option<f64> {
        self.categories
            .values()
            .flat_map(|v| v.iter())
            .filter(|(g, _)| g == ngram)
            .map(|(_, w)| *w)
            .reduce(f64::max)
    }

    /// Every distinct n-gram with its highest weight across categories.
    pub fn all_ngrams(&self) -> BTreeMap<&str, f64> {
        let mut out: BTreeMap<&str, f64> = BTreeMap::new();
        for (g, w) in self.categories.values().flatten() {
            let e = out.entry(g.as_str()).or_insert(*w);
            *e = e.max(*w);
        }
        out
    }

    /// `category \t ngram \t weight` lines in category then rank order.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (cat, entries) in &self.categories {
            for (g, w) in entries {
                let _ = writeln!(s, "{cat}\t{g}\t{w:?}");
            }
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut categories: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let [cat, g, w] = parts[..] else {
                return Err(Error::data(format!("lexicon line {}: expected 3 fields", n + 1)));
            };
            let w: f64 = w
                .parse()
                .map_err(|_| Error::data(format!("lexicon line {}: bad weight", n + 1)))?;
            categories.entry(cat.to_string()).or_default().push((g.to_string(), w));
        }
        Ok(Self::from_entries(categories))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clf(label: &str, w: &[(&str, f64)]) -> LinearClassifier {
        LinearClassifier {
            label: label.into(),
            weights: w.iter().map(|(g, w)| (g.to_string(), *w)).collect(),
            bias: 0.0,
            converged: true,
            epochs: 1,
        }
    }

    #[test]
    fn trims_and_normalizes() {
        let (lex, empty) = extract_lexicon(&[clf("x", &[("a", 2.0), ("b", -1.0), ("c", 2.0)])]);
        assert_eq!(lex.category("x"), &[("a".to_string(), 0.5), ("c".to_string(), 0.5)]);
        assert!(empty.is_empty());
    }

    #[test]
    fn all_negative_is_empty() {
        let (lex, empty) = extract_lexicon(&[clf("x", &[("a", -2.0)])]);
        assert!(lex.category("x").is_empty());
        assert_eq!(empty, vec!["x".to_string()]);
    }

    #[test]
    fn single_weight_becomes_one() {
        let (lex, _) = extract_lexicon(&[clf("x", &[("a", 0.37)])]);
        assert_eq!(lex.category("x"), &[("a".to_string(), 1.0)]);
    }

    #[test]
    fn tsv_round_trip_is_exact() {
        let (lex, _) = extract_lexicon(&[
            clf("pizza", &[("crust", 0.3), ("wood fired", 0.7), ("x", 0.1)]),
            clf("spa", &[("massage", 1.0 / 3.0)]),
        ]);
        let back = ControlLexicon::from_tsv(&lex.to_tsv()).unwrap();
        assert_eq!(back, lex);
        assert_eq!(back.weight("massage"), Some(1.0));
    }
}

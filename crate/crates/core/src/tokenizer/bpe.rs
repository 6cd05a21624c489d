//! Pair-merge subword vocabulary.
//!
//! Words are split on whitespace and prefixed with a word-boundary symbol
//! (`▁`); merges are learned greedily on pair frequency, with ties broken by
//! the lexicographically smallest pair. Control tokens live in the same id
//! space but are atomic: they are only ever produced by id, never by
//! splitting text.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const WORD_BOUNDARY: char = '\u{2581}';

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
/// Terminates a control-token prefix.
pub const SEP: u32 = 4;

pub const RESERVED: [&str; 5] = ["<pad>", "<s>", "</s>", "<unk>", "<sep>"];

const FORMAT_TAG: &str = "revsum-vocab";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenKind {
    Reserved,
    Symbol,
    Merged,
    Control,
}

impl TokenKind {
    fn tag(self) -> &'static str {
        match self {
            TokenKind::Reserved => "reserved",
            TokenKind::Symbol => "symbol",
            TokenKind::Merged => "merged",
            TokenKind::Control => "control",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "reserved" => TokenKind::Reserved,
            "symbol" => TokenKind::Symbol,
            "merged" => TokenKind::Merged,
            "control" => TokenKind::Control,
            other => return Err(Error::data(format!("unknown token kind {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubwordVocab {
    merges: Vec<(String, String)>,
    merge_rank: HashMap<(String, String), usize>,
    tokens: Vec<String>,
    kinds: Vec<TokenKind>,
    token_to_id: HashMap<String, u32>,
    control_to_id: HashMap<String, u32>,
}

fn word_symbols(word: &str) -> Vec<String> {
    std::iter::once(WORD_BOUNDARY)
        .chain(word.chars())
        .map(String::from)
        .collect()
}

/// Learns a merge list from `texts` with at most `vocab_size` entries
/// (reserved tokens and base alphabet included).
pub fn train_subword_vocab<S: AsRef<str>>(texts: &[S], vocab_size: usize) -> Result<SubwordVocab> {
    let mut word_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for t in texts {
        for w in t.as_ref().split_whitespace() {
            *word_freq.entry(w).or_default() += 1;
        }
    }
    if word_freq.is_empty() {
        return Err(Error::data("cannot train a vocabulary on empty text"));
    }
    let alphabet: BTreeSet<String> = word_freq
        .keys()
        .flat_map(|w| word_symbols(w))
        .collect();
    let base = RESERVED.len() + alphabet.len();
    if vocab_size < base {
        return Err(Error::config(format!(
            "vocab_size {vocab_size} smaller than reserved + alphabet ({base})"
        )));
    }

    let mut words: Vec<(Vec<String>, usize)> = word_freq
        .iter()
        .map(|(w, &f)| (word_symbols(w), f))
        .collect();
    let mut merges = Vec::new();
    while base + merges.len() < vocab_size {
        let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
        for (syms, f) in &words {
            for pair in syms.windows(2) {
                *counts.entry((pair[0].as_str(), pair[1].as_str())).or_default() += f;
            }
        }
        let best = counts
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
        let Some(((a, b), _)) = best else { break };
        let pair = (a.to_string(), b.to_string());
        for (syms, _) in words.iter_mut() {
            apply_merge(syms, &pair);
        }
        merges.push(pair);
    }

    let mut vocab = SubwordVocab::empty();
    for r in RESERVED {
        vocab.push(r.to_string(), TokenKind::Reserved);
    }
    for s in alphabet {
        vocab.push(s, TokenKind::Symbol);
    }
    for (a, b) in &merges {
        let joined = format!("{a}{b}");
        if !vocab.token_to_id.contains_key(&joined) {
            vocab.push(joined, TokenKind::Merged);
        }
    }
    vocab.set_merges(merges);
    Ok(vocab)
}

fn apply_merge(syms: &mut Vec<String>, pair: &(String, String)) {
    let mut i = 0;
    while i + 1 < syms.len() {
        if syms[i] == pair.0 && syms[i + 1] == pair.1 {
            let right = syms.remove(i + 1);
            syms[i].push_str(&right);
        }
        i += 1;
    }
}

impl SubwordVocab {
    fn empty() -> Self {
        SubwordVocab {
            merges: Vec::new(),
            merge_rank: HashMap::new(),
            tokens: Vec::new(),
            kinds: Vec::new(),
            token_to_id: HashMap::new(),
            control_to_id: HashMap::new(),
        }
    }

    fn push(&mut self, token: String, kind: TokenKind) -> u32 {
        let id = self.tokens.len() as u32;
        match kind {
            TokenKind::Control => self.control_to_id.insert(token.clone(), id),
            _ => self.token_to_id.insert(token.clone(), id),
        };
        self.tokens.push(token);
        self.kinds.push(kind);
        id
    }

    fn set_merges(&mut self, merges: Vec<(String, String)>) {
        self.merge_rank = merges
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, p)| (p, i))
            .collect();
        self.merges = merges;
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Adds atomic control tokens; already-registered ones keep their ids.
    pub fn register_control_tokens<I, S>(&mut self, tokens: I) -> Vec<u32>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        tokens
            .into_iter()
            .map(|t| {
                let t = t.into();
                match self.control_to_id.get(&t) {
                    Some(&id) => id,
                    None => self.push(t, TokenKind::Control),
                }
            })
            .collect()
    }

    pub fn control_id(&self, token: &str) -> Option<u32> {
        self.control_to_id.get(token).copied()
    }

    pub fn is_control(&self, id: u32) -> bool {
        self.kinds.get(id as usize) == Some(&TokenKind::Control)
    }

    pub fn is_reserved(&self, id: u32) -> bool {
        (id as usize) < RESERVED.len()
    }

    /// Ids that can never appear in generated body text.
    pub fn non_text_ids(&self) -> Vec<u32> {
        (0..self.len() as u32)
            .filter(|&id| id != EOS && (self.is_reserved(id) || self.is_control(id)))
            .collect()
    }

    fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        let mut syms = word_symbols(word);
        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.merge_rank.get(&(p[0].clone(), p[1].clone())).copied())
                .min();
            let Some(rank) = best else { break };
            apply_merge(&mut syms, &self.merges[rank]);
        }
        out.extend(
            syms.iter()
                .map(|s| self.token_to_id.get(s).copied().unwrap_or(UNK)),
        );
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for w in text.split_whitespace() {
            self.encode_word(w, &mut out);
        }
        out
    }

    /// Renders ids back to text. Padding and sequence markers are dropped;
    /// control tokens are rendered verbatim as separate words.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self
                .tokens
                .get(id as usize)
                .ok_or_else(|| Error::data(format!("token id {id} out of range")))?;
            match self.kinds[id as usize] {
                TokenKind::Reserved if id == UNK => out.push_str(tok),
                TokenKind::Reserved => {}
                TokenKind::Control => {
                    out.push(' ');
                    out.push_str(tok);
                    out.push(' ');
                }
                TokenKind::Symbol | TokenKind::Merged => {
                    out.extend(tok.chars().map(|c| if c == WORD_BOUNDARY { ' ' } else { c }))
                }
            }
        }
        Ok(out.split_whitespace().collect::<Vec<_>>().join(" "))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_TAG} {FORMAT_VERSION}");
        let _ = write!(s, "reserved");
        for (i, r) in RESERVED.iter().enumerate() {
            let _ = write!(s, " {r}={i}");
        }
        s.push('\n');
        let _ = writeln!(
            s,
            "sizes tokens={} merges={} controls={}",
            self.tokens.len(),
            self.merges.len(),
            self.control_to_id.len()
        );
        let _ = writeln!(s, "[merges]");
        for (a, b) in &self.merges {
            let _ = writeln!(s, "{a} {b}");
        }
        let _ = writeln!(s, "[tokens]");
        for (i, (t, k)) in self.tokens.iter().zip(&self.kinds).enumerate() {
            let _ = writeln!(s, "{i}\t{}\t{t}", k.tag());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::data(format!("malformed vocab file: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        if header != format!("{FORMAT_TAG} {FORMAT_VERSION}") {
            return Err(bad("unsupported header"));
        }
        let reserved = lines.next().ok_or_else(|| bad("missing reserved line"))?;
        let expected_reserved: Vec<String> = RESERVED
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{r}={i}"))
            .collect();
        if reserved.split(' ').skip(1).collect::<Vec<_>>() != expected_reserved {
            return Err(bad("reserved ids differ"));
        }
        let sizes = lines.next().ok_or_else(|| bad("missing sizes"))?;
        let size_of = |key: &str| -> Result<usize> {
            sizes
                .split(' ')
                .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(key))
        };
        let (n_tokens, n_merges) = (size_of("tokens")?, size_of("merges")?);
        if lines.next() != Some("[merges]") {
            return Err(bad("missing [merges]"));
        }
        let mut merges = Vec::with_capacity(n_merges);
        for _ in 0..n_merges {
            let line = lines.next().ok_or_else(|| bad("truncated merges"))?;
            let (a, b) = line.split_once(' ').ok_or_else(|| bad("merge line"))?;
            merges.push((a.to_string(), b.to_string()));
        }
        if lines.next() != Some("[tokens]") {
            return Err(bad("missing [tokens]"));
        }
        let mut vocab = SubwordVocab::empty();
        for i in 0..n_tokens {
            let line = lines.next().ok_or_else(|| bad("truncated tokens"))?;
            let mut parts = line.splitn(3, '\t');
            let id: usize = parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("token id"))?;
            if id != i {
                return Err(bad("token ids not dense"));
            }
            let kind = TokenKind::parse(parts.next().ok_or_else(|| bad("token kind"))?)?;
            let tok = parts.next().ok_or_else(|| bad("token text"))?;
            vocab.push(tok.to_string(), kind);
        }
        vocab.set_merges(merges);
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Hex SHA-256 of the serialized vocabulary.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn normalized(s: &str) -> String {
        s.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        // pairs: (▁,a)=2 (a,a)=4 (a,b)=2
        let v = train_subword_vocab(&["aaab aaab"], 260).unwrap();
        assert_eq!(v.merges()[0], ("a".to_string(), "a".to_string()));
    }

    #[test]
    fn no_budget_means_character_vocab() {
        // alphabet = {▁, a, b}
        let v = train_subword_vocab(&["aaab aaab"], RESERVED.len() + 3).unwrap();
        assert!(v.merges().is_empty());
        assert_eq!(v.len(), RESERVED.len() + 3);
        assert!(train_subword_vocab(&["aaab"], RESERVED.len() + 2).is_err());
        assert!(train_subword_vocab::<&str>(&[], 100).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let texts = ["the cat sat on the mat", "the dog sat on the log"];
        let a = train_subword_vocab(&texts, 40).unwrap();
        let b = train_subword_vocab(&texts, 40).unwrap();
        assert_eq!(a.merges(), b.merges());
        assert!(a.len() <= 40);
    }

    #[test]
    fn empty_text_round_trips() {
        let v = train_subword_vocab(&["abc"], 20).unwrap();
        assert!(v.encode("").is_empty());
        assert_eq!(v.decode(&[]).unwrap(), "");
    }

    #[test]
    fn unseen_character_maps_to_unk() {
        let v = train_subword_vocab(&["great pizza here"], 40).unwrap();
        let ids = v.encode("pizza \u{1F355}");
        assert!(ids.contains(&UNK));
        assert!(v.decode(&[9999]).is_err());
    }

    #[test]
    fn control_tokens_are_atomic() {
        let mut v = train_subword_vocab(&["wine list"], 30).unwrap();
        let ids = v.register_control_tokens(["<KW_wine list>", "<POL_4.5>"]);
        assert_eq!(ids.len(), 2);
        assert_eq!(v.register_control_tokens(["<POL_4.5>"]), vec![ids[1]]);
        assert!(v.is_control(ids[0]));
        assert_eq!(v.control_id("<KW_wine list>"), Some(ids[0]));
        // text that looks like a control token is still split
        assert!(!v.encode("<POL_4.5>").contains(&ids[1]));
        let mut seq = vec![BOS, ids[1], SEP];
        seq.extend(v.encode("wine list"));
        assert_eq!(v.decode(&seq).unwrap(), "<POL_4.5> wine list");
    }

    #[test]
    fn file_round_trip() {
        let mut v = train_subword_vocab(&["the cat sat", "a cat ate"], 30).unwrap();
        v.register_control_tokens(["<CAT_pets>"]);
        let back = SubwordVocab::from_text(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(words in proptest::collection::vec("[a-e]{1,6}", 1..10), extra in 0usize..40) {
            let text = words.join("  ");
            let v = train_subword_vocab(&[text.as_str()], RESERVED.len() + 6 + extra).unwrap();
            let ids = v.encode(&text);
            prop_assert!(!ids.contains(&UNK));
            prop_assert_eq!(v.decode(&ids).unwrap(), normalized(&text));
        }
    }
}

//! Word-internal byte-pair encoding.
//!
//! Words are split on whitespace and into characters; the last character of
//! every word carries the `</w>` end-of-word marker, so `"hai"` starts as
//! `["h", "a", "i</w>"]`. Training greedily merges the most frequent adjacent
//! pair (ties broken by the lexicographically smallest pair) until the
//! vocabulary budget is spent or no pair remains.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{bail, Result};

pub const END_OF_WORD: &str = "</w>";
pub const PAD: &str = "[PAD]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";

pub const PAD_ID: usize = 0;
pub const CLS_ID: usize = 1;
pub const SEP_ID: usize = 2;
pub const UNK_ID: usize = 3;

pub const SPECIALS: [&str; 4] = [PAD, CLS, SEP, UNK];

/// Bidirectional token/id map. Ids `0..4` are always the specials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_of: Vec<String>,
    id_of: BTreeMap<String, usize>,
}

impl Vocab {
    /// Vocabulary holding only the special tokens.
    pub fn with_specials() -> Self {
        let mut v = Self {
            token_of: Vec::new(),
            id_of: BTreeMap::new(),
        };
        for s in SPECIALS {
            v.push(s);
        }
        v
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..4].iter().zip(SPECIALS).any(|(a, b)| a != b) {
            bail!(Contract, "vocabulary must start with {:?}", SPECIALS);
        }
        let mut id_of = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if id_of.insert(t.clone(), i).is_some() {
                bail!(Contract, "duplicate vocabulary token `{}`", t);
            }
        }
        Ok(Self {
            token_of: tokens,
            id_of,
        })
    }

    fn push(&mut self, token: &str) -> usize {
        if let Some(&id) = self.id_of.get(token) {
            return id;
        }
        let id = self.token_of.len();
        self.token_of.push(token.to_string());
        self.id_of.insert(token.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.token_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_of.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.token_of.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.token_of
    }

    pub fn is_special(id: usize) -> bool {
        id < SPECIALS.len()
    }
}

/// Merge rules in rank order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeTable {
    rules: Vec<(String, String)>,
    rank: BTreeMap<(String, String), usize>,
}

impl MergeTable {
    pub fn from_pairs(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut rank = BTreeMap::new();
        for (i, p) in pairs.iter().enumerate() {
            if rank.insert(p.clone(), i).is_some() {
                bail!(Contract, "duplicate merge rule {:?}", p);
            }
        }
        Ok(Self { rules: pairs, rank })
    }

    pub fn rules(&self) -> &[(String, String)] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    fn rank(&self, left: &str, right: &str) -> Option<usize> {
        // BTreeMap<(String, String)> cannot be queried with borrowed halves
        self.rank.get(&(left.to_string(), right.to_string())).copied()
    }
}

/// Trained vocabulary plus merges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    pub vocab: Vocab,
    pub merges: MergeTable,
}

fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let last = chars.len().saturating_sub(1);
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut s = c.to_string();
            if i == last {
                s.push_str(END_OF_WORD);
            }
            s
        })
        .collect()
}

fn merge_in_place(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let joined = symbols.remove(i + 1);
            symbols[i].push_str(&joined);
        }
        i += 1;
    }
}

impl Tokenizer {
    /// Learns merges on whitespace-split words of `corpus`.
    pub fn train<S: AsRef<str>>(corpus: &[S], target_vocab_size: usize) -> Result<Self> {
        let mut word_freq: BTreeMap<&str, usize> = BTreeMap::new();
        for text in corpus {
            for w in text.as_ref().split_whitespace() {
                *word_freq.entry(w).or_default() += 1;
            }
        }
        if word_freq.is_empty() {
            bail!(DegenerateInput, "cannot train BPE on an empty corpus");
        }

        let mut words: Vec<(Vec<String>, usize)> = word_freq
            .iter()
            .map(|(w, &f)| (word_symbols(w), f))
            .collect();
        let base: BTreeSet<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
        if target_vocab_size <= base.len() + SPECIALS.len() {
            bail!(
                Config,
                "vocabulary budget {} does not exceed {} base symbols plus {} specials",
                target_vocab_size,
                base.len(),
                SPECIALS.len()
            );
        }

        let mut vocab = Vocab::with_specials();
        for s in &base {
            vocab.push(s);
        }
        let mut rules = Vec::new();
        while vocab.len() < target_vocab_size {
            let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
            for (symbols, f) in &words {
                for pair in symbols.windows(2) {
                    *counts.entry((&pair[0], &pair[1])).or_default() += f;
                }
            }
            // max by count; BTreeMap order makes the first maximal key the smallest pair
            let Some(((l, r), _)) = counts
                .iter()
                .fold(None, |best: Option<(&(&str, &str), usize)>, (k, &c)| match best {
                    Some((_, bc)) if bc >= c => best,
                    _ => Some((k, c)),
                })
                .map(|(k, c)| (*k, c))
            else {
                break;
            };
            let (l, r) = (l.to_string(), r.to_string());
            for (symbols, _) in words.iter_mut() {
                merge_in_place(symbols, &l, &r);
            }
            let mut joined = l.clone();
            joined.push_str(&r);
            vocab.push(&joined);
            rules.push((l, r));
        }
        Ok(Self {
            vocab,
            merges: MergeTable::from_pairs(rules)?,
        })
    }

    /// Token ids of `text`; no special tokens are added.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        for word in text.split_whitespace() {
            let mut symbols = word_symbols(word);
            loop {
                let best = symbols
                    .windows(2)
                    .enumerate()
                    .filter_map(|(i, p)| self.merges.rank(&p[0], &p[1]).map(|r| (r, i)))
                    .min();
                let Some((rank, _)) = best else { break };
                let (l, r) = self.merges.rules[rank].clone();
                merge_in_place(&mut symbols, &l, &r);
            }
            ids.extend(symbols.iter().map(|s| self.vocab.id(s).unwrap_or(UNK_ID)));
        }
        ids
    }

    /// Text of `ids` with specials dropped and end-of-word markers turned into spaces.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let Some(tok) = self.vocab.token(id) else {
                bail!(Index, "token id {} outside vocabulary of size {}", id, self.vocab.len());
            };
            if Vocab::is_special(id) {
                continue;
            }
            match tok.strip_suffix(END_OF_WORD) {
                Some(stem) => {
                    out.push_str(stem);
                    out.push(' ');
                }
                None => out.push_str(tok),
            }
        }
        Ok(out.trim_end().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn s(x: &str) -> String {
        x.to_string()
    }

    /// Brute-force count of adjacent symbol pairs over the initial segmentation.
    fn pair_counts(corpus: &[&str]) -> BTreeMap<(String, String), usize> {
        let mut out = BTreeMap::new();
        for text in corpus {
            for w in text.split_whitespace() {
                let sy = word_symbols(w);
                for i in 0..sy.len().saturating_sub(1) {
                    *out.entry((sy[i].clone(), sy[i + 1].clone())).or_insert(0) += 1;
                }
            }
        }
        out
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let corpus = ["ab", "ab", "ac"];
        let counts = pair_counts(&corpus);
        let (best, _) = counts.iter().max_by_key(|(_, &c)| c).unwrap();
        assert_eq!(best, &(s("a"), s("b</w>")));

        // specials + {a, b</w>, c</w>} + one merge
        let tok = Tokenizer::train(&corpus, 8).unwrap();
        assert_eq!(tok.merges.rules()[0], (s("a"), s("b</w>")));
        assert_eq!(tok.vocab.len(), 8);
    }

    #[test]
    fn single_character_word_has_nothing_to_merge() {
        let tok = Tokenizer::train(&["a"], 10).unwrap();
        assert!(tok.merges.is_empty());
        assert_eq!(tok.vocab.tokens(), &[s(PAD), s(CLS), s(SEP), s(UNK), s("a</w>")]);
    }

    #[test]
    fn ties_go_to_lexicographically_smallest_pair() {
        let tok = Tokenizer::train(&["xy", "ab"], 10).unwrap();
        assert_eq!(tok.merges.rules()[0], (s("a"), s("b</w>")));
        assert_eq!(tok.merges.rules()[1], (s("x"), s("y</w>")));
    }

    #[test]
    fn empty_corpus_is_degenerate() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            Tokenizer::train(&empty, 100),
            Err(crate::Error::DegenerateInput(_))
        ));
        assert!(matches!(
            Tokenizer::train(&["   "], 100),
            Err(crate::Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn encode_decode_examples() {
        let corpus = ["mujhe park janaa hai", "hai hai park"];
        let tok = Tokenizer::train(&corpus, 60).unwrap();
        assert!(tok.encode("").is_empty());
        assert_eq!(tok.encode("hai").len(), 1);
        assert_eq!(tok.decode(&[]).unwrap(), "");
        let hai = tok.encode("hai")[0];
        assert_eq!(tok.decode(&[CLS_ID, hai, SEP_ID]).unwrap(), "hai");
        let ids = tok.encode("mujhe park janaa hai");
        assert_eq!(tok.decode(&ids).unwrap(), "mujhe park janaa hai");
    }

    #[test]
    fn unknown_symbols_map_to_unk() {
        let tok = Tokenizer::train(&["ab"], 10).unwrap();
        assert_eq!(tok.encode("zz"), vec![UNK_ID, UNK_ID]);
    }

    #[test]
    fn decode_rejects_unknown_id() {
        let tok = Tokenizer::train(&["ab"], 10).unwrap();
        assert!(matches!(tok.decode(&[999]), Err(crate::Error::Index(_))));
    }

    #[test]
    fn vocab_rejects_missing_specials() {
        assert!(Vocab::from_tokens(vec![s("a")]).is_err());
        assert!(Vocab::from_tokens(SPECIALS.iter().map(|t| s(t)).chain([s("x"), s("x")]).collect()).is_err());
    }
}

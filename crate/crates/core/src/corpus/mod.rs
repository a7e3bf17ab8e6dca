//! Corpus preparation: cleaning, language tagging, the Hindi-verb gate,
//! user filtering and the per-user chronological train/validation split.

mod clean;
mod tagger;

pub use clean::clean_text;
pub use tagger::{is_code_mixed, normalize_token, tag_language, LanguageTagger, LexiconTagger};

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::metrics::{compute_cmi, LangTag};

/// Minimum number of code-mixed utterances a user needs to be kept.
pub const MIN_UTTERANCES_PER_USER: usize = 3;

/// Raw input record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub user_id: String,
    pub order_index: i64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub user_id: String,
    pub order_index: i64,
    pub raw_text: String,
    pub clean_text: String,
    pub tokens: Vec<String>,
    pub tags: Vec<LangTag>,
    pub is_code_mixed: bool,
    pub cmi: f64,
}

impl Utterance {
    /// Cleans, tokenizes and tags one record. Supplied tags override the
    /// tagger and must line up with the cleaned tokens.
    pub fn prepare<T: LanguageTagger + ?Sized>(record: &RawRecord, tagger: &T) -> Result<Self> {
        let clean = clean_text(&record.text);
        let tokens: Vec<String> = clean.split_whitespace().map(ToString::to_string).collect();
        let tags = match &record.tags {
            Some(given) => {
                if given.len() != tokens.len() {
                    bail!(
                        Contract,
                        "user {} utterance {}: {} tags for {} cleaned tokens",
                        record.user_id,
                        record.order_index,
                        given.len(),
                        tokens.len()
                    );
                }
                given.iter().map(|t| LangTag::parse(t)).collect()
            }
            None => tag_language(&tokens, tagger),
        };
        let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
        Ok(Self {
            user_id: record.user_id.clone(),
            order_index: record.order_index,
            raw_text: record.text.clone(),
            is_code_mixed: is_code_mixed(&refs, &tags, tagger),
            cmi: compute_cmi(&tags),
            clean_text: clean,
            tokens,
            tags,
        })
    }
}

/// Keeps users with at least three utterances; input order is preserved.
pub fn filter_users(utterances: Vec<Utterance>) -> Vec<Utterance> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for u in &utterances {
        *counts.entry(u.user_id.as_str()).or_default() += 1;
    }
    let keep: BTreeMap<String, bool> = counts
        .into_iter()
        .map(|(k, c)| (k.to_string(), c >= MIN_UTTERANCES_PER_USER))
        .collect();
    utterances
        .into_iter()
        .filter(|u| keep[&u.user_id])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Vec<Utterance>,
    pub validation: Vec<Utterance>,
    /// user → (train count, validation count)
    pub per_user: BTreeMap<String, (usize, usize)>,
}

/// Validation share per user: `⌈n/4⌉`, at least one.
pub fn validation_count(n: usize) -> usize {
    n.div_ceil(4).max(1)
}

/// Per user, the chronologically last `⌈25%⌉` utterances (at least one) go
/// to validation and the rest to training. Both lists come out grouped by
/// user (sorted by id) and chronological within a user; equal order indices
/// keep their input order. The split is fully determined by the data, so
/// `_seed` is unused.
pub fn split_dataset(utterances: Vec<Utterance>, _seed: u64) -> Result<SplitDataset> {
    let mut by_user: BTreeMap<String, Vec<Utterance>> = BTreeMap::new();
    for u in utterances {
        by_user.entry(u.user_id.clone()).or_default().push(u);
    }
    let mut split = SplitDataset {
        train: Vec::new(),
        validation: Vec::new(),
        per_user: BTreeMap::new(),
    };
    for (user, mut utts) in by_user {
        if utts.len() < MIN_UTTERANCES_PER_USER {
            bail!(
                Contract,
                "user {} has {} utterances; at least {} are required to split",
                user,
                utts.len(),
                MIN_UTTERANCES_PER_USER
            );
        }
        utts.sort_by_key(|u| u.order_index);
        let n_val = validation_count(utts.len());
        let n_train = utts.len() - n_val;
        let val = utts.split_off(n_train);
        split.per_user.insert(user, (n_train, n_val));
        split.train.extend(utts);
        split.validation.extend(val);
    }
    Ok(split)
}

/// First word of each validation utterance, in validation order.
pub fn seed_words(split: &SplitDataset) -> Result<Vec<String>> {
    split
        .validation
        .iter()
        .map(|u| match u.clean_text.split_whitespace().next() {
            Some(w) => Ok(w.to_string()),
            None => Err(crate::Error::DegenerateInput(alloc::format!(
                "validation utterance {}/{} has no words",
                u.user_id,
                u.order_index
            ))),
        })
        .collect()
}

/// Dataset summary in the shape of a corpus-statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    #[serde(rename = "#Texts")]
    pub texts: usize,
    #[serde(rename = "#Users")]
    pub users: usize,
    /// Mean word count per text.
    #[serde(rename = "Mean text length")]
    pub mean_text_length: f64,
    #[serde(rename = "Mean CMI")]
    pub mean_cmi: f64,
}

impl CorpusStats {
    pub fn of<'a>(utterances: impl IntoIterator<Item = &'a Utterance>) -> Self {
        let mut texts = 0;
        let mut words = 0;
        let mut cmi = 0.0;
        let mut users = BTreeMap::new();
        for u in utterances {
            texts += 1;
            words += u.tokens.len();
            cmi += u.cmi;
            users.insert(u.user_id.as_str(), ());
        }
        let denom = texts.max(1) as f64;
        Self {
            texts,
            users: users.len(),
            mean_text_length: words as f64 / denom,
            mean_cmi: cmi / denom,
        }
    }
}

/// Output of the full preparation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCorpus {
    pub split: SplitDataset,
    pub seeds: Vec<String>,
    pub stats: CorpusStats,
}

/// clean → tag → gate → filter → split → seed words.
pub fn prepare_corpus<T: LanguageTagger + ?Sized>(
    records: &[RawRecord],
    tagger: &T,
    seed: u64,
) -> Result<PreparedCorpus> {
    let mut kept = Vec::new();
    for r in records {
        let u = Utterance::prepare(r, tagger)?;
        if !u.tokens.is_empty() && u.is_code_mixed {
            kept.push(u);
        }
    }
    let kept = filter_users(kept);
    if kept.is_empty() {
        bail!(
            DegenerateInput,
            "no user has {} or more code-mixed utterances",
            MIN_UTTERANCES_PER_USER
        );
    }
    let split = split_dataset(kept, seed)?;
    let seeds = seed_words(&split)?;
    let stats = CorpusStats::of(split.train.iter().chain(&split.validation));
    Ok(PreparedCorpus {
        split,
        seeds,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn utt(user: &str, order: i64, text: &str) -> Utterance {
        let tagger = LexiconTagger::new(["mujhe"], ["park"], ["hai"]);
        Utterance::prepare(
            &RawRecord {
                user_id: user.to_string(),
                order_index: order,
                text: text.to_string(),
                tags: None,
            },
            &tagger,
        )
        .unwrap()
    }

    fn user_with(name: &str, n: usize) -> Vec<Utterance> {
        (0..n).map(|i| utt(name, i as i64, &format!("w{i} hai"))).collect()
    }

    #[test]
    fn filter_threshold() {
        let mut all = user_with("two", 2);
        all.extend(user_with("three", 3));
        let kept = filter_users(all);
        assert_eq!(kept.len(), 3);
        assert!(kept.iter().all(|u| u.user_id == "three"));
        assert!(filter_users(vec![]).is_empty());
    }

    #[test]
    fn split_counts() {
        for (n, want) in [(3, (2, 1)), (4, (3, 1)), (8, (6, 2)), (5, (3, 2))] {
            let s = split_dataset(user_with("u", n), 0).unwrap();
            assert_eq!(s.per_user["u"], want, "n = {n}");
            assert_eq!(s.train.len(), want.0);
        }
    }

    #[test]
    fn validation_is_newest() {
        let mut utts = user_with("u", 4);
        utts.reverse();
        let s = split_dataset(utts, 0).unwrap();
        assert_eq!(s.validation[0].order_index, 3);
        assert_eq!(
            s.train.iter().map(|u| u.order_index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn split_rejects_small_users() {
        assert!(matches!(
            split_dataset(user_with("u", 2), 0),
            Err(crate::Error::Contract(_))
        ));
    }

    #[test]
    fn seed_word_examples() {
        let mut s = split_dataset(user_with("u", 3), 0).unwrap();
        s.validation[0] = utt("u", 9, "salman ji please");
        assert_eq!(seed_words(&s).unwrap(), vec!["salman".to_string()]);
        s.validation[0] = utt("u", 9, "wah");
        assert_eq!(seed_words(&s).unwrap(), vec!["wah".to_string()]);
        s.validation[0] = utt("u", 9, "   wah   ji");
        assert_eq!(seed_words(&s).unwrap(), vec!["wah".to_string()]);
        s.validation[0] = utt("u", 9, "");
        assert!(seed_words(&s).is_err());
    }

    #[test]
    fn pretagged_records_must_align() {
        let tagger = LexiconTagger::default();
        let rec = RawRecord {
            user_id: "a".into(),
            order_index: 0,
            text: "ek do".into(),
            tags: Some(vec!["Hi".into()]),
        };
        assert!(Utterance::prepare(&rec, &tagger).is_err());
        let rec = RawRecord {
            tags: Some(vec!["Hi".into(), "EN".into()]),
            ..rec
        };
        let u = Utterance::prepare(&rec, &tagger).unwrap();
        assert_eq!(u.tags, vec![LangTag::Hi, LangTag::En]);
        assert_eq!(u.cmi, 0.5);
    }

    #[test]
    fn pipeline_rejects_corpus_without_verbs() {
        let recs: Vec<RawRecord> = (0..6)
            .map(|i| RawRecord {
                user_id: "a".into(),
                order_index: i,
                text: "park park".into(),
                tags: None,
            })
            .collect();
        let tagger = LexiconTagger::new(["mujhe"], ["park"], ["hai"]);
        assert!(matches!(
            prepare_corpus(&recs, &tagger, 0),
            Err(crate::Error::DegenerateInput(_))
        ));
    }
}

//! Fixture locations and synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use paradox::config::RunConfig;
use paradox::io::write_jsonl;
use paradox_core::corpus::{LexiconTagger, RawRecord, Utterance};
use paradox_core::rng::{stream_rng, Stream};
use rand::Rng;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// Config pointing at a fixture directory holding `corpus.jsonl` and the
/// three lexicons.
pub fn fixture_config(set: &str, out_dir: &Path) -> RunConfig {
    RunConfig {
        corpus: Some(fixture(&format!("{set}/corpus.jsonl"))),
        hindi_lexicon: Some(fixture(&format!("{set}/hindi.txt"))),
        english_lexicon: Some(fixture(&format!("{set}/english.txt"))),
        hindi_verbs: Some(fixture(&format!("{set}/verbs.txt"))),
        out_dir: out_dir.to_path_buf(),
        vocab_size: 256,
        ..RunConfig::default()
    }
}

pub const HINDI: [&str; 16] = [
    "mujhe", "tumhe", "kal", "aaj", "bahut", "accha", "yaar", "kya", "baat", "ghar", "khana", "paani", "dost", "hai",
    "tha", "chalo",
];
pub const ENGLISH: [&str; 16] = [
    "match", "park", "movie", "office", "party", "weekend", "coffee", "phone", "game", "music", "traffic", "meeting",
    "college", "exam", "trip", "weather",
];
pub const VERBS: [&str; 3] = ["hai", "tha", "chalo"];

/// Writes the synthetic lexicons into `dir` and points `cfg` at them.
pub fn write_lexicons(dir: &Path, cfg: &mut RunConfig) {
    let write = |name: &str, words: &[&str]| {
        let p = dir.join(name);
        fs::write(&p, words.join("\n") + "\n").unwrap();
        p
    };
    cfg.hindi_lexicon = Some(write("hindi.txt", &HINDI));
    cfg.english_lexicon = Some(write("english.txt", &ENGLISH));
    cfg.hindi_verbs = Some(write("verbs.txt", &VERBS));
}

pub fn tagger() -> LexiconTagger {
    LexiconTagger::new(HINDI, ENGLISH, VERBS)
}

pub fn utterance(user: &str, order: i64, text: &str) -> Utterance {
    let record = RawRecord {
        user_id: user.to_string(),
        order_index: order,
        text: text.to_string(),
        tags: None,
    };
    Utterance::prepare(&record, &tagger()).unwrap()
}

/// `n` users with one distinct random code-mixed text each.
pub fn memorization_corpus(n: usize, seed: u64) -> Vec<Utterance> {
    let mut rng = stream_rng(seed, Stream::DataOrder, 1000);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let len = rng.random_range(4..=7);
        let words: Vec<&str> = (0..len)
            .map(|_| {
                if rng.random_bool(0.4) {
                    ENGLISH[rng.random_range(0..ENGLISH.len())]
                } else {
                    HINDI[rng.random_range(0..HINDI.len())]
                }
            })
            .collect();
        let text = words.join(" ");
        if seen.insert(text.clone()) {
            out.push(utterance(&format!("u{:02}", out.len()), 0, &text));
        }
    }
    out
}

pub const PERSONA_SEEDS: [&str; 4] = ["aaj", "kal", "yaar", "mujhe"];

/// User `A` alternates English and Hindi after the seed (CMI 0.5); user `B`
/// speaks Hindi only (CMI 0). Both open with the same seed words. Returns
/// (train, validation): the first 12 utterances of each user, then 4.
pub fn persona_corpus(seed: u64) -> (Vec<Utterance>, Vec<Utterance>) {
    let mut rng = stream_rng(seed, Stream::DataOrder, 2000);
    let body: Vec<&str> = HINDI.iter().copied().filter(|w| !PERSONA_SEEDS.contains(w)).collect();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (user, mixed) in [("A", true), ("B", false)] {
        for i in 0..16 {
            let mut words = vec![PERSONA_SEEDS[i % PERSONA_SEEDS.len()]];
            for j in 0..5 {
                let w = if mixed && j % 2 == 0 {
                    ENGLISH[rng.random_range(0..ENGLISH.len())]
                } else {
                    body[rng.random_range(0..body.len())]
                };
                words.push(w);
            }
            let u = utterance(user, i as i64, &words.join(" "));
            if i < 12 {
                train.push(u);
            } else {
                val.push(u);
            }
        }
    }
    (train, val)
}

/// Writes train and validation splits and points `cfg` at them.
pub fn write_splits(dir: &Path, cfg: &mut RunConfig, train: &[Utterance], val: &[Utterance]) {
    let (t, v) = (dir.join("train.jsonl"), dir.join("validation.jsonl"));
    write_jsonl(&t, train).unwrap();
    write_jsonl(&v, val).unwrap();
    cfg.train_file = Some(t);
    cfg.validation_file = Some(v);
}

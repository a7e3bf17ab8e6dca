//! Turning prepared utterances into model examples.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use paradox_core::corpus::Utterance;
use paradox_core::model::{Example, UserRef};
use paradox_core::tokenizer::Tokenizer;

use crate::config::PairMode;

/// Sorted distinct user ids of the training split; position is user row.
pub fn user_table(train: &[Utterance]) -> Vec<String> {
    let mut ids: Vec<String> = train.iter().map(|u| u.user_id.clone()).collect();
    ids.sort();
    ids.dedup();
    ids
}

pub fn user_ref(users: &[String], id: &str) -> UserRef {
    match users.binary_search_by(|u| u.as_str().cmp(id)) {
        Ok(i) => UserRef::Known(i),
        Err(_) => UserRef::Unknown,
    }
}

/// Per user, utterances of `earlier` then `later`, each chronological.
fn timelines<'a>(earlier: &'a [Utterance], later: &'a [Utterance]) -> BTreeMap<&'a str, Vec<&'a Utterance>> {
    let mut by_user: BTreeMap<&str, Vec<&Utterance>> = BTreeMap::new();
    for part in [earlier, later] {
        let mut sorted: Vec<&Utterance> = part.iter().collect();
        sorted.sort_by_key(|u| u.order_index);
        for u in sorted {
            by_user.entry(u.user_id.as_str()).or_default().push(u);
        }
    }
    by_user
}

/// Examples for `split`. In reconstruction mode the encoder reads the
/// target itself. In next-utterance mode it reads the same user's preceding
/// utterance, looked up across `context` then `split`; utterances with no
/// predecessor are dropped.
pub fn examples(
    split: &[Utterance],
    context: &[Utterance],
    users: &[String],
    tok: &Tokenizer,
    mode: PairMode,
    max_length: usize,
) -> Result<Vec<Example>> {
    let encode = |text: &str| {
        let mut ids = tok.encode(text);
        ids.truncate(max_length);
        ids
    };
    let mut out = Vec::with_capacity(split.len());
    match mode {
        PairMode::Reconstruction => {
            for u in split {
                let ids = encode(&u.clean_text);
                if !ids.is_empty() {
                    out.push(Example {
                        user: user_ref(users, &u.user_id),
                        source: ids.clone(),
                        target: ids,
                    });
                }
            }
        }
        PairMode::NextUtterance => {
            let in_split = |u: &Utterance| split.iter().any(|s| std::ptr::eq(s, u));
            for (user, line) in timelines(context, split) {
                for pair in line.windows(2) {
                    if !in_split(pair[1]) {
                        continue;
                    }
                    let (source, target) = (encode(&pair[0].clean_text), encode(&pair[1].clean_text));
                    if !source.is_empty() && !target.is_empty() {
                        out.push(Example {
                            user: user_ref(users, user),
                            source,
                            target,
                        });
                    }
                }
            }
        }
    }
    if out.is_empty() {
        bail!("no usable training pairs (empty encodings or no predecessors)");
    }
    Ok(out)
}

/// The chronologically last training utterance of each user.
pub fn last_train_text(train: &[Utterance]) -> BTreeMap<&str, &str> {
    let mut last: BTreeMap<&str, &Utterance> = BTreeMap::new();
    for u in train {
        let e = last.entry(u.user_id.as_str()).or_insert(u);
        if u.order_index >= e.order_index {
            *e = u;
        }
    }
    last.into_iter().map(|(k, u)| (k, u.clean_text.as_str())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(user: &str, order: i64, text: &str) -> Utterance {
        Utterance {
            user_id: user.into(),
            order_index: order,
            raw_text: text.into(),
            clean_text: text.into(),
            tokens: text.split_whitespace().map(String::from).collect(),
            tags: Vec::new(),
            is_code_mixed: true,
            cmi: 0.0,
        }
    }

    #[test]
    fn next_utterance_pairs_cross_the_split() {
        let train = vec![utt("b", 0, "x y"), utt("a", 1, "p"), utt("a", 0, "q")];
        let val = vec![utt("a", 2, "r"), utt("b", 1, "z")];
        let tok = Tokenizer::train(&["x y p q r z"], 40).unwrap();
        let users = user_table(&train);
        assert_eq!(users, ["a", "b"]);
        let ex = examples(&val, &train, &users, &tok, PairMode::NextUtterance, 10).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].source, tok.encode("p"));
        assert_eq!(ex[0].target, tok.encode("r"));
        assert_eq!(ex[1].user, UserRef::Known(1));
        assert_eq!(ex[1].source, tok.encode("x y"));
        let tr = examples(&train, &[], &users, &tok, PairMode::NextUtterance, 10).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!((tr[0].source.clone(), tr[0].target.clone()), (tok.encode("q"), tok.encode("p")));
    }

    #[test]
    fn reconstruction_and_last_text() {
        let train = vec![utt("a", 3, "late"), utt("a", 1, "early"), utt("c", 0, "only")];
        let tok = Tokenizer::train(&["late early only"], 40).unwrap();
        let users = user_table(&train);
        let ex = examples(&train, &[], &users, &tok, PairMode::Reconstruction, 2).unwrap();
        assert!(ex.iter().all(|e| e.source == e.target && e.source.len() <= 2));
        assert_eq!(user_ref(&users, "zz"), UserRef::Unknown);
        let last = last_train_text(&train);
        assert_eq!(last["a"], "late");
        assert_eq!(last["c"], "only");
    }
}

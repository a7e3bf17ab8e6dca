use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::metrics::LangTag;

/// Per-token language identification.
pub trait LanguageTagger {
    fn tag(&self, tokens: &[&str]) -> Vec<LangTag>;

    /// Whether `token` is a Hindi verb (the code-mixing gate).
    fn is_hindi_verb(&self, token: &str) -> bool;
}

fn is_devanagari(c: char) -> bool {
    matches!(c as u32, 0x0900..=0x097F | 0xA8E0..=0xA8FF)
}

/// Token with surrounding punctuation removed, as used for lexicon lookup.
pub fn normalize_token(token: &str) -> &str {
    token.trim_matches(|c: char| !(c.is_alphanumeric() || is_devanagari(c)))
}

/// Lexicon-and-script tagger: Devanagari tokens are Hindi, Roman tokens are
/// looked up in the Hindi lexicon first, then the English one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexiconTagger {
    hindi_words: BTreeSet<String>,
    english_words: BTreeSet<String>,
    hindi_verbs: BTreeSet<String>,
}

impl LexiconTagger {
    /// Words are lowercased; every verb is also registered as a Hindi word.
    pub fn new<I, J, K>(hindi_words: I, english_words: J, hindi_verbs: K) -> Self
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
        J: IntoIterator,
        J::Item: AsRef<str>,
        K: IntoIterator,
        K::Item: AsRef<str>,
    {
        let lower = |s: &str| s.trim().to_lowercase();
        let hindi_verbs: BTreeSet<String> = hindi_verbs
            .into_iter()
            .map(|w| lower(w.as_ref()))
            .filter(|w| !w.is_empty())
            .collect();
        let mut hindi_words: BTreeSet<String> = hindi_words
            .into_iter()
            .map(|w| lower(w.as_ref()))
            .filter(|w| !w.is_empty())
            .collect();
        hindi_words.extend(hindi_verbs.iter().cloned());
        let english_words = english_words
            .into_iter()
            .map(|w| lower(w.as_ref()))
            .filter(|w| !w.is_empty())
            .collect();
        Self {
            hindi_words,
            english_words,
            hindi_verbs,
        }
    }

    pub fn hindi_words(&self) -> &BTreeSet<String> {
        &self.hindi_words
    }

    pub fn english_words(&self) -> &BTreeSet<String> {
        &self.english_words
    }

    pub fn hindi_verbs(&self) -> &BTreeSet<String> {
        &self.hindi_verbs
    }

    pub fn tag_token(&self, token: &str) -> LangTag {
        let word = normalize_token(token);
        if word.chars().any(is_devanagari) {
            LangTag::Hi
        } else if self.hindi_words.contains(word) {
            LangTag::Hi
        } else if self.english_words.contains(word) {
            LangTag::En
        } else {
            LangTag::Other
        }
    }
}

impl LanguageTagger for LexiconTagger {
    fn tag(&self, tokens: &[&str]) -> Vec<LangTag> {
        tokens.iter().map(|t| self.tag_token(t)).collect()
    }

    fn is_hindi_verb(&self, token: &str) -> bool {
        self.hindi_verbs.contains(normalize_token(token))
    }
}

/// True when some Hindi-tagged token is a Hindi verb (Roman or Devanagari).
pub fn is_code_mixed<T: LanguageTagger + ?Sized>(tokens: &[&str], tags: &[LangTag], tagger: &T) -> bool {
    tokens
        .iter()
        .zip(tags)
        .any(|(tok, &tag)| tag == LangTag::Hi && tagger.is_hindi_verb(tok))
}

/// Convenience for owned token lists.
pub fn tag_language<T: LanguageTagger + ?Sized>(tokens: &[String], tagger: &T) -> Vec<LangTag> {
    let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
    tagger.tag(&refs)
}

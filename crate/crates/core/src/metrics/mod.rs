//! Code-mixing evaluation metrics over language-tag sequences.

mod cmi;
mod ks;
mod overlap;
mod report;

pub use cmi::compute_cmi;
pub use ks::cm_ks;
pub use overlap::{clipped_unigram_overlap, cm_bleu, cm_rouge1, cm_rouge_l, lcs_len};
pub use report::{perplexity_from_loss, MetricReport, TaggedPair, UserCmi};

use serde::{Deserialize, Serialize};

/// Per-token language label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LangTag {
    Hi,
    En,
    Other,
}

impl LangTag {
    /// Parses `"Hi"`/`"En"` (case-insensitive); everything else is `Other`.
    pub fn parse(s: &str) -> Self {
        if s.eq_ignore_ascii_case("hi") {
            LangTag::Hi
        } else if s.eq_ignore_ascii_case("en") {
            LangTag::En
        } else {
            LangTag::Other
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LangTag::Hi => "Hi",
            LangTag::En => "En",
            LangTag::Other => "Other",
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            LangTag::Hi => LangTag::En,
            LangTag::En => LangTag::Hi,
            LangTag::Other => LangTag::Other,
        }
    }
}

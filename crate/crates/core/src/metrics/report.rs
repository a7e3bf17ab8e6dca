#[allow(unused_imports)]
use num_traits::Float;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{cm_bleu, cm_ks, cm_rouge1, cm_rouge_l, compute_cmi, LangTag};
use crate::error::{bail, Result};

/// CMI values of one user's generated and reference texts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserCmi {
    pub generated: Vec<f64>,
    pub reference: Vec<f64>,
}

/// Corpus-level scores; overlap metrics are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub perplexity: f64,
    pub cm_bleu: f64,
    pub cm_rouge1: f64,
    pub cm_rouge_l: f64,
    pub cm_ks: f64,
    pub per_user_cmi: BTreeMap<String, UserCmi>,
}

/// `e^loss` for a mean per-token cross-entropy.
pub fn perplexity_from_loss(mean_token_loss: f64) -> f64 {
    mean_token_loss.exp()
}

/// One generated text next to its reference, as language tags.
#[derive(Debug, Clone, Copy)]
pub struct TaggedPair<'a> {
    pub user_id: &'a str,
    pub generated: &'a [LangTag],
    pub reference: &'a [LangTag],
}

impl MetricReport {
    /// Overlap metrics averaged over pairs; CM KS over the pooled per-text
    /// CMI values.
    pub fn from_pairs(pairs: &[TaggedPair<'_>], perplexity: f64) -> Result<Self> {
        if pairs.is_empty() {
            bail!(DegenerateInput, "no generated/reference pairs to score");
        }
        let (mut bleu, mut r1, mut rl) = (0.0, 0.0, 0.0);
        let mut per_user: BTreeMap<String, UserCmi> = BTreeMap::new();
        let (mut gen_all, mut ref_all) = (Vec::new(), Vec::new());
        for p in pairs {
            bleu += cm_bleu(p.generated, p.reference)?;
            r1 += cm_rouge1(p.generated, p.reference)?;
            rl += cm_rouge_l(p.generated, p.reference)?;
            let (g, r) = (compute_cmi(p.generated), compute_cmi(p.reference));
            let entry = per_user.entry(p.user_id.to_string()).or_default();
            entry.generated.push(g);
            entry.reference.push(r);
            gen_all.push(g);
            ref_all.push(r);
        }
        let n = pairs.len() as f64;
        Ok(Self {
            perplexity,
            cm_bleu: bleu / n,
            cm_rouge1: r1 / n,
            cm_rouge_l: rl / n,
            cm_ks: cm_ks(&gen_all, &ref_all)?,
            per_user_cmi: per_user,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use LangTag::{En, Hi};

    #[test]
    fn perfect_copy_scores() {
        let a = [Hi, En, Hi, Hi];
        let b = [En, En];
        let pairs = [
            TaggedPair {
                user_id: "u",
                generated: &a,
                reference: &a,
            },
            TaggedPair {
                user_id: "v",
                generated: &b,
                reference: &b,
            },
        ];
        let r = MetricReport::from_pairs(&pairs, 1.0).unwrap();
        assert_eq!((r.cm_bleu, r.cm_rouge1, r.cm_rouge_l, r.cm_ks), (1.0, 1.0, 1.0, 0.0));
        assert_eq!(r.per_user_cmi["u"].generated, vec![0.25]);
    }

    #[test]
    fn single_pair_worked_example() {
        let pairs = [TaggedPair {
            user_id: "u",
            generated: &[Hi, En, Hi, Hi],
            reference: &[Hi, En, Hi, En, Hi, Hi],
        }];
        let r = MetricReport::from_pairs(&pairs, 1.0).unwrap();
        assert!((r.cm_bleu - 0.6065).abs() < 5e-4);
        assert!(MetricReport::from_pairs(&[], 1.0).is_err());
    }
}

//! BLEU/Rouge computed over tag sequences rather than words.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::collections::BTreeMap;
use alloc::vec;

use super::LangTag;
use crate::error::{bail, Result};

fn ngram_counts(seq: &[LangTag], n: usize) -> BTreeMap<&[LangTag], usize> {
    let mut m = BTreeMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Σ over candidate n-grams of min(count in candidate, count in reference).
fn clipped_matches(candidate: &[LangTag], reference: &[LangTag], n: usize) -> usize {
    let r = ngram_counts(reference, n);
    ngram_counts(candidate, n)
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum()
}

pub fn clipped_unigram_overlap(candidate: &[LangTag], reference: &[LangTag]) -> usize {
    clipped_matches(candidate, reference, 1)
}

/// BLEU with uniform weights over unigrams and bigrams and no smoothing:
/// `BP · exp(½ ln p₁ + ½ ln p₂)`. Any zero precision gives 0. A one-tag
/// candidate has no bigrams and is scored on unigrams alone.
pub fn cm_bleu(candidate: &[LangTag], reference: &[LangTag]) -> Result<f64> {
    if candidate.is_empty() {
        bail!(DegenerateInput, "CM BLEU of an empty candidate");
    }
    let (c, r) = (candidate.len(), reference.len());
    let orders = if c >= 2 { 2 } else { 1 };
    let mut log_p = 0.0;
    for n in 1..=orders {
        let matched = clipped_matches(candidate, reference, n);
        if matched == 0 {
            return Ok(0.0);
        }
        log_p += (matched as f64 / (c + 1 - n) as f64).ln() / orders as f64;
    }
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    Ok(bp * log_p.exp())
}

fn f1(overlap: usize, c: usize, r: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / c as f64;
    let rec = overlap as f64 / r as f64;
    2.0 * p * rec / (p + rec)
}

/// Rouge-1 F1 over clipped unigram overlap.
pub fn cm_rouge1(candidate: &[LangTag], reference: &[LangTag]) -> Result<f64> {
    if candidate.is_empty() || reference.is_empty() {
        bail!(DegenerateInput, "CM Rouge-1 needs non-empty sequences");
    }
    Ok(f1(
        clipped_unigram_overlap(candidate, reference),
        candidate.len(),
        reference.len(),
    ))
}

pub fn lcs_len(a: &[LangTag], b: &[LangTag]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Rouge-L F1 from the longest common subsequence.
pub fn cm_rouge_l(candidate: &[LangTag], reference: &[LangTag]) -> Result<f64> {
    if candidate.is_empty() || reference.is_empty() {
        bail!(DegenerateInput, "CM Rouge-L needs non-empty sequences");
    }
    Ok(f1(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use LangTag::*;

    const CAND: [LangTag; 4] = [Hi, En, Hi, Hi];
    const REF: [LangTag; 6] = [Hi, En, Hi, En, Hi, Hi];

    /// Longest common subsequence by enumerating every subsequence of `a`.
    fn lcs_exhaustive(a: &[LangTag], b: &[LangTag]) -> usize {
        let is_subseq = |s: &[LangTag]| {
            let mut it = b.iter();
            s.iter().all(|x| it.any(|y| y == x))
        };
        (0u32..1 << a.len())
            .map(|mask| {
                let s: Vec<LangTag> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect();
                if is_subseq(&s) {
                    s.len()
                } else {
                    0
                }
            })
            .max()
            .unwrap()
    }

    #[test]
    fn bleu_worked_example() {
        let got = cm_bleu(&CAND, &REF).unwrap();
        assert!((got - (-0.5f64).exp()).abs() < 1e-12);
        assert!((got - 0.6065).abs() < 5e-4);
    }

    #[test]
    fn bleu_edge_cases() {
        assert_eq!(cm_bleu(&REF, &REF).unwrap(), 1.0);
        assert_eq!(cm_bleu(&[Hi, Hi], &[En, En]).unwrap(), 0.0);
        assert_eq!(cm_bleu(&[Hi], &[Hi]).unwrap(), 1.0);
        assert!((cm_bleu(&[Hi], &[Hi, Hi]).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        assert!(cm_bleu(&[], &REF).is_err());
    }

    #[test]
    fn rouge1_examples() {
        assert_eq!(cm_rouge1(&REF, &REF).unwrap(), 1.0);
        assert_eq!(clipped_unigram_overlap(&CAND, &REF), 4);
        assert!((cm_rouge1(&CAND, &REF).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(cm_rouge1(&[Hi], &[En]).unwrap(), 0.0);
        assert!(cm_rouge1(&[Hi], &[]).is_err());
    }

    #[test]
    fn rouge_l_examples() {
        assert_eq!(cm_rouge_l(&REF, &REF).unwrap(), 1.0);
        assert_eq!(lcs_exhaustive(&CAND, &REF), 4);
        assert_eq!(lcs_len(&CAND, &REF), 4);
        assert!((cm_rouge_l(&CAND, &REF).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(lcs_exhaustive(&[Hi, En], &[En, Hi]), 1);
        assert!((cm_rouge_l(&[Hi, En], &[En, Hi]).unwrap() - 0.5).abs() < 1e-12);
    }

    fn tag_seq() -> impl proptest::strategy::Strategy<Value = Vec<LangTag>> {
        proptest::collection::vec(proptest::sample::select(vec![Hi, En, Other]), 1..10)
    }

    proptest::proptest! {
        #[test]
        fn lcs_dp_matches_enumeration(a in tag_seq(), b in tag_seq()) {
            proptest::prop_assert_eq!(lcs_len(&a, &b), lcs_exhaustive(&a, &b));
        }

        #[test]
        fn lcs_bounded_by_unigram_overlap(a in tag_seq(), b in tag_seq()) {
            proptest::prop_assert!(lcs_len(&a, &b) <= clipped_unigram_overlap(&a, &b));
        }

        #[test]
        fn self_similarity_is_one(a in tag_seq()) {
            proptest::prop_assert_eq!(cm_bleu(&a, &a).unwrap(), 1.0);
            proptest::prop_assert_eq!(cm_rouge1(&a, &a).unwrap(), 1.0);
            proptest::prop_assert_eq!(cm_rouge_l(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn invariant_under_language_swap(a in tag_seq(), b in tag_seq()) {
            let sa: Vec<LangTag> = a.iter().map(|t| t.swapped()).collect();
            let sb: Vec<LangTag> = b.iter().map(|t| t.swapped()).collect();
            proptest::prop_assert_eq!(cm_bleu(&a, &b).unwrap(), cm_bleu(&sa, &sb).unwrap());
            proptest::prop_assert_eq!(cm_rouge1(&a, &b).unwrap(), cm_rouge1(&sa, &sb).unwrap());
            proptest::prop_assert_eq!(cm_rouge_l(&a, &b).unwrap(), cm_rouge_l(&sa, &sb).unwrap());
            proptest::prop_assert_eq!(
                crate::metrics::compute_cmi(&a),
                crate::metrics::compute_cmi(&sa)
            );
        }
    }
}

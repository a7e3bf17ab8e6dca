use super::LangTag;

/// Code-mixing index: fraction of minority-language tokens among the
/// Hindi/English-tagged tokens. `Other` tokens are ignored; a text without
/// any Hi/En token scores 0.
pub fn compute_cmi(tags: &[LangTag]) -> f64 {
    let hi = tags.iter().filter(|&&t| t == LangTag::Hi).count();
    let en = tags.iter().filter(|&&t| t == LangTag::En).count();
    let total = hi + en;
    if total == 0 {
        return 0.0;
    }
    // minority / total equals 1 - majority / total and is exact for 1/5
    hi.min(en) as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use LangTag::*;

    #[test]
    fn examples() {
        assert_eq!(compute_cmi(&[En, En, En, En, Hi]), 0.2);
        assert_eq!(compute_cmi(&[Hi, Hi, Hi]), 0.0);
        assert_eq!(compute_cmi(&[Hi, En, Hi, Hi]), 0.25);
    }

    #[test]
    fn other_tokens_are_excluded() {
        assert_eq!(compute_cmi(&[Other, Other]), 0.0);
        assert_eq!(compute_cmi(&[]), 0.0);
        assert_eq!(compute_cmi(&[Hi, Other, En, Other]), 0.5);
    }
}

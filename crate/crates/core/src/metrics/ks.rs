use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_gen − F_ref|` with
/// right-continuous empirical CDFs.
pub fn cm_ks(generated: &[f64], reference: &[f64]) -> Result<f64> {
    if generated.is_empty() || reference.is_empty() {
        bail!(DegenerateInput, "KS distance needs two non-empty samples");
    }
    let mut a: Vec<f64> = generated.to_vec();
    let mut b: Vec<f64> = reference.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Evaluates both empirical CDFs at every pooled sample point.
    fn oracle(a: &[f64], b: &[f64]) -> f64 {
        let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        a.iter()
            .chain(b)
            .map(|&x| (cdf(a, x) - cdf(b, x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn examples() {
        assert_eq!(cm_ks(&[0.1, 0.3, 0.2], &[0.3, 0.2, 0.1]).unwrap(), 0.0);
        assert_eq!(cm_ks(&[0.0, 0.1], &[0.9, 1.0]).unwrap(), 1.0);
        let want = oracle(&[0.1, 0.2, 0.3], &[0.2, 0.3, 0.4]);
        assert!((want - 1.0 / 3.0).abs() < 1e-12);
        assert!((cm_ks(&[0.1, 0.2, 0.3], &[0.2, 0.3, 0.4]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn empty_sample_is_degenerate() {
        assert!(cm_ks(&[], &[0.1]).is_err());
        assert!(cm_ks(&[0.1], &vec![]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn matches_pointwise_oracle(
            a in proptest::collection::vec(0u8..6, 1..12),
            b in proptest::collection::vec(0u8..6, 1..12),
        ) {
            let a: Vec<f64> = a.iter().map(|&v| v as f64 / 10.0).collect();
            let b: Vec<f64> = b.iter().map(|&v| v as f64 / 10.0).collect();
            let got = cm_ks(&a, &b).unwrap();
            proptest::prop_assert!((got - oracle(&a, &b)).abs() < 1e-12);
        }
    }
}

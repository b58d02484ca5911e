use nof1_core::trial::{count_treatment_paths, enumerate_paths, Scheme, TrialConfig};
use num_bigint::BigUint;

#[test]
fn counts_match_enumeration_for_small_trials() {
    for k in 1..=8 {
        for scheme in [Scheme::Unrestricted, Scheme::Pairwise] {
            let enumerated = enumerate_paths(&TrialConfig::new(k, 1).with_scheme(scheme)).unwrap();
            let count = count_treatment_paths(scheme, k);
            assert_eq!(count.count, BigUint::from(enumerated.len()), "{scheme} K={k}");
        }
        // Clipping keeps every path reachable under the restricted rule.
        let enumerated = enumerate_paths(&TrialConfig::new(k, 1).with_scheme(Scheme::Restricted)).unwrap();
        let count = count_treatment_paths(Scheme::Restricted, k);
        assert_eq!(count.count, BigUint::from(enumerated.len()));
        assert!(count.balanced_approx <= count.count);
    }
}

#[test]
fn balanced_approximation_for_restricted() {
    let c = count_treatment_paths(Scheme::Restricted, 6);
    assert_eq!(c.balanced_approx, BigUint::from(20u32));
    assert_eq!(c.count, BigUint::from(64u32));
}

mod common;

use proptest::prelude::*;
use siting_core::combinatorics::{
    binomial, enumerate_combinations, rank, total_subsets, unrank, Combinations,
};

/// Reference counts per length for m = 22. The s = 11 entry is a typo.
pub const REFERENCE_COUNTS: [u64; 22] = [
    22, 231, 1540, 7315, 26334, 74613, 170544, 319770, 497420, 646646, 705905, 646646, 497420,
    319770, 170544, 74613, 26334, 7315, 1540, 231, 22, 1,
];

#[test]
fn counts_for_22_objectives() {
    let mut sum = 0;
    for s in 1..=22 {
        let c = binomial(22, s).unwrap();
        assert_eq!(c, common::binomial(22, s as u64));
        sum += c;
        if s == 11 {
            // the listed 705,905 is inconsistent with the column total
            assert_eq!(c, 705_432);
            assert_ne!(c, REFERENCE_COUNTS[10]);
        } else {
            assert_eq!(c, REFERENCE_COUNTS[s - 1], "s = {s}");
        }
    }
    assert_eq!(sum, 4_194_303);
    assert_eq!(total_subsets(22).unwrap(), 4_194_303);
    // the column with s = 11 corrected sums to the reference total
    let listed: u64 = REFERENCE_COUNTS.iter().sum();
    assert_eq!(listed - 705_905 + 705_432, 4_194_303);
}

#[test]
fn rank_unrank_round_trip_small() {
    for m in 1..=8 {
        for s in 1..=m {
            let total = binomial(m, s).unwrap();
            for k in 1..=total {
                let set = unrank(m, s, k).unwrap();
                assert_eq!(rank(m, &set.indices).unwrap(), k);
            }
        }
    }
}

#[test]
fn stream_matches_unrank() {
    for m in 1..=10 {
        for s in 1..=m {
            let mut count = 0;
            for (i, set) in enumerate_combinations(m, s).unwrap().enumerate() {
                assert_eq!(set.rank, i as u64 + 1);
                assert_eq!(set, unrank(m, s, set.rank).unwrap());
                count += 1;
            }
            assert_eq!(count, common::binomial(m as u64, s as u64));
        }
    }
}

#[test]
fn stream_is_strictly_lexicographic() {
    let all: Vec<Vec<usize>> = Combinations::new(9, 4)
        .unwrap()
        .map(|c| c.indices)
        .collect();
    for w in all.windows(2) {
        assert!(w[0] < w[1]);
    }
}

#[test]
fn rejects_out_of_range() {
    assert!(unrank(5, 2, 0).is_err());
    assert!(unrank(5, 2, 11).is_err());
    assert!(unrank(5, 6, 1).is_err());
    assert!(rank(5, &[3, 2]).is_err());
    assert!(rank(5, &[1, 6]).is_err());
    assert!(enumerate_combinations(5, 0).is_err());
}

proptest! {
    #[test]
    fn unrank_rank_inverse(m in 1usize..=40, s_frac in 0.0f64..1.0, k_frac in 0.0f64..1.0) {
        let s = 1 + ((m - 1) as f64 * s_frac) as usize;
        let total = binomial(m, s).unwrap();
        let k = 1 + ((total - 1) as f64 * k_frac) as u64;
        let set = unrank(m, s, k).unwrap();
        prop_assert_eq!(set.indices.len(), s);
        prop_assert!(set.indices.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(set.indices[0] >= 1 && *set.indices.last().unwrap() <= m);
        prop_assert_eq!(rank(m, &set.indices).unwrap(), k);
    }

    #[test]
    fn symmetry_and_pascal(m in 2usize..=60, s_frac in 0.0f64..1.0) {
        let s = 1 + ((m - 2) as f64 * s_frac) as usize;
        prop_assert_eq!(binomial(m, s).unwrap(), binomial(m, m - s).unwrap());
        let left = if s == 1 { 1 } else { binomial(m - 1, s - 1).unwrap() };
        prop_assert_eq!(binomial(m, s).unwrap(), left + binomial(m - 1, s).unwrap());
        prop_assert_eq!(binomial(m, s).unwrap(), common::binomial(m as u64, s as u64));
    }

    #[test]
    fn range_stream_agrees(m in 2usize..=14, s_frac in 0.0f64..1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let s = 1 + ((m - 1) as f64 * s_frac) as usize;
        let total = binomial(m, s).unwrap();
        let (lo, hi) = {
            let x = 1 + ((total - 1) as f64 * a) as u64;
            let y = 1 + ((total - 1) as f64 * b) as u64;
            (x.min(y), x.max(y))
        };
        let got: Vec<u64> = Combinations::range(m, s, lo, hi).unwrap().map(|c| c.rank).collect();
        let want: Vec<u64> = (lo..=hi).collect();
        prop_assert_eq!(got, want);
        let first = Combinations::range(m, s, lo, hi).unwrap().next().unwrap();
        prop_assert_eq!(first, unrank(m, s, lo).unwrap());
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of each domain, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDistribution {
    pub percentages: BTreeMap<String, f64>,
}

/// `W_r = 1/r`.
pub fn reciprocal_rank(rank: usize) -> f64 {
    1.0 / rank as f64
}

/// Rank-weighted domain shares.
///
/// `F[D][r]` counts how often domain `D` appears at 1-based rank `r`;
/// `S_D = sum_r F[D][r] * W_r` and `P_D = 100 * S_D / sum S`. Counts are
/// taken first so the result does not depend on the order of `lists`.
pub fn domain_distribution<L, F>(lists: &[L], weight: F) -> Result<DomainDistribution>
where
    L: AsRef<[String]>,
    F: Fn(usize) -> f64,
{
    let mut counts: BTreeMap<&str, BTreeMap<usize, u64>> = BTreeMap::new();
    for list in lists {
        for (i, domain) in list.as_ref().iter().enumerate() {
            *counts.entry(domain).or_default().entry(i + 1).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let weighted: BTreeMap<&str, f64> = counts
        .iter()
        .map(|(d, by_rank)| {
            let s = by_rank.iter().map(|(r, f)| *f as f64 * weight(*r)).sum();
            (*d, s)
        })
        .collect();
    let total: f64 = weighted.values().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::InvalidConfig("rank weights sum to zero".into()));
    }
    Ok(DomainDistribution {
        percentages: weighted
            .into_iter()
            .map(|(d, s)| (d.to_string(), 100.0 * s / total))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lists(xs: &[&[&str]]) -> Vec<Vec<String>> {
        xs.iter()
            .map(|l| l.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn weighted_rank_example() {
        let d = domain_distribution(
            &lists(&[&["Math"], &["Math"], &["Physics", "Math"]]),
            reciprocal_rank,
        )
        .unwrap();
        // S_Math = 2*1 + 1*(1/2) = 2.5, S_Physics = 1
        assert!((d.percentages["Math"] - 100.0 * 2.5 / 3.5).abs() < 1e-9);
        assert!((d.percentages["Math"] - 71.428_571_4).abs() < 1e-7);
        assert!((d.percentages["Physics"] - 100.0 / 3.5).abs() < 1e-9);
    }

    #[test]
    fn single_domain_and_empty() {
        let d = domain_distribution(&lists(&[&["Law"], &["Law"]]), reciprocal_rank).unwrap();
        assert_eq!(d.percentages["Law"], 100.0);
        assert!(matches!(
            domain_distribution::<Vec<String>, _>(&[], reciprocal_rank),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            domain_distribution(&lists(&[&[], &[]]), reciprocal_rank),
            Err(Error::EmptyInput)
        ));
    }

    proptest! {
        #[test]
        fn sums_to_hundred_and_ignores_order(
            raw in proptest::collection::vec(
                proptest::collection::vec(0u8..12, 0..6), 1..40),
            rotate in 0usize..40,
        ) {
            let ls: Vec<Vec<String>> = raw
                .iter()
                .map(|l| l.iter().map(|d| format!("d{d}")).collect())
                .collect();
            prop_assume!(ls.iter().any(|l| !l.is_empty()));
            let d = domain_distribution(&ls, reciprocal_rank).unwrap();
            let total: f64 = d.percentages.values().sum();
            prop_assert!((total - 100.0).abs() <= 1e-9);

            let mut permuted = ls.clone();
            let k = rotate % permuted.len();
            permuted.rotate_left(k);
            permuted.reverse();
            prop_assert_eq!(domain_distribution(&permuted, reciprocal_rank).unwrap(), d);
        }
    }
}

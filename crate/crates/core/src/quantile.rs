//! Order-statistic quantiles used for conformal thresholds.
//!
//! All quantiles are order statistics of the multiset of inputs (duplicates
//! kept), never interpolated. `+∞` is returned when the requested level asks
//! for more mass than the sample holds; downstream code treats it as "the set
//! is the whole label space".

use crate::error::{Error, Result};
use crate::sum::ExactSum;

/// Slack applied before taking a ceiling so that levels such as
/// `0.9 * (1 + 1/9)`, which round to `1.0000000000000002`, land on the
/// intended integer rank.
const RANK_SLACK: f64 = 1e-12;

/// 1-based rank `⌈level·n⌉` clamped below at 1, or `None` when it exceeds `n`.
pub fn quantile_rank(level: f64, n: usize) -> Option<usize> {
    let x = level * n as f64;
    let k = (x - RANK_SLACK * (n as f64).max(1.0)).ceil();
    if k > n as f64 {
        None
    } else if k < 1.0 {
        Some(1)
    } else {
        Some(k as usize)
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty("quantile input"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NaN("quantile input"));
    }
    Ok(())
}

fn check_level(level: f64) -> Result<()> {
    if level.is_nan() {
        return Err(Error::NaN("quantile level"));
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `k`-th smallest value with `k = ⌈level·n⌉`; `+∞` if `k > n`.
pub fn empirical_quantile(values: &[f64], level: f64) -> Result<f64> {
    check_values(values)?;
    check_level(level)?;
    Ok(match quantile_rank(level, values.len()) {
        None => f64::INFINITY,
        Some(k) => kth_smallest(values, k),
    })
}

fn kth_smallest(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// Split conformal threshold `Q_{(1-α)(1+1/n)}` of the labeled scores.
pub fn inflated_conformal_threshold(scores: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let n = scores.len() as f64;
    empirical_quantile(scores, (1.0 - alpha) * (1.0 + 1.0 / n))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Smallest value whose cumulative weight reaches `level`. Weights of equal
/// values are pooled first. Returns `+∞` for `level > 1`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], level: f64) -> Result<f64> {
    check_values(values)?;
    check_level(level)?;
    if values.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            context: "weighted quantile weights",
            expected: values.len(),
            got: weights.len(),
        });
    }
    for &w in weights {
        if w.is_nan() {
            return Err(Error::NaN("quantile weights"));
        }
        if w < 0.0 {
            return Err(Error::NegativeWeight(w));
        }
    }
    let mut total = ExactSum::new();
    total.extend(weights.iter().copied());
    let total = total.value();
    if (total - 1.0).abs() > RANK_SLACK * (values.len() as f64).max(1.0) {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, expected 1")));
    }
    if level > 1.0 + RANK_SLACK {
        return Ok(f64::INFINITY);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cum = ExactSum::new();
    let mut i = 0;
    while i < order.len() {
        let v = values[order[i]];
        while i < order.len() && values[order[i]] == v {
            cum.add(weights[order[i]]);
            i += 1;
        }
        if cum.value() >= level - RANK_SLACK {
            return Ok(v);
        }
    }
    Ok(values[order[order.len() - 1]])
}

/// `(Q_{(1-α)(1+1/n) - 1/n}, Q_{(1-α)(1+1/n)})` of the labeled scores.
///
/// With `t` a hypothesized test score, the augmented quantile
/// `Q_{1-α}(scores ∪ {t})` is `q_minus` for `t <= q_minus`, `t` in between,
/// and `q_plus` for `t >= q_plus`.
pub fn augmented_threshold_bounds(scores: &[f64], alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let n = scores.len() as f64;
    let level = (1.0 - alpha) * (1.0 + 1.0 / n);
    let q_minus = empirical_quantile(scores, level - 1.0 / n)?;
    let q_plus = empirical_quantile(scores, level)?;
    Ok((q_minus, q_plus))
}

/// Precomputed order statistics for evaluating `Q_{1-α}(scores ∪ {t})` for
/// many `t`.
///
/// `lower` differs from the public `q_minus` only when the augmented rank is
/// 1: then every `t` below the smallest score is itself the answer, so the
/// internal lower bound is `-∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedBounds {
    pub lower: f64,
    pub upper: f64,
}

impl AugmentedBounds {
    pub fn new(scores: &[f64], alpha: f64) -> Result<Self> {
        check_values(scores)?;
        check_alpha(alpha)?;
        let n = scores.len();
        let s = sorted(scores);
        // rank of the augmented quantile among n + 1 values
        let k = quantile_rank(1.0 - alpha, n + 1).expect("1 - alpha < 1");
        let upper = if k > n { f64::INFINITY } else { s[k - 1] };
        let lower = if k >= 2 { s[k - 2] } else { f64::NEG_INFINITY };
        Ok(Self { lower, upper })
    }

    pub fn threshold(&self, test_score: f64) -> f64 {
        if test_score <= self.lower {
            self.lower
        } else if test_score >= self.upper {
            self.upper
        } else {
            test_score
        }
    }

    /// Which branch of the case split `test_score` falls in.
    pub fn branch(&self, test_score: f64) -> Branch {
        if test_score <= self.lower {
            Branch::Lower
        } else if test_score >= self.upper {
            Branch::Upper
        } else {
            Branch::Interior
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Lower,
    Interior,
    Upper,
}

/// `Q_{1-α}(scores ∪ {test_score})`.
pub fn augmented_threshold(scores: &[f64], test_score: f64, alpha: f64) -> Result<f64> {
    if test_score.is_nan() {
        return Err(Error::NaN("test score"));
    }
    Ok(AugmentedBounds::new(scores, alpha)?.threshold(test_score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_to(n: usize) -> Vec<f64> {
        (1..=n).map(|i| i as f64).collect()
    }

    /// Oracle: sort, index with exact rational arithmetic on integer
    /// numerators (levels are passed as `num / den`).
    fn oracle_rational(values: &[f64], num: u64, den: u64) -> f64 {
        let n = values.len() as u64;
        let k = ((num * n + den - 1) / den).max(1);
        if k > n {
            return f64::INFINITY;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        v[(k - 1) as usize]
    }

    #[test]
    fn spec_examples() {
        assert_eq!(empirical_quantile(&one_to(10), 0.9).unwrap(), 9.0);
        assert_eq!(empirical_quantile(&one_to(10), 1.0).unwrap(), 10.0);
        assert_eq!(empirical_quantile(&[5.0], 1.2).unwrap(), f64::INFINITY);
        assert_eq!(inflated_conformal_threshold(&one_to(9), 0.1).unwrap(), 9.0);
        assert_eq!(inflated_conformal_threshold(&one_to(10), 0.2).unwrap(), 9.0);
        assert_eq!(weighted_quantile(&[1.0, 2.0, 3.0], &[0.5, 0.25, 0.25], 0.5).unwrap(), 1.0);
        assert_eq!(weighted_quantile(&one_to(10), &[0.1; 10], 0.9).unwrap(), 9.0);
        assert_eq!(weighted_quantile(&[1.0, 2.0], &[0.3, 0.7], 0.31).unwrap(), 2.0);
        assert_eq!(augmented_threshold_bounds(&one_to(10), 0.2).unwrap(), (8.0, 9.0));
        assert_eq!(
            augmented_threshold_bounds(&one_to(10), 0.01).unwrap(),
            (10.0, f64::INFINITY)
        );
        assert_eq!(augmented_threshold_bounds(&[5.0], 0.5).unwrap(), (5.0, 5.0));
        assert_eq!(augmented_threshold(&one_to(10), 0.0, 0.2).unwrap(), 8.0);
        assert_eq!(augmented_threshold(&one_to(10), 100.0, 0.2).unwrap(), 9.0);
        assert_eq!(augmented_threshold(&one_to(10), 8.5, 0.2).unwrap(), 8.5);
    }

    #[test]
    fn nineteen_scores_at_five_percent() {
        // (1 - 0.05)(1 + 1/19) * 19 = 19 exactly, so the 19th order statistic
        let oracle = oracle_rational(&one_to(19), 95 * 20, 100 * 19);
        assert_eq!(oracle, 19.0);
        assert_eq!(inflated_conformal_threshold(&one_to(19), 0.05).unwrap(), oracle);
    }

    #[test]
    fn rank_one_augmented_case_uses_the_test_score() {
        // n = 1, alpha = 0.5: the augmented rank is 1, so any smaller test
        // score is itself the quantile
        assert_eq!(augmented_threshold(&[5.0], 3.0, 0.5).unwrap(), 3.0);
        assert_eq!(augmented_threshold(&[5.0], 7.0, 0.5).unwrap(), 5.0);
    }

    #[test]
    fn errors() {
        assert_eq!(empirical_quantile(&[], 0.5), Err(Error::Empty("quantile input")));
        assert_eq!(empirical_quantile(&[1.0, f64::NAN], 0.5), Err(Error::NaN("quantile input")));
        assert_eq!(
            weighted_quantile(&[1.0, 2.0], &[1.5, -0.5], 0.5),
            Err(Error::NegativeWeight(-0.5))
        );
        assert!(inflated_conformal_threshold(&[1.0], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn augmented_matches_bruteforce(
            scores in prop::collection::vec(prop_oneof![0u8..6, 0u8..200].prop_map(|v| v as f64 / 4.0), 1..50),
            t in (0u8..210).prop_map(|v| v as f64 / 4.0),
            a in 1u64..99,
        ) {
            let alpha = a as f64 / 100.0;
            let mut aug = scores.clone();
            aug.push(t);
            let want = oracle_rational(&aug, 100 - a, 100);
            prop_assert_eq!(augmented_threshold(&scores, t, alpha).unwrap(), want);
        }

        #[test]
        fn empirical_is_monotone_and_symmetric(
            mut v in prop::collection::vec(-100.0f64..100.0, 1..40),
            l1 in 0.0f64..1.3, l2 in 0.0f64..1.3,
        ) {
            let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            prop_assert!(empirical_quantile(&v, lo).unwrap() <= empirical_quantile(&v, hi).unwrap());
            let a = empirical_quantile(&v, hi).unwrap();
            v.reverse();
            prop_assert_eq!(a, empirical_quantile(&v, hi).unwrap());
        }

        #[test]
        fn uniform_weights_reduce_to_empirical(
            v in prop::collection::vec((0u8..30).prop_map(f64::from), 1..40),
            level in 0.01f64..1.0,
        ) {
            let w = vec![1.0 / v.len() as f64; v.len()];
            prop_assert_eq!(weighted_quantile(&v, &w, level).unwrap(), empirical_quantile(&v, level).unwrap());
        }

        #[test]
        fn inflation_is_conservative(
            v in prop::collection::vec(-10.0f64..10.0, 1..40),
            alpha in 0.01f64..0.99,
        ) {
            prop_assert!(
                inflated_conformal_threshold(&v, alpha).unwrap() >= empirical_quantile(&v, 1.0 - alpha).unwrap()
            );
        }
    }
}

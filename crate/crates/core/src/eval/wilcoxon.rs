use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::WalkPrediction;
use crate::dataset::{MedicationState, ParticipantId};
use crate::error::{Error, Result};

/// Largest effective sample size for the exact null distribution.
pub const EXACT_MAX_N: usize = 25;

/// Differences (and |d| ties) closer than this are treated as equal.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `T = min(W+, W-)`.
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: WilcoxonMethod,
    pub w_plus: f64,
    pub w_minus: f64,
}

/// Average ranks of `values` (1-based), doubled so that they are integers.
pub(crate) fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] - values[order[i]] <= TIE_TOLERANCE * values[order[i]].abs().max(1.0) {
            j += 1;
        }
        // positions i+1..=j share rank (i+1+j)/2, doubled: i+1+j
        for &o in &order[i..j] {
            ranks[o] = (i + 1 + j) as u64;
        }
        i = j;
    }
    ranks
}

/// Signed-rank test on `(on, off)` pairs with `d = off - on`.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<WilcoxonResult> {
    if pairs.is_empty() {
        return Err(Error::validation("signed-rank test needs at least one pair"));
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::validation("signed-rank test on non-finite values"));
    }
    let diffs: Vec<f64> = pairs
        .iter()
        .map(|&(on, off)| off - on)
        .collect();
    signed_rank_of_differences(&diffs)
}

/// Test on already-formed differences; zeros are dropped.
pub fn signed_rank_of_differences(diffs: &[f64]) -> Result<WilcoxonResult> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::validation("signed-rank test on non-finite values"));
    }
    let diffs: Vec<f64> = diffs.iter().copied().filter(|d| d.abs() > TIE_TOLERANCE).collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::DegenerateTest("all paired differences are zero".into()));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&magnitudes);
    let total2: u64 = ranks.iter().sum();
    let plus2: u64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, &r)| r).sum();
    let minus2 = total2 - plus2;
    let t2 = plus2.min(minus2);

    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p(&ranks, t2), WilcoxonMethod::Exact)
    } else {
        (normal_p(&ranks, t2), WilcoxonMethod::NormalApprox)
    };
    Ok(WilcoxonResult {
        statistic: t2 as f64 / 2.0,
        p_value,
        n_effective: n,
        method,
        w_plus: plus2 as f64 / 2.0,
        w_minus: minus2 as f64 / 2.0,
    })
}

/// Fraction of the 2^n sign assignments whose statistic is at most the
/// observed one, by a subset-sum count over the doubled ranks.
fn exact_p(ranks: &[u64], t2: u64) -> f64 {
    let total2: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; total2 as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let extreme: u64 = counts
        .iter()
        .enumerate()
        .filter(|&(s, _)| (s as u64).min(total2 - s as u64) <= t2)
        .map(|(_, &c)| c)
        .sum();
    let p = extreme as f64 / 2f64.powi(ranks.len() as i32);
    p.min(1.0)
}

/// Normal approximation with tie and continuity corrections.
fn normal_p(ranks: &[u64], t2: u64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut tie_sizes: BTreeMap<u64, f64> = BTreeMap::new();
    for &r in ranks {
        *tie_sizes.entry(r).or_default() += 1.0;
    }
    let tie_term: f64 = tie_sizes.values().map(|t| t * t * t - t).sum();
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let mut d = t2 as f64 / 2.0 - mean;
    if d != 0.0 {
        d -= 0.5 * d.signum();
    }
    let z = d / var.sqrt();
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * std.cdf(-z.abs())).min(1.0)
}

/// How one participant's walks in one state are reduced to a single value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    /// Most frequent score, ties to the lower score.
    Mode,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "mode" => Ok(Self::Mode),
            other => Err(Error::validation(format!("unknown aggregation {other:?}"))),
        }
    }
}

fn aggregate(values: &[usize], how: Aggregation) -> f64 {
    match how {
        Aggregation::Mean => values.iter().sum::<usize>() as f64 / values.len() as f64,
        Aggregation::Mode => {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for &v in values {
                *counts.entry(v).or_default() += 1;
            }
            let mut best = (0, 0);
            for (&v, &c) in &counts {
                if c > best.1 {
                    best = (v, c);
                }
            }
            best.0 as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantPair {
    pub participant: ParticipantId,
    pub on_predicted: f64,
    pub off_predicted: f64,
    pub on_truth: f64,
    pub off_truth: f64,
    pub on_walks: usize,
    pub off_walks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnOffAnalysis {
    pub aggregation: Aggregation,
    pub pairs: Vec<ParticipantPair>,
    pub predicted: WilcoxonResult,
    /// `None` when the labels do not differ between states for anyone.
    pub ground_truth: Option<WilcoxonResult>,
}

/// Per-participant ON/OFF values for everyone recorded in both states, in
/// participant order.
pub fn pair_on_off(predictions: &[WalkPrediction], how: Aggregation) -> Result<Vec<ParticipantPair>> {
    type Groups = [(Vec<usize>, Vec<usize>); 2];
    let mut by_participant: BTreeMap<&ParticipantId, Groups> = BTreeMap::new();
    for p in predictions {
        let slot = match p.medication {
            MedicationState::On => 0,
            MedicationState::Off => 1,
        };
        let g = &mut by_participant.entry(&p.participant).or_default()[slot];
        g.0.push(p.predicted);
        g.1.push(p.truth);
    }
    let pairs: Vec<ParticipantPair> = by_participant
        .into_iter()
        .filter(|(_, [on, off])| !on.0.is_empty() && !off.0.is_empty())
        .map(|(participant, [on, off])| ParticipantPair {
            participant: participant.clone(),
            on_predicted: aggregate(&on.0, how),
            off_predicted: aggregate(&off.0, how),
            on_truth: aggregate(&on.1, how),
            off_truth: aggregate(&off.1, how),
            on_walks: on.0.len(),
            off_walks: off.0.len(),
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::validation("no participant has predictions in both medication states"));
    }
    Ok(pairs)
}

/// Signed-rank comparison of predicted (and true) scores between states.
pub fn on_off_analysis(predictions: &[WalkPrediction], how: Aggregation) -> Result<OnOffAnalysis> {
    let pairs = pair_on_off(predictions, how)?;
    let predicted = wilcoxon_signed_rank(&pairs.iter().map(|p| (p.on_predicted, p.off_predicted)).collect::<Vec<_>>())?;
    let ground_truth = match wilcoxon_signed_rank(&pairs.iter().map(|p| (p.on_truth, p.off_truth)).collect::<Vec<_>>()) {
        Ok(w) => Some(w),
        Err(Error::DegenerateTest(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(OnOffAnalysis { aggregation: how, pairs, predicted, ground_truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct 2^n enumeration over sign patterns with ranks recomputed by
    /// pairwise comparison.
    fn oracle(diffs: &[f64]) -> (f64, f64) {
        let n = diffs.len();
        let mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        let rank = |i: usize| {
            let less = mags.iter().filter(|&&m| m < mags[i]).count() as f64;
            let equal = mags.iter().filter(|&&m| m == mags[i]).count() as f64;
            less + (equal + 1.0) / 2.0
        };
        let ranks: Vec<f64> = (0..n).map(rank).collect();
        let total: f64 = ranks.iter().sum();
        let stat = |plus: f64| plus.min(total - plus);
        let observed = stat((0..n).filter(|&i| diffs[i] > 0.0).map(|i| ranks[i]).sum());
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let plus: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if stat(plus) <= observed {
                hits += 1;
            }
        }
        (observed, hits as f64 / (1u64 << n) as f64)
    }

    #[test]
    fn one_two_three() {
        let w = signed_rank_of_differences(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((w.statistic, w.p_value, w.w_minus, w.w_plus), (0.0, 0.25, 0.0, 6.0));
        assert_eq!(w.method, WilcoxonMethod::Exact);
    }

    #[test]
    fn mixed_signs_match_oracle() {
        let d = [1.0, -2.0, 3.0, 4.0, -5.0, 6.0];
        let w = signed_rank_of_differences(&d).unwrap();
        assert_eq!((w.statistic, w.p_value), oracle(&d));
        assert_eq!(w.statistic, 7.0);
    }

    #[test]
    fn zeros_are_dropped_and_all_zero_is_degenerate() {
        let w = wilcoxon_signed_rank(&[(1.0, 1.0), (0.0, 1.0), (0.0, 2.0), (0.0, 3.0)]).unwrap();
        assert_eq!(w.n_effective, 3);
        assert_eq!(w.p_value, 0.25);
        assert!(matches!(wilcoxon_signed_rank(&[(2.0, 2.0), (1.0, 1.0)]), Err(Error::DegenerateTest(_))));
        assert!(wilcoxon_signed_rank(&[]).is_err());
    }

    #[test]
    fn differences_path_drops_zeros_too() {
        let w = signed_rank_of_differences(&[0.0, 1.0, 2.0, 1e-13, 3.0]).unwrap();
        assert_eq!((w.n_effective, w.statistic, w.p_value), (3, 0.0, 0.25));
        assert!(signed_rank_of_differences(&[f64::NAN]).is_err());
    }

    #[test]
    fn doubled_average_ranks() {
        assert_eq!(doubled_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![7, 2, 7, 4]);
    }

    #[test]
    fn balanced_statistic_has_unit_p() {
        let w = signed_rank_of_differences(&[1.0, -1.0]).unwrap();
        assert_eq!(w.p_value, 1.0);
    }

    #[test]
    fn large_samples_use_the_normal_approximation() {
        let d: Vec<f64> = (1..=30).map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 }).collect();
        let w = signed_rank_of_differences(&d).unwrap();
        assert_eq!(w.method, WilcoxonMethod::NormalApprox);
        // T = 3+6+...+30 = 165, mean 232.5, sd sqrt(2363.75)
        assert_eq!(w.statistic, 165.0);
        let z: f64 = (165.0 - 232.5 + 0.5) / 2363.75f64.sqrt();
        let expect = 2.0 * Normal::new(0.0, 1.0).unwrap().cdf(z);
        assert!((w.p_value - expect).abs() < 1e-15);
        assert!((0.15..0.19).contains(&w.p_value));
    }

    #[test]
    fn exact_agrees_with_normal_at_the_boundary() {
        let d: Vec<f64> = (1..=25).map(|i| if i % 4 == 0 { -(i as f64) } else { i as f64 }).collect();
        let exact = signed_rank_of_differences(&d).unwrap();
        let ranks: Vec<u64> = (1..=25).map(|i| 2 * i).collect();
        let approx = normal_p(&ranks, (2.0 * exact.statistic) as u64);
        assert!((exact.p_value - approx).abs() < 0.005, "{} vs {approx}", exact.p_value);
    }

    fn walk(participant: &str, med: MedicationState, truth: usize, predicted: usize) -> WalkPrediction {
        WalkPrediction {
            fold_id: 0,
            walk_id: format!("{participant}-{med}-{truth}{predicted}"),
            participant: ParticipantId::new(participant).unwrap(),
            medication: med,
            truth,
            predicted,
            probabilities: [0.0; 3],
            clips: 1,
        }
    }

    #[test]
    fn identical_states_are_degenerate() {
        let preds: Vec<_> = (0..4)
            .flat_map(|i| {
                let p = format!("p{i}");
                [walk(&p, MedicationState::On, 1, i % 3), walk(&p, MedicationState::Off, 2, i % 3)]
            })
            .collect();
        assert!(matches!(on_off_analysis(&preds, Aggregation::Mean), Err(Error::DegenerateTest(_))));
    }

    #[test]
    fn off_exceeding_on_is_significant() {
        let mut preds = Vec::new();
        for i in 0..12 {
            let p = format!("p{i:02}");
            let (on, off) = if i < 10 { (0, 2) } else { (1, 1) };
            preds.push(walk(&p, MedicationState::On, 0, on));
            preds.push(walk(&p, MedicationState::On, 0, on));
            preds.push(walk(&p, MedicationState::Off, 1, off));
        }
        let a = on_off_analysis(&preds, Aggregation::Mean).unwrap();
        assert_eq!(a.pairs.len(), 12);
        assert_eq!(a.predicted.n_effective, 10);
        let diffs: Vec<f64> = a.pairs.iter().map(|p| p.off_predicted - p.on_predicted).filter(|d| *d != 0.0).collect();
        let (t, p) = oracle(&diffs);
        assert_eq!((a.predicted.statistic, a.predicted.p_value), (t, p));
        assert!(p < 0.05);
        assert_eq!(a.ground_truth.as_ref().unwrap().n_effective, 12);
    }

    #[test]
    fn mean_and_mode_aggregation() {
        assert_eq!(aggregate(&[0, 1, 1, 2], Aggregation::Mean), 1.0);
        assert_eq!(aggregate(&[2, 2, 0, 0, 1], Aggregation::Mode), 0.0);
        let preds = [walk("a", MedicationState::On, 1, 1), walk("b", MedicationState::Off, 1, 1)];
        assert!(matches!(pair_on_off(&preds, Aggregation::Mean), Err(Error::Validation(_))));
    }

    proptest! {
        #[test]
        fn exact_path_matches_enumeration(d in prop::collection::vec((-6i32..=6).prop_filter("nonzero", |v| *v != 0), 1..=12)) {
            let diffs: Vec<f64> = d.into_iter().map(f64::from).collect();
            let w = signed_rank_of_differences(&diffs).unwrap();
            let (t, p) = oracle(&diffs);
            prop_assert_eq!(w.statistic, t);
            prop_assert_eq!(w.p_value, p);
            prop_assert!(w.statistic >= 0.0 && (0.0..=1.0).contains(&w.p_value));
        }
    }
}

//! Effectiveness and accuracy measures for a prioritized cycle.
//!
//! Each failing test counts as one fault. Metrics that are undefined for an
//! input (no faults, constant labels) return [`Measure::NotApplicable`]
//! rather than a NaN.

use std::fmt;

use thiserror::Error;

use crate::history::Verdict;

pub use crate::timing::{stopwatch_metrics, PhaseTimes};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("predictions and labels differ in length ({preds} vs {labels})")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("cycle claims {claimed} known faults but {detected} failing tests were executed")]
    FaultCountTooSmall { claimed: usize, detected: usize },
}

/// A metric value, or an explicit marker that the metric has no meaning for
/// the input.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Measure {
    Value(f64),
    #[default]
    NotApplicable,
}

impl Measure {
    pub fn value(self) -> Option<f64> {
        match self {
            Measure::Value(v) => Some(v),
            Measure::NotApplicable => None,
        }
    }

    pub fn is_applicable(self) -> bool {
        matches!(self, Measure::Value(_))
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Value(v) => write!(f, "{v:.4}"),
            Measure::NotApplicable => f.write_str("n/a"),
        }
    }
}

/// Mean of the applicable values, or `NotApplicable` when there are none.
pub fn mean_applicable(values: impl IntoIterator<Item = Measure>) -> Measure {
    let (sum, n) = values
        .into_iter()
        .filter_map(Measure::value)
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        Measure::NotApplicable
    } else {
        Measure::Value(sum / n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutedTest {
    pub verdict: Verdict,
    pub duration_s: f64,
}

/// Tests of one cycle in the order they were run.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    executed: Vec<ExecutedTest>,
    total_known_faults: usize,
}

impl CycleOutcome {
    /// `total_known_faults` counts every failing test of the cycle, including
    /// those left out of `executed` by a budget.
    pub fn new(executed: Vec<ExecutedTest>, total_known_faults: usize) -> Result<Self, MetricError> {
        let detected = executed.iter().filter(|t| t.verdict.is_failure()).count();
        if total_known_faults < detected {
            return Err(MetricError::FaultCountTooSmall {
                claimed: total_known_faults,
                detected,
            });
        }
        Ok(CycleOutcome {
            executed,
            total_known_faults,
        })
    }

    /// The whole cycle was executed, so every fault is detectable.
    pub fn full(executed: Vec<ExecutedTest>) -> Self {
        let m = executed.iter().filter(|t| t.verdict.is_failure()).count();
        CycleOutcome {
            executed,
            total_known_faults: m,
        }
    }

    pub fn executed(&self) -> &[ExecutedTest] {
        &self.executed
    }

    pub fn total_known_faults(&self) -> usize {
        self.total_known_faults
    }

    /// 1-based positions of the failing tests.
    pub fn fault_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.executed
            .iter()
            .enumerate()
            .filter(|(_, t)| t.verdict.is_failure())
            .map(|(i, _)| i + 1)
    }

    pub fn detected_faults(&self) -> usize {
        self.fault_positions().count()
    }
}

/// APFD over the executed order, with `m` the number of faults it reveals.
pub fn apfd(outcome: &CycleOutcome) -> Measure {
    let n = outcome.executed.len() as f64;
    let (sum, m) = outcome.fault_positions().fold((0usize, 0usize), |(s, m), p| (s + p, m + 1));
    if m == 0 {
        return Measure::NotApplicable;
    }
    let m = m as f64;
    Measure::Value(1.0 - sum as f64 / (n * m) + 1.0 / (2.0 * n))
}

/// APFD scaled by the detected fraction `p` of all known faults.
pub fn napfd(outcome: &CycleOutcome) -> Measure {
    if outcome.total_known_faults == 0 {
        return Measure::NotApplicable;
    }
    let (sum, detected) = outcome.fault_positions().fold((0usize, 0usize), |(s, m), p| (s + p, m + 1));
    if detected == 0 {
        return Measure::Value(0.0);
    }
    let n = outcome.executed.len() as f64;
    let total = outcome.total_known_faults as f64;
    let p = detected as f64 / total;
    Measure::Value(p - sum as f64 / (n * total) + p / (2.0 * n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeToFault {
    /// Cumulative duration up to and including the first failing test.
    pub first: Measure,
    pub last: Measure,
    /// Mean cumulative duration over all fault detections.
    pub average: Measure,
}

pub fn time_metrics(outcome: &CycleOutcome) -> TimeToFault {
    let mut elapsed = 0.0;
    let mut at_fault = Vec::new();
    for t in &outcome.executed {
        elapsed += t.duration_s;
        if t.verdict.is_failure() {
            at_fault.push(elapsed);
        }
    }
    match (at_fault.first(), at_fault.last()) {
        (Some(&first), Some(&last)) => TimeToFault {
            first: Measure::Value(first),
            last: Measure::Value(last),
            average: Measure::Value(at_fault.iter().sum::<f64>() / at_fault.len() as f64),
        },
        _ => TimeToFault {
            first: Measure::NotApplicable,
            last: Measure::NotApplicable,
            average: Measure::NotApplicable,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionAccuracy {
    pub mse: f64,
    pub r_squared: Measure,
    /// Population standard deviation of the residuals.
    pub residual_std: f64,
}

fn check_pair(preds: &[f64], labels: &[f64]) -> Result<(), MetricError> {
    if preds.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.len() < 2 {
        return Err(MetricError::TooFewSamples(preds.len()));
    }
    Ok(())
}

pub fn regression_accuracy(preds: &[f64], labels: &[f64]) -> Result<RegressionAccuracy, MetricError> {
    check_pair(preds, labels)?;
    let n = preds.len() as f64;
    let mean_label = labels.iter().sum::<f64>() / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut res_sum = 0.0;
    for (&p, &y) in preds.iter().zip(labels) {
        let r = y - p;
        ss_res += r * r;
        res_sum += r;
        ss_tot += (y - mean_label) * (y - mean_label);
    }
    let mse = ss_res / n;
    let res_mean = res_sum / n;
    let residual_std = (mse - res_mean * res_mean).max(0.0).sqrt();
    let r_squared = if ss_tot > 0.0 {
        Measure::Value(1.0 - ss_res / ss_tot)
    } else {
        Measure::NotApplicable
    };
    Ok(RegressionAccuracy {
        mse,
        r_squared,
        residual_std,
    })
}

/// 1-based ranks, ties sharing the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Measure {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        Measure::NotApplicable
    } else {
        Measure::Value(sab / (saa * sbb).sqrt())
    }
}

/// Spearman rank correlation (Pearson over average ranks).
pub fn spearman(preds: &[f64], labels: &[f64]) -> Result<Measure, MetricError> {
    check_pair(preds, labels)?;
    Ok(pearson(&average_ranks(preds), &average_ranks(labels)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcome(fails: &[bool]) -> CycleOutcome {
        CycleOutcome::full(
            fails
                .iter()
                .map(|&f| ExecutedTest {
                    verdict: if f { Verdict::Failed } else { Verdict::Passed },
                    duration_s: 1.0,
                })
                .collect(),
        )
    }

    fn timed(d: &[f64], fails: &[bool]) -> CycleOutcome {
        CycleOutcome::full(
            d.iter()
                .zip(fails)
                .map(|(&duration_s, &f)| ExecutedTest {
                    verdict: if f { Verdict::Failed } else { Verdict::Passed },
                    duration_s,
                })
                .collect(),
        )
    }

    fn close(m: Measure, v: f64) -> bool {
        m.value().is_some_and(|x| (x - v).abs() < 1e-12)
    }

    #[test]
    fn apfd_examples() {
        assert!(close(apfd(&outcome(&[false, true, false, true])), 0.375));
        assert!(close(apfd(&outcome(&[true])), 0.5));
        let mut front = vec![true; 3];
        front.extend(vec![false; 10_000]);
        assert!(apfd(&outcome(&front)).value().unwrap() > 0.999);
        assert_eq!(apfd(&outcome(&[false, false])), Measure::NotApplicable);
    }

    #[test]
    fn napfd_examples() {
        let full = outcome(&[false, true, true, false]);
        assert_eq!(napfd(&full), apfd(&full));

        let none = CycleOutcome::new(outcome(&[false, false]).executed, 2).unwrap();
        assert_eq!(napfd(&none), Measure::Value(0.0));

        let partial = CycleOutcome::new(outcome(&[true, true, false]).executed, 3).unwrap();
        assert!(close(napfd(&partial), 2.0 / 3.0 - 3.0 / 9.0 + (2.0 / 3.0) / 6.0));

        assert_eq!(napfd(&outcome(&[false])), Measure::NotApplicable);
        assert!(CycleOutcome::new(outcome(&[true, true]).executed, 1).is_err());
    }

    #[test]
    fn time_examples() {
        let t = time_metrics(&timed(&[2.0, 3.0, 4.0], &[false, true, false]));
        assert_eq!((t.first, t.last, t.average), (Measure::Value(5.0), Measure::Value(5.0), Measure::Value(5.0)));
        let t = time_metrics(&timed(&[7.5, 1.0], &[true, false]));
        assert_eq!(t.first, Measure::Value(7.5));
        let t = time_metrics(&timed(&[1.0, 1.0, 1.0], &[true, false, true]));
        assert_eq!((t.first, t.last, t.average), (Measure::Value(1.0), Measure::Value(3.0), Measure::Value(2.0)));
        let t = time_metrics(&timed(&[1.0], &[false]));
        assert_eq!(t.first, Measure::NotApplicable);
        assert_eq!(t.average, Measure::NotApplicable);
    }

    #[test]
    fn regression_examples() {
        let y = [0.1, 0.4, 0.9, 0.3];
        let perfect = regression_accuracy(&y, &y).unwrap();
        assert_eq!(perfect.mse, 0.0);
        assert_eq!(perfect.r_squared, Measure::Value(1.0));
        assert_eq!(perfect.residual_std, 0.0);

        let mean = y.iter().sum::<f64>() / 4.0;
        let flat = regression_accuracy(&[mean; 4], &y).unwrap();
        assert!(close(flat.r_squared, 0.0));

        let constant = regression_accuracy(&[0.1, 0.2], &[0.5, 0.5]).unwrap();
        assert_eq!(constant.r_squared, Measure::NotApplicable);

        assert_eq!(regression_accuracy(&[0.1], &[0.1]), Err(MetricError::TooFewSamples(1)));
        assert!(regression_accuracy(&[0.1, 0.2], &[0.1]).is_err());
    }

    #[test]
    fn ranks_and_spearman() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        let s = spearman(&[0.1, 0.5, 0.2, 0.9], &[1.0, 3.0, 2.0, 10.0]).unwrap();
        assert!(close(s, 1.0));
        let s = spearman(&[4.0, 3.0, 2.0, 1.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(close(s, -1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), Measure::NotApplicable);
    }

    #[test]
    fn mean_skips_not_applicable() {
        let m = mean_applicable([Measure::Value(1.0), Measure::NotApplicable, Measure::Value(0.5)]);
        assert_eq!(m, Measure::Value(0.75));
        assert_eq!(mean_applicable([Measure::NotApplicable]), Measure::NotApplicable);
    }

    /// Area under the detected-fraction curve, scanned position by position.
    fn scan_reference(fails: &[bool], total: usize) -> Option<f64> {
        if total == 0 {
            return None;
        }
        let n = fails.len() as f64;
        let mut found = 0usize;
        let mut area = 0.0;
        for &f in fails {
            found += usize::from(f);
            area += found as f64 / total as f64;
        }
        let p = found as f64 / total as f64;
        Some(area / n - p / (2.0 * n))
    }

    fn permutations(items: &[bool]) -> Vec<Vec<bool>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut tail in permutations(&rest) {
                tail.insert(0, head);
                out.push(tail);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn apfd_napfd_match_scan_on_all_orderings(n in 1usize..=6, m in 1usize..=3, hidden in 0usize..=2) {
            let m = m.min(n);
            let suite: Vec<bool> = (0..n).map(|i| i < m).collect();
            for order in permutations(&suite) {
                let o = outcome(&order);
                let a = apfd(&o).value().unwrap();
                prop_assert!((a - scan_reference(&order, m).unwrap()).abs() <= 1e-12);
                prop_assert!(a > 0.0 && a <= 1.0);
                let partial = CycleOutcome::new(o.executed.clone(), m + hidden).unwrap();
                let b = napfd(&partial).value().unwrap();
                prop_assert!((b - scan_reference(&order, m + hidden).unwrap()).abs() <= 1e-12);
                prop_assert!((0.0..=1.0).contains(&b));
            }
        }

        #[test]
        fn moving_fault_earlier_never_lowers_apfd(fails in proptest::collection::vec(any::<bool>(), 2..30), at in any::<prop::sample::Index>()) {
            prop_assume!(fails.iter().any(|&f| f));
            let i = at.index(fails.len() - 1);
            if fails[i + 1] && !fails[i] {
                let mut swapped = fails.clone();
                swapped.swap(i, i + 1);
                prop_assert!(apfd(&outcome(&swapped)).value().unwrap() >= apfd(&outcome(&fails)).value().unwrap());
            }
        }

        #[test]
        fn regression_matches_two_pass(v in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..50)) {
            let (p, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let acc = regression_accuracy(&p, &y).unwrap();
            let n = p.len() as f64;
            let res: Vec<f64> = y.iter().zip(&p).map(|(a, b)| a - b).collect();
            let mse = res.iter().map(|r| r * r).sum::<f64>() / n;
            let rm = res.iter().sum::<f64>() / n;
            let sd = (res.iter().map(|r| (r - rm).powi(2)).sum::<f64>() / n).sqrt();
            let ym = y.iter().sum::<f64>() / n;
            let r2 = 1.0 - res.iter().map(|r| r * r).sum::<f64>() / y.iter().map(|v| (v - ym).powi(2)).sum::<f64>();
            prop_assert!((acc.mse - mse).abs() < 1e-12);
            prop_assert!((acc.residual_std - sd).abs() < 1e-9);
            prop_assert!((acc.r_squared.value().unwrap() - r2).abs() < 1e-9);
        }
    }
}

//! Model inputs derived from a status window.
//!
//! Each test becomes `window_len + 4` numbers: its status codes (oldest
//! first) followed by normalized mean duration, normalized last-run time,
//! `distance` and `change_in_status`. With the standard ten-cycle window that
//! is 14 inputs.

use std::io::{Read, Write};

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::history::{StatusMatrix, StatusRow, TestId, FAIL, NOT_RUN, PASS};

/// Window length the standard feature layout expects.
pub const WINDOW_LEN: usize = 10;
/// Number of derived features appended after the status window.
pub const DERIVED_FEATURES: usize = 4;
/// Flattened input length for the standard layout.
pub const FEATURE_COUNT: usize = WINDOW_LEN + DERIVED_FEATURES;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("timestamp {ts} outside suite range [{earliest}, {latest}]")]
    OutOfRange {
        ts: NaiveDateTime,
        earliest: NaiveDateTime,
        latest: NaiveDateTime,
    },
    #[error("feature extraction expects window length {expected}, matrix has {actual}")]
    WindowLenMismatch { expected: usize, actual: usize },
    #[error("feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub test_id: TestId,
    /// Status codes, oldest first.
    pub es_window: Vec<i8>,
    pub duration_norm: f64,
    pub last_run_norm: f64,
    pub distance: u8,
    pub change_in_status: u32,
    pub label_priority: Option<f64>,
    /// Generated by augmentation rather than observed.
    pub synthetic: bool,
}

impl FeatureVector {
    pub fn input_len(&self) -> usize {
        self.es_window.len() + DERIVED_FEATURES
    }

    /// Flattened network input.
    pub fn to_inputs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.input_len());
        out.extend(self.es_window.iter().map(|&s| f64::from(s)));
        out.push(self.duration_norm);
        out.push(self.last_run_norm);
        out.push(f64::from(self.distance));
        out.push(f64::from(self.change_in_status));
        out
    }

    /// Most recent status other than not-run, if any.
    pub fn last_executed_status(&self) -> Option<i8> {
        self.es_window.iter().rev().copied().find(|&s| s != NOT_RUN)
    }
}

/// Min-max scaling into `[0, 1]`; a degenerate range maps to 0.5.
pub fn normalize_duration(mean_duration_s: f64, suite_min: f64, suite_max: f64) -> f64 {
    if suite_max <= suite_min {
        return 0.5;
    }
    ((mean_duration_s - suite_min) / (suite_max - suite_min)).clamp(0.0, 1.0)
}

/// Position of `ts` within `[earliest, latest]`, measured in (fractional) days.
pub fn encode_last_run(ts: NaiveDateTime, suite_earliest: NaiveDateTime, suite_latest: NaiveDateTime) -> Result<f64, FeatureError> {
    if ts < suite_earliest || ts > suite_latest {
        return Err(FeatureError::OutOfRange {
            ts,
            earliest: suite_earliest,
            latest: suite_latest,
        });
    }
    if suite_latest == suite_earliest {
        return Ok(0.5);
    }
    Ok(days_between(suite_earliest, ts) / days_between(suite_earliest, suite_latest))
}

fn days_between(from: NaiveDateTime, to: NaiveDateTime) -> f64 {
    (to - from).num_seconds() as f64 / 86_400.0
}

/// `|last - first|` over the raw status codes.
///
/// # Panics
///
/// Panics on an empty window.
pub fn distance(window: &[i8]) -> u8 {
    let first = *window.first().expect("distance of an empty window");
    let last = *window.last().expect("distance of an empty window");
    (i16::from(last) - i16::from(first)).unsigned_abs() as u8
}

/// Pass-to-fail transitions between consecutive executions; not-run entries
/// are skipped rather than breaking the chain.
pub fn change_in_status(window: &[i8]) -> u32 {
    let mut prev = None;
    let mut flips = 0;
    for &s in window.iter().filter(|&&s| s != NOT_RUN) {
        if prev == Some(PASS) && s == FAIL {
            flips += 1;
        }
        prev = Some(s);
    }
    flips
}

/// Where normalizer bounds come from when featurizing a suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizerMode {
    /// Each suite is scaled over its own tests.
    #[default]
    Suite,
    /// Bounds fitted on the training data are reused, with clamping.
    Frozen,
}

impl std::fmt::Display for NormalizerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormalizerMode::Suite => "suite",
            NormalizerMode::Frozen => "frozen",
        })
    }
}

impl std::str::FromStr for NormalizerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "suite" => Ok(NormalizerMode::Suite),
            "frozen" => Ok(NormalizerMode::Frozen),
            other => Err(format!("unknown normalizer mode `{other}`")),
        }
    }
}

/// Bounds used to scale duration and last-run into `[0, 1]`.
///
/// Values outside the bounds (e.g. a suite prioritized with bounds fitted on
/// older training data) are clamped. A test that has never run encodes its
/// last run as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub duration_min: f64,
    pub duration_max: f64,
    pub earliest: Option<NaiveDateTime>,
    pub latest: Option<NaiveDateTime>,
}

impl Normalizer {
    /// Fits bounds over the executed tests of a matrix.
    pub fn fit(matrix: &StatusMatrix) -> Self {
        Self::fit_rows(matrix.rows().iter())
    }

    pub fn fit_rows<'a>(rows: impl Iterator<Item = &'a StatusRow>) -> Self {
        let mut n = Normalizer {
            duration_min: f64::INFINITY,
            duration_max: f64::NEG_INFINITY,
            earliest: None,
            latest: None,
        };
        for row in rows {
            n.include(row);
        }
        if n.duration_min > n.duration_max {
            n.duration_min = 0.0;
            n.duration_max = 0.0;
        }
        n
    }

    fn include(&mut self, row: &StatusRow) {
        let Some(ts) = row.last_run else { return };
        self.duration_min = self.duration_min.min(row.mean_duration_s);
        self.duration_max = self.duration_max.max(row.mean_duration_s);
        self.earliest = Some(self.earliest.map_or(ts, |e| e.min(ts)));
        self.latest = Some(self.latest.map_or(ts, |l| l.max(ts)));
    }

    /// Widens these bounds to also cover `other`.
    pub fn merge(&self, other: &Normalizer) -> Normalizer {
        let pick = |a: Option<NaiveDateTime>, b: Option<NaiveDateTime>, f: fn(NaiveDateTime, NaiveDateTime) -> NaiveDateTime| match (a, b) {
            (Some(a), Some(b)) => Some(f(a, b)),
            (a, b) => a.or(b),
        };
        let (dmin, dmax) = match (self.earliest, other.earliest) {
            (None, _) => (other.duration_min, other.duration_max),
            (_, None) => (self.duration_min, self.duration_max),
            _ => (self.duration_min.min(other.duration_min), self.duration_max.max(other.duration_max)),
        };
        Normalizer {
            duration_min: dmin,
            duration_max: dmax,
            earliest: pick(self.earliest, other.earliest, std::cmp::min),
            latest: pick(self.latest, other.latest, std::cmp::max),
        }
    }

    pub fn duration(&self, mean_duration_s: f64) -> f64 {
        normalize_duration(mean_duration_s, self.duration_min, self.duration_max)
    }

    pub fn last_run(&self, ts: Option<NaiveDateTime>) -> f64 {
        match (ts, self.earliest, self.latest) {
            (Some(ts), Some(e), Some(l)) => {
                encode_last_run(ts.clamp(e, l), e, l).expect("clamped into range")
            }
            _ => 0.0,
        }
    }
}

fn vector_for(row: &StatusRow, norm: &Normalizer) -> FeatureVector {
    FeatureVector {
        test_id: row.test_id,
        es_window: row.statuses.clone(),
        duration_norm: norm.duration(row.mean_duration_s),
        last_run_norm: norm.last_run(row.last_run),
        distance: distance(&row.statuses),
        change_in_status: change_in_status(&row.statuses),
        label_priority: None,
        synthetic: false,
    }
}

/// Standard 14-input extraction, normalized over the matrix itself.
pub fn extract(matrix: &StatusMatrix) -> Result<Vec<FeatureVector>, FeatureError> {
    if matrix.window_len() != WINDOW_LEN {
        return Err(FeatureError::WindowLenMismatch {
            expected: WINDOW_LEN,
            actual: matrix.window_len(),
        });
    }
    Ok(extract_with(matrix, &Normalizer::fit(matrix)))
}

/// Extraction for any window length with explicit normalizer bounds.
pub fn extract_with(matrix: &StatusMatrix, norm: &Normalizer) -> Vec<FeatureVector> {
    matrix.rows().iter().map(|row| vector_for(row, norm)).collect()
}

/// Writes vectors as CSV: `test_id, es_1..es_w, duration, last_run, distance,
/// change_in_status, label, synthetic`.
pub fn write_features_csv<W: Write>(vectors: &[FeatureVector], writer: W) -> Result<(), FeatureError> {
    let window = vectors.first().map_or(WINDOW_LEN, |v| v.es_window.len());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["test_id".to_string()];
    header.extend((1..=window).map(|i| format!("es_{i}")));
    header.extend(["duration", "last_run", "distance", "change_in_status", "label", "synthetic"].map(String::from));
    wtr.write_record(&header)?;
    for v in vectors {
        if v.es_window.len() != window {
            return Err(FeatureError::WindowLenMismatch {
                expected: window,
                actual: v.es_window.len(),
            });
        }
        let mut row = vec![v.test_id.to_string()];
        row.extend(v.es_window.iter().map(|s| s.to_string()));
        row.push(v.duration_norm.to_string());
        row.push(v.last_run_norm.to_string());
        row.push(v.distance.to_string());
        row.push(v.change_in_status.to_string());
        row.push(v.label_priority.map(|l| l.to_string()).unwrap_or_default());
        row.push(u8::from(v.synthetic).to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_features_csv<R: Read>(reader: R) -> Result<Vec<FeatureVector>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let window = headers.iter().filter(|h| h.starts_with("es_")).count();
    let expected = 1 + window + DERIVED_FEATURES + 2;
    if window == 0 || headers.len() != expected {
        return Err(FeatureError::Format(format!(
            "expected {expected} columns with es_* window, found {}",
            headers.len()
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| FeatureError::Format(format!("row {}: bad {what}", i + 1));
        let num = |idx: usize, what: &str| -> Result<f64, FeatureError> { rec[idx].trim().parse().map_err(|_| bad(what)) };
        let test_id = TestId(rec[0].trim().parse().map_err(|_| bad("test_id"))?);
        let es_window = (1..=window)
            .map(|k| match rec[k].trim().parse::<i8>() {
                Ok(s @ -1..=1) => Ok(s),
                _ => Err(bad("status")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let base = 1 + window;
        let label = rec[base + 4].trim();
        out.push(FeatureVector {
            test_id,
            es_window,
            duration_norm: num(base, "duration")?,
            last_run_norm: num(base + 1, "last_run")?,
            distance: rec[base + 2].trim().parse().map_err(|_| bad("distance"))?,
            change_in_status: rec[base + 3].trim().parse().map_err(|_| bad("change_in_status"))?,
            label_priority: if label.is_empty() { None } else { Some(num(base + 4, "label")?) },
            synthetic: rec[base + 5].trim() == "1",
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{build_status_matrix, CycleLog, ExecutionRecord, Verdict};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn day(d: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2020, 3, d).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    #[test]
    fn duration_scaling() {
        assert_eq!(normalize_duration(5.0, 0.0, 10.0), 0.5);
        assert_eq!(normalize_duration(10.0, 0.0, 10.0), 1.0);
        assert_eq!(normalize_duration(7.0, 7.0, 7.0), 0.5);
    }

    #[test]
    fn last_run_encoding() {
        assert_eq!(encode_last_run(day(1), day(1), day(11)).unwrap(), 0.0);
        assert_eq!(encode_last_run(day(11), day(1), day(11)).unwrap(), 1.0);
        assert_eq!(encode_last_run(day(6), day(1), day(11)).unwrap(), 0.5);
        assert_eq!(encode_last_run(day(4), day(4), day(4)).unwrap(), 0.5);
        assert!(matches!(encode_last_run(day(12), day(1), day(11)), Err(FeatureError::OutOfRange { .. })));
        // Time of day contributes fractional days.
        let noon = day(1) + chrono::Duration::hours(12);
        assert_eq!(encode_last_run(noon, day(1), day(2)).unwrap(), 0.5);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&[-1, 0, 0, 1]), 2);
        assert_eq!(distance(&[0, 0, 0, 0]), 0);
        assert_eq!(distance(&[1, 0]), 1);
    }

    #[test]
    fn change_in_status_examples() {
        assert_eq!(change_in_status(&[0, 1, 0, 1]), 2);
        assert_eq!(change_in_status(&[1, 1, 1]), 0);
        assert_eq!(change_in_status(&[0, -1, 1]), 1);
        assert_eq!(change_in_status(&[-1, -1]), 0);
    }

    fn log(entries: &[(u64, u32, bool, f64)]) -> Vec<CycleLog> {
        let mut cycles: Vec<CycleLog> = Vec::new();
        for &(id, cycle, failed, dur) in entries {
            let rec = ExecutionRecord {
                test_id: TestId(id),
                test_name: format!("T{id}"),
                duration_s: dur,
                last_run: day(cycle),
                verdict: if failed { Verdict::Failed } else { Verdict::Passed },
                cycle_id: cycle,
                calc_prio: None,
            };
            match cycles.iter_mut().find(|c| c.cycle_id == cycle) {
                Some(c) => c.records.push(rec),
                None => cycles.push(CycleLog { cycle_id: cycle, records: vec![rec] }),
            }
        }
        cycles.sort_by_key(|c| c.cycle_id);
        cycles
    }

    #[test]
    fn all_pass_single_test() {
        let entries: Vec<_> = (1..=10).map(|c| (1, c, false, 3.0)).collect();
        let m = build_status_matrix(&log(&entries), 10, 10).unwrap();
        let v = extract(&m).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].es_window, vec![0; 10]);
        assert_eq!(v[0].distance, 0);
        assert_eq!(v[0].change_in_status, 0);
        assert_eq!(v[0].to_inputs().len(), FEATURE_COUNT);
        // A single test is a degenerate suite.
        assert_eq!(v[0].duration_norm, 0.5);
    }

    #[test]
    fn preserves_order_and_last_cycle_failure() {
        let mut entries: Vec<_> = (1..=10).map(|c| (5, c, c == 10, 2.0)).collect();
        entries.push((3, 4, false, 8.0));
        let m = build_status_matrix(&log(&entries), 10, 10).unwrap();
        let v = extract(&m).unwrap();
        assert_eq!(v.iter().map(|f| f.test_id).collect::<Vec<_>>(), vec![TestId(5), TestId(3)]);
        assert_eq!(*v[0].es_window.last().unwrap(), 1);
        assert_eq!(v[0].distance, 1);
        assert_eq!(v[0].change_in_status, 1);
        assert_eq!(v[0].duration_norm, 0.0);
        assert_eq!(v[1].duration_norm, 1.0);
        assert_eq!(v[1].last_run_norm, 0.0);
        assert_eq!(v[0].last_run_norm, 1.0);
        // test 3: [-1,-1,-1,0,-1,...,-1]
        assert_eq!(v[1].distance, 0);
    }

    #[test]
    fn rejects_other_windows() {
        let m = build_status_matrix(&log(&[(1, 1, false, 1.0)]), 4, 1).unwrap();
        assert!(matches!(extract(&m), Err(FeatureError::WindowLenMismatch { expected: 10, actual: 4 })));
        let v = extract_with(&m, &Normalizer::fit(&m));
        assert_eq!(v[0].to_inputs().len(), 8);
    }

    #[test]
    fn frozen_bounds_clamp() {
        let n = Normalizer {
            duration_min: 1.0,
            duration_max: 3.0,
            earliest: Some(day(1)),
            latest: Some(day(3)),
        };
        assert_eq!(n.duration(10.0), 1.0);
        assert_eq!(n.last_run(Some(day(20))), 1.0);
        assert_eq!(n.last_run(None), 0.0);
    }

    #[test]
    fn feature_csv_round_trip() {
        let entries: Vec<_> = (1..=12).flat_map(|c| [(1, c, c % 3 == 0, 2.5), (2, c, false, 0.25)]).collect();
        let m = build_status_matrix(&log(&entries), 10, 12).unwrap();
        let mut v = extract(&m).unwrap();
        v[0].label_priority = Some(0.125);
        v[1].synthetic = true;
        let mut buf = Vec::new();
        write_features_csv(&v, &mut buf).unwrap();
        assert_eq!(read_features_csv(buf.as_slice()).unwrap(), v);
    }

    fn arb_window() -> impl Strategy<Value = Vec<i8>> {
        proptest::collection::vec(-1i8..=1, 1..16)
    }

    proptest! {
        #[test]
        fn padding_invariance(window in arb_window(), pad in 0usize..6) {
            let mut padded = vec![NOT_RUN; pad];
            padded.extend(&window);
            prop_assert_eq!(change_in_status(&padded), change_in_status(&window));
            // distance compares the raw first slot, so padding only commutes
            // when the window already starts with a not-run entry
            if window[0] == NOT_RUN {
                prop_assert_eq!(distance(&padded), distance(&window));
            }
        }

        #[test]
        fn normalized_features_in_unit_range(rows in proptest::collection::vec((proptest::collection::vec(-1i8..=1, 10), 0.0f64..500.0, 1u32..28), 1..30)) {
            let mut entries = Vec::new();
            for (i, (statuses, dur, d)) in rows.iter().enumerate() {
                for (c, s) in statuses.iter().enumerate() {
                    if *s != NOT_RUN {
                        entries.push((i as u64, (c as u32) + 1 + (*d % 3), *s == FAIL, *dur));
                    }
                }
            }
            prop_assume!(!entries.is_empty());
            let cycles = log(&entries);
            let as_of = cycles.last().unwrap().cycle_id;
            let m = build_status_matrix(&cycles, 10, as_of).unwrap();
            let a = extract(&m).unwrap();
            let b = extract(&m).unwrap();
            prop_assert_eq!(&a, &b);
            for v in &a {
                prop_assert_eq!(v.to_inputs().len(), FEATURE_COUNT);
                prop_assert!((0.0..=1.0).contains(&v.duration_norm));
                prop_assert!((0.0..=1.0).contains(&v.last_run_norm));
                prop_assert_eq!(v.distance, distance(&v.es_window));
            }
        }
    }
}

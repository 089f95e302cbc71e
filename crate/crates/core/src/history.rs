//! CI execution logs: ingestion, cycle grouping and per-test status windows.
//!
//! A log is a flat table of executions. Each row says that one test ran in one
//! CI cycle, how long it took, when it ran and whether it passed. Rows are
//! grouped into [`CycleLog`]s and then folded into a [`StatusMatrix`], a
//! fixed-length window of three-valued statuses per test:
//!
//! | code | meaning                       |
//! |------|-------------------------------|
//! | `1`  | failed in that cycle          |
//! | `0`  | passed in that cycle          |
//! | `-1` | has no row in that cycle      |

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use thiserror::Error;

/// Status code for a failed execution.
pub const FAIL: i8 = 1;
/// Status code for a passed execution.
pub const PASS: i8 = 0;
/// Status code for a cycle in which the test has no execution row.
pub const NOT_RUN: i8 = -1;

/// Default number of cycles in a status window.
pub const DEFAULT_WINDOW_LEN: usize = 10;

/// Opaque test identifier, taken from the `Id` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TestId(pub u64);

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Passed,
    Failed,
}

impl Verdict {
    pub fn is_failure(self) -> bool {
        self == Verdict::Failed
    }

    /// The status code this verdict contributes to a window.
    pub fn status(self) -> i8 {
        match self {
            Verdict::Passed => PASS,
            Verdict::Failed => FAIL,
        }
    }
}

/// One test execution.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionRecord {
    pub test_id: TestId,
    pub test_name: String,
    pub duration_s: f64,
    pub last_run: NaiveDateTime,
    pub verdict: Verdict,
    pub cycle_id: u32,
    /// Externally supplied priority (`CalcPrio`), when the dataset carries one.
    pub calc_prio: Option<f64>,
}

/// All executions of one CI cycle, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleLog {
    pub cycle_id: u32,
    pub records: Vec<ExecutionRecord>,
}

impl CycleLog {
    pub fn failure_count(&self) -> usize {
        self.records.iter().filter(|r| r.verdict.is_failure()).count()
    }

    pub fn total_duration_s(&self) -> f64 {
        self.records.iter().map(|r| r.duration_s).sum()
    }
}

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: verdict `{value}` is not 0 or 1")]
    BadVerdict { row: usize, value: String },
    #[error("test {test_id} executed more than once in cycle {cycle_id}")]
    DuplicateExecution { test_id: TestId, cycle_id: u32 },
    #[error("row {row}: negative duration {value}")]
    NegativeDuration { row: usize, value: f64 },
    #[error("row {row}: cannot parse {column} value `{value}`")]
    BadField {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("row {row}: cycle id must be at least 1")]
    BadCycle { row: usize },
    #[error("no cycles at or before cycle {as_of}")]
    EmptyHistory { as_of: u32 },
    #[error("window length must be at least 1")]
    ZeroWindow,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Maps logical fields onto CSV header names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub id: String,
    pub name: String,
    pub duration: String,
    pub last_run: String,
    pub verdict: String,
    pub cycle: String,
    /// Optional priority column; absent columns are not an error.
    pub calc_prio: String,
    pub delimiter: u8,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            id: "Id".into(),
            name: "Name".into(),
            duration: "Duration".into(),
            last_run: "LastRun".into(),
            verdict: "Verdict".into(),
            cycle: "Cycle".into(),
            calc_prio: "CalcPrio".into(),
            delimiter: b',',
        }
    }
}

const DATE_FORMAT: &str = "%Y-%m-%d";
const DATETIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Parses `YYYY-MM-DD` or `YYYY-MM-DD HH:MM:SS`.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, DATETIME_FORMAT)
        .ok()
        .or_else(|| {
            NaiveDate::parse_from_str(s, DATE_FORMAT)
                .ok()
                .map(|d| d.and_time(NaiveTime::MIN))
        })
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    if ts.time() == NaiveTime::MIN {
        ts.format(DATE_FORMAT).to_string()
    } else {
        ts.format(DATETIME_FORMAT).to_string()
    }
}

/// Reads a log file and groups it into cycles sorted by id.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &ColumnMapping) -> Result<Vec<CycleLog>, HistoryError> {
    read_csv(File::open(path)?, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &ColumnMapping) -> Result<Vec<CycleLog>, HistoryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize, HistoryError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HistoryError::MissingColumn(name.to_string()))
    };
    let id_col = find(&schema.id)?;
    let name_col = find(&schema.name)?;
    let dur_col = find(&schema.duration)?;
    let last_col = find(&schema.last_run)?;
    let verdict_col = find(&schema.verdict)?;
    let cycle_col = find(&schema.cycle)?;
    let prio_col = headers.iter().position(|h| h == schema.calc_prio);

    let mut by_cycle: BTreeMap<u32, Vec<ExecutionRecord>> = BTreeMap::new();
    let mut seen: HashMap<(TestId, u32), ()> = HashMap::new();
    for (idx, row) in rdr.records().enumerate() {
        let row_no = idx + 1;
        let row = row?;
        let field = |col: usize| row.get(col).unwrap_or("");
        let bad = |column: &'static str, value: &str| HistoryError::BadField {
            row: row_no,
            column,
            value: value.to_string(),
        };

        let test_id = TestId(field(id_col).parse().map_err(|_| bad("Id", field(id_col)))?);
        let duration_s: f64 = field(dur_col)
            .parse()
            .map_err(|_| bad("Duration", field(dur_col)))?;
        if !duration_s.is_finite() {
            return Err(bad("Duration", field(dur_col)));
        }
        if duration_s < 0.0 {
            return Err(HistoryError::NegativeDuration {
                row: row_no,
                value: duration_s,
            });
        }
        let last_run = parse_timestamp(field(last_col)).ok_or_else(|| bad("LastRun", field(last_col)))?;
        let verdict = match field(verdict_col) {
            "0" => Verdict::Passed,
            "1" => Verdict::Failed,
            other => {
                return Err(HistoryError::BadVerdict {
                    row: row_no,
                    value: other.to_string(),
                })
            }
        };
        let cycle_id: u32 = field(cycle_col)
            .parse()
            .map_err(|_| bad("Cycle", field(cycle_col)))?;
        if cycle_id == 0 {
            return Err(HistoryError::BadCycle { row: row_no });
        }
        let calc_prio = match prio_col.map(field) {
            None | Some("") => None,
            Some(v) => Some(v.parse().map_err(|_| bad("CalcPrio", v))?),
        };
        if seen.insert((test_id, cycle_id), ()).is_some() {
            return Err(HistoryError::DuplicateExecution { test_id, cycle_id });
        }
        by_cycle.entry(cycle_id).or_default().push(ExecutionRecord {
            test_id,
            test_name: field(name_col).to_string(),
            duration_s,
            last_run,
            verdict,
            cycle_id,
            calc_prio,
        });
    }
    Ok(by_cycle
        .into_iter()
        .map(|(cycle_id, records)| CycleLog { cycle_id, records })
        .collect())
}

/// Writes cycles back out with the default column names.
///
/// A `CalcPrio` column is emitted only when at least one record carries a
/// priority.
pub fn write_csv<W: Write>(cycles: &[CycleLog], writer: W) -> Result<(), HistoryError> {
    let with_prio = cycles
        .iter()
        .flat_map(|c| &c.records)
        .any(|r| r.calc_prio.is_some());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["Id", "Name", "Duration", "LastRun", "Verdict", "Cycle"];
    if with_prio {
        header.push("CalcPrio");
    }
    wtr.write_record(&header)?;
    for rec in cycles.iter().flat_map(|c| &c.records) {
        let mut row = vec![
            rec.test_id.to_string(),
            rec.test_name.clone(),
            rec.duration_s.to_string(),
            format_timestamp(&rec.last_run),
            match rec.verdict {
                Verdict::Passed => "0".into(),
                Verdict::Failed => "1".into(),
            },
            rec.cycle_id.to_string(),
        ];
        if with_prio {
            row.push(rec.calc_prio.map(|p| p.to_string()).unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One test's row in a [`StatusMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct StatusRow {
    pub test_id: TestId,
    /// `window_len` codes, oldest first.
    pub statuses: Vec<i8>,
    /// Mean duration over executed cycles up to the reference cycle; 0 if none.
    pub mean_duration_s: f64,
    pub last_run: Option<NaiveDateTime>,
}

impl StatusRow {
    pub fn has_executed(&self) -> bool {
        self.last_run.is_some()
    }
}

/// Windowed execution statuses for a set of tests, as of one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct StatusMatrix {
    window_len: usize,
    as_of_cycle: u32,
    rows: Vec<StatusRow>,
}

impl StatusMatrix {
    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn as_of_cycle(&self) -> u32 {
        self.as_of_cycle
    }

    pub fn rows(&self) -> &[StatusRow] {
        &self.rows
    }

    pub fn test_ids(&self) -> impl Iterator<Item = TestId> + '_ {
        self.rows.iter().map(|r| r.test_id)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, id: TestId) -> Option<&StatusRow> {
        self.rows.iter().find(|r| r.test_id == id)
    }
}

#[derive(Debug, Clone)]
struct Execution {
    cycle_id: u32,
    status: i8,
    last_run: NaiveDateTime,
}

#[derive(Debug, Clone, Default)]
struct TestHistory {
    executions: Vec<Execution>,
    /// `duration_prefix[k]` is the sum of the first `k` durations.
    duration_prefix: Vec<f64>,
}

impl TestHistory {
    /// Number of executions with `cycle_id <= as_of`.
    fn count_until(&self, as_of: u32) -> usize {
        self.executions.partition_point(|e| e.cycle_id <= as_of)
    }
}

/// Per-test execution index over a whole log.
///
/// Building a window for one test costs a binary search plus `window_len`
/// steps, so replaying every cycle of a log stays linear in its size.
#[derive(Debug, Clone)]
pub struct HistoryIndex {
    tests: HashMap<TestId, TestHistory>,
    /// Tests in order of first appearance, with the cycle they first ran in.
    first_seen: Vec<(TestId, u32)>,
    cycle_ids: Vec<u32>,
}

impl HistoryIndex {
    pub fn new(cycles: &[CycleLog]) -> Self {
        let mut sorted: Vec<&CycleLog> = cycles.iter().collect();
        sorted.sort_by_key(|c| c.cycle_id);
        let mut tests: HashMap<TestId, TestHistory> = HashMap::new();
        let mut first_seen = Vec::new();
        for cycle in &sorted {
            for rec in &cycle.records {
                let hist = tests.entry(rec.test_id).or_insert_with(|| {
                    first_seen.push((rec.test_id, cycle.cycle_id));
                    TestHistory {
                        executions: Vec::new(),
                        duration_prefix: vec![0.0],
                    }
                });
                hist.executions.push(Execution {
                    cycle_id: cycle.cycle_id,
                    status: rec.verdict.status(),
                    last_run: rec.last_run,
                });
                let total = hist.duration_prefix.last().copied().unwrap_or(0.0) + rec.duration_s;
                hist.duration_prefix.push(total);
            }
        }
        Self {
            tests,
            first_seen,
            cycle_ids: sorted.iter().map(|c| c.cycle_id).collect(),
        }
    }

    pub fn cycle_ids(&self) -> &[u32] {
        &self.cycle_ids
    }

    /// Matrix over every test seen up to `as_of`, in first-seen order.
    pub fn matrix(&self, as_of: u32, window_len: usize) -> Result<StatusMatrix, HistoryError> {
        if window_len == 0 {
            return Err(HistoryError::ZeroWindow);
        }
        if self.cycle_ids.first().map_or(true, |&first| first > as_of) {
            return Err(HistoryError::EmptyHistory { as_of });
        }
        let ids: Vec<TestId> = self
            .first_seen
            .iter()
            .take_while(|(_, c)| *c <= as_of)
            .map(|(id, _)| *id)
            .collect();
        self.matrix_for(&ids, as_of, window_len)
    }

    /// Matrix over an explicit list of tests, which may include tests with no
    /// history at all (all `-1`, mean duration 0).
    pub fn matrix_for(&self, tests: &[TestId], as_of: u32, window_len: usize) -> Result<StatusMatrix, HistoryError> {
        if window_len == 0 {
            return Err(HistoryError::ZeroWindow);
        }
        let rows = tests
            .iter()
            .map(|&id| self.row(id, as_of, window_len))
            .collect();
        Ok(StatusMatrix {
            window_len,
            as_of_cycle: as_of,
            rows,
        })
    }

    fn row(&self, test_id: TestId, as_of: u32, window_len: usize) -> StatusRow {
        let mut statuses = vec![NOT_RUN; window_len];
        let Some(hist) = self.tests.get(&test_id) else {
            return StatusRow {
                test_id,
                statuses,
                mean_duration_s: 0.0,
                last_run: None,
            };
        };
        let count = hist.count_until(as_of);
        // Slot k covers cycle `as_of - window_len + 1 + k`.
        let oldest = i64::from(as_of) - window_len as i64 + 1;
        for exec in hist.executions[..count].iter().rev() {
            let slot = i64::from(exec.cycle_id) - oldest;
            if slot < 0 {
                break;
            }
            statuses[slot as usize] = exec.status;
        }
        let mean_duration_s = if count == 0 {
            0.0
        } else {
            hist.duration_prefix[count] / count as f64
        };
        StatusRow {
            test_id,
            statuses,
            mean_duration_s,
            last_run: count.checked_sub(1).map(|i| hist.executions[i].last_run),
        }
    }
}

/// Builds the status matrix for every test seen up to `as_of_cycle`.
pub fn build_status_matrix(cycles: &[CycleLog], window_len: usize, as_of_cycle: u32) -> Result<StatusMatrix, HistoryError> {
    HistoryIndex::new(cycles).matrix(as_of_cycle, window_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "Id,Name,Duration,LastRun,Verdict,Cycle\n";

    fn parse(body: &str) -> Result<Vec<CycleLog>, HistoryError> {
        read_csv(format!("{HEADER}{body}").as_bytes(), &ColumnMapping::default())
    }

    fn ts(day: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2016, 1, day).unwrap().and_time(NaiveTime::MIN)
    }

    fn rec(id: u64, cycle: u32, verdict: Verdict, dur: f64) -> ExecutionRecord {
        ExecutionRecord {
            test_id: TestId(id),
            test_name: format!("T{id}"),
            duration_s: dur,
            last_run: ts(cycle),
            verdict,
            cycle_id: cycle,
            calc_prio: None,
        }
    }

    fn group(records: Vec<ExecutionRecord>) -> Vec<CycleLog> {
        let mut map: BTreeMap<u32, Vec<ExecutionRecord>> = BTreeMap::new();
        for r in records {
            map.entry(r.cycle_id).or_default().push(r);
        }
        map.into_iter()
            .map(|(cycle_id, records)| CycleLog { cycle_id, records })
            .collect()
    }

    #[test]
    fn maps_fields_directly() {
        let cycles = parse("1,T1,5.0,2016-01-02,1,3\n").unwrap();
        assert_eq!(cycles.len(), 1);
        let r = &cycles[0].records[0];
        assert_eq!(r.test_id, TestId(1));
        assert_eq!(r.test_name, "T1");
        assert_eq!(r.duration_s, 5.0);
        assert_eq!(r.verdict, Verdict::Failed);
        assert_eq!(r.cycle_id, 3);
        assert_eq!(r.last_run, ts(2));
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn duplicate_execution_rejected() {
        let err = parse("1,T1,5.0,2016-01-02,1,3\n1,T1,4.0,2016-01-02,0,3\n").unwrap_err();
        assert!(matches!(
            err,
            HistoryError::DuplicateExecution {
                test_id: TestId(1),
                cycle_id: 3
            }
        ));
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(
            parse("1,T1,5.0,2016-01-02,2,3\n").unwrap_err(),
            HistoryError::BadVerdict { row: 1, .. }
        ));
        assert!(matches!(
            parse("1,T1,-1,2016-01-02,0,3\n").unwrap_err(),
            HistoryError::NegativeDuration { row: 1, .. }
        ));
        assert!(matches!(
            parse("1,T1,1,2016-01-02,0,0\n").unwrap_err(),
            HistoryError::BadCycle { row: 1 }
        ));
        let err = read_csv("Id,Name,Duration,Verdict,Cycle\n".as_bytes(), &ColumnMapping::default()).unwrap_err();
        assert!(matches!(err, HistoryError::MissingColumn(c) if c == "LastRun"));
    }

    #[test]
    fn columns_are_order_free_and_extra_columns_ignored() {
        let csv = "Cycle,LastResults,Verdict,LastRun,Duration,Name,Id\n2,[0],0,2016-01-05 10:30:00,1.5,X,9\n";
        let cycles = read_csv(csv.as_bytes(), &ColumnMapping::default()).unwrap();
        let r = &cycles[0].records[0];
        assert_eq!(r.test_id, TestId(9));
        assert_eq!(r.last_run, ts(5) + chrono::Duration::minutes(630));
    }

    #[test]
    fn cycles_sorted_ascending() {
        let cycles = parse("1,A,1,2016-01-05,0,5\n2,B,1,2016-01-02,0,2\n1,A,1,2016-01-02,0,2\n").unwrap();
        let ids: Vec<u32> = cycles.iter().map(|c| c.cycle_id).collect();
        assert_eq!(ids, vec![2, 5]);
        // Input order kept within a cycle.
        assert_eq!(cycles[0].records[0].test_id, TestId(2));
    }

    #[test]
    fn window_encodes_fail_pass_and_gaps() {
        let cycles = group(vec![
            rec(1, 3, Verdict::Failed, 4.0),
            rec(1, 5, Verdict::Passed, 6.0),
            rec(2, 2, Verdict::Passed, 1.0),
            rec(2, 4, Verdict::Passed, 1.0),
        ]);
        let m = build_status_matrix(&cycles, 4, 5).unwrap();
        let row = m.row(TestId(1)).unwrap();
        assert_eq!(row.statuses, vec![-1, 1, -1, 0]);
        assert_eq!(row.mean_duration_s, 5.0);
        assert_eq!(row.last_run, Some(ts(5)));
        // first-seen order: test 2 ran in cycle 2
        assert_eq!(m.test_ids().collect::<Vec<_>>(), vec![TestId(2), TestId(1)]);
    }

    #[test]
    fn unseen_test_is_all_not_run() {
        let cycles = group(vec![rec(1, 1, Verdict::Passed, 2.0)]);
        let index = HistoryIndex::new(&cycles);
        let m = index.matrix_for(&[TestId(77)], 1, 10).unwrap();
        assert_eq!(m.rows()[0].statuses, vec![NOT_RUN; 10]);
        assert_eq!(m.rows()[0].mean_duration_s, 0.0);
        assert!(!m.rows()[0].has_executed());
    }

    #[test]
    fn empty_history_error() {
        let cycles = group(vec![rec(1, 4, Verdict::Passed, 2.0)]);
        assert!(matches!(
            build_status_matrix(&cycles, 10, 3),
            Err(HistoryError::EmptyHistory { as_of: 3 })
        ));
        assert!(matches!(build_status_matrix(&[], 10, 3), Err(HistoryError::EmptyHistory { .. })));
    }

    #[test]
    fn future_cycles_do_not_leak() {
        let cycles = group(vec![
            rec(1, 1, Verdict::Passed, 2.0),
            rec(1, 2, Verdict::Failed, 100.0),
        ]);
        let m = build_status_matrix(&cycles, 3, 1).unwrap();
        assert_eq!(m.rows()[0].statuses, vec![-1, -1, 0]);
        assert_eq!(m.rows()[0].mean_duration_s, 2.0);
    }

    fn arb_log() -> impl Strategy<Value = Vec<CycleLog>> {
        // (test, cycle) grid with random presence, verdicts and durations.
        proptest::collection::vec((1u64..8, 1u32..25, any::<bool>(), 0u32..10_000, 0u32..86_400), 0..80).prop_map(|rows| {
            let mut seen = std::collections::HashSet::new();
            let records = rows
                .into_iter()
                .filter(|(id, c, ..)| seen.insert((*id, *c)))
                .map(|(id, c, failed, dur_ms, secs)| ExecutionRecord {
                    test_id: TestId(id),
                    test_name: format!("test_{id}"),
                    duration_s: f64::from(dur_ms) / 1000.0,
                    last_run: ts(1) + chrono::Duration::days(i64::from(c)) + chrono::Duration::seconds(i64::from(secs)),
                    verdict: if failed { Verdict::Failed } else { Verdict::Passed },
                    cycle_id: c,
                    calc_prio: None,
                })
                .collect();
            group(records)
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(cycles in arb_log()) {
            let mut buf = Vec::new();
            write_csv(&cycles, &mut buf).unwrap();
            let back = read_csv(buf.as_slice(), &ColumnMapping::default()).unwrap();
            prop_assert_eq!(back, cycles);
        }

        #[test]
        fn window_suffix_and_codomain(cycles in arb_log(), w1 in 1usize..6, extra in 1usize..8, as_of in 1u32..26) {
            prop_assume!(cycles.first().is_some_and(|c| c.cycle_id <= as_of));
            let w2 = w1 + extra;
            let short = build_status_matrix(&cycles, w1, as_of).unwrap();
            let long = build_status_matrix(&cycles, w2, as_of).unwrap();
            prop_assert_eq!(short.len(), long.len());
            for (a, b) in short.rows().iter().zip(long.rows()) {
                prop_assert_eq!(a.test_id, b.test_id);
                prop_assert_eq!(&a.statuses[..], &b.statuses[w2 - w1..]);
                prop_assert!(b.statuses.iter().all(|s| (-1..=1).contains(s)));
                prop_assert_eq!(a.mean_duration_s, b.mean_duration_s);
            }
        }

        #[test]
        fn mean_duration_ignores_input_order(cycles in arb_log(), as_of in 1u32..26) {
            prop_assume!(cycles.first().is_some_and(|c| c.cycle_id <= as_of));
            let mut reversed = cycles.clone();
            reversed.reverse();
            for c in &mut reversed {
                c.records.reverse();
            }
            let a = build_status_matrix(&cycles, 5, as_of).unwrap();
            let b = build_status_matrix(&reversed, 5, as_of).unwrap();
            for row in a.rows() {
                let other = b.row(row.test_id).unwrap();
                prop_assert_eq!(row.mean_duration_s, other.mean_duration_s);
                prop_assert_eq!(&row.statuses, &other.statuses);
                prop_assert!(row.mean_duration_s == 0.0 || row.has_executed());
            }
        }
    }
}

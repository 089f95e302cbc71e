//! CSV and plain-text renderings of harness results.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{HistoryStudy, ReplayReport, StageError, TruthComparison};
use crate::metrics::Measure;
use crate::net::to_text;
use serde::Deserialize;

use crate::history::TestId;
use crate::prioritize::{rank, PrioritizedSuite, RankedTest, SelectionResult};
use crate::timing::Phase;

/// Left-aligned first column, right-aligned rest.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.zip(&widths).enumerate() {
            if i == 0 {
                s.push_str(&format!("{cell:<w$}"));
            } else {
                s.push_str(&format!("  {cell:>w$}"));
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(&mut header.iter().copied());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}

fn cell(m: Measure) -> String {
    match m {
        Measure::Value(v) => format!("{v:.6}"),
        Measure::NotApplicable => "NA".into(),
    }
}

fn secs(d: std::time::Duration) -> String {
    format!("{:.4}", d.as_secs_f64())
}

pub fn write_cycle_results_csv<W: Write>(report: &ReplayReport, w: W) -> Result<(), StageError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "cycle", "strategy", "tests", "faults", "apfd", "napfd", "ft_s", "lt_s", "at_s", "budget_s", "selected", "used_s",
    ])?;
    for r in &report.results {
        wtr.write_record([
            r.cycle_id.to_string(),
            r.strategy.to_string(),
            r.tests.to_string(),
            r.faults.to_string(),
            cell(r.apfd),
            cell(r.napfd),
            cell(r.first_fault_s),
            cell(r.last_fault_s),
            cell(r.avg_fault_s),
            format!("{:.3}", r.budget_s),
            format!("{:.2}", r.selected),
            format!("{:.3}", r.used_s),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

const SUMMARY_HEADER: [&str; 11] = [
    "strategy", "cycles", "fault_cycles", "apfd", "napfd", "ft_s", "lt_s", "at_s", "pt_s", "rt_s", "tt_s",
];

fn summary_rows(report: &ReplayReport) -> Vec<Vec<String>> {
    report
        .summaries
        .iter()
        .map(|s| {
            vec![
                s.strategy.to_string(),
                s.cycles.to_string(),
                s.fault_cycles.to_string(),
                cell(s.mean_apfd),
                cell(s.mean_napfd),
                cell(s.mean_first_fault_s),
                cell(s.mean_last_fault_s),
                cell(s.mean_avg_fault_s),
                secs(s.times.pt),
                secs(s.times.rt),
                secs(s.times.tt),
            ]
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(report: &ReplayReport, w: W) -> Result<(), StageError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SUMMARY_HEADER)?;
    for row in summary_rows(report) {
        wtr.write_record(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_timing_csv<W: Write>(report: &ReplayReport, w: W) -> Result<(), StageError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["strategy".to_string()];
    header.extend(Phase::ALL.iter().map(|p| format!("{p}_s")));
    header.extend(["pt_s", "rt_s", "tt_s"].map(String::from));
    wtr.write_record(&header)?;
    for s in &report.summaries {
        let mut row = vec![s.strategy.to_string()];
        row.extend(Phase::ALL.iter().map(|&p| secs(s.times.phase(p))));
        row.extend([secs(s.times.pt), secs(s.times.rt), secs(s.times.tt)]);
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_training_csv<W: Write>(report: &ReplayReport, w: W) -> Result<(), StageError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["fit", "trained_through", "epoch", "train_mse"])?;
    for (i, fit) in report.fits.iter().enumerate() {
        for e in &fit.log.epochs {
            wtr.write_record([
                i.to_string(),
                fit.trained_through.to_string(),
                e.epoch.to_string(),
                format!("{:.8e}", e.train_mse),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Human-readable overview. `reference` holds published `(APFD, NAPFD)`
/// figures for the real dataset this log stands in for, shown for comparison.
pub fn format_replay(report: &ReplayReport, reference: Option<(f64, f64)>) -> String {
    let mut out = format!(
        "dataset {}: {} cycles, {} executions, window {}, training cycles {}, evaluated cycles {} (from cycle {})\n\n",
        report.dataset, report.cycles, report.executions, report.window_len, report.train_cycles, report.eval_cycles, report.cut_cycle
    );
    out.push_str(&table(&SUMMARY_HEADER, &summary_rows(report)));
    if let Some(a) = &report.accuracy {
        out.push_str(&format!(
            "\nnetwork vs formula on {} evaluated rows: mse {:.3e}, r2 {}, residual std {:.4}, spearman {}\n",
            a.rows,
            a.mse,
            cell(a.r_squared),
            a.residual_std,
            cell(a.spearman)
        ));
    }
    for (i, fit) in report.fits.iter().enumerate() {
        out.push_str(&format!(
            "fit {i}: {} training rows, {} epochs, final mse {}, validation mse {}{}\n",
            fit.train_rows,
            fit.log.epochs.len(),
            fit.log.final_mse().map_or("NA".into(), |m| format!("{m:.3e}")),
            fit.validation_mse.map_or("NA".into(), |m| format!("{m:.3e}")),
            fit.augment
                .map(|a| format!(", fail share {:.4} -> {:.4}", a.fail_ratio_before, a.fail_ratio_after))
                .unwrap_or_default()
        ));
    }
    if let Some((apfd, napfd)) = reference {
        out.push_str(&format!("published figures for the real dataset: APFD {apfd:.2}, NAPFD {napfd:.2}\n"));
    }
    out
}

/// Writes `cycles.csv`, `summary.csv`, `timing.csv`, `training.csv`,
/// `summary.txt` and, when a model was trained, `model.txt`.
pub fn write_replay(report: &ReplayReport, dir: &Path, reference: Option<(f64, f64)>) -> Result<(), StageError> {
    fs::create_dir_all(dir)?;
    write_cycle_results_csv(report, fs::File::create(dir.join("cycles.csv"))?)?;
    write_summary_csv(report, fs::File::create(dir.join("summary.csv"))?)?;
    write_timing_csv(report, fs::File::create(dir.join("timing.csv"))?)?;
    write_training_csv(report, fs::File::create(dir.join("training.csv"))?)?;
    fs::write(dir.join("summary.txt"), format_replay(report, reference))?;
    if let Some(m) = &report.model {
        fs::write(dir.join("model.txt"), to_text(m))?;
    }
    Ok(())
}

pub fn format_study(study: &HistoryStudy) -> String {
    let first = study.windows.first().map(|w| w.window);
    let rows: Vec<Vec<String>> = study
        .windows
        .iter()
        .map(|w| {
            let delta = |d: Option<f64>| d.map_or("NA".into(), |d| format!("{d:+.6}"));
            vec![
                w.window.to_string(),
                cell(w.apfd),
                cell(w.napfd),
                delta(first.and_then(|f| study.apfd_delta(f, w.window))),
                delta(first.and_then(|f| study.napfd_delta(f, w.window))),
            ]
        })
        .collect();
    format!(
        "dataset {}\n{}",
        study.dataset,
        table(&["window", "apfd", "napfd", "apfd_delta", "napfd_delta"], &rows)
    )
}

pub fn write_study_csv<W: Write>(studies: &[HistoryStudy], w: W) -> Result<(), StageError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["dataset", "window", "apfd", "napfd", "apfd_delta", "napfd_delta"])?;
    for s in studies {
        let first = s.windows.first().map(|w| w.window);
        for w in &s.windows {
            let delta = |d: Option<f64>| d.map_or("NA".into(), |d| format!("{d:.6}"));
            wtr.write_record([
                s.dataset.clone(),
                w.window.to_string(),
                cell(w.apfd),
                cell(w.napfd),
                delta(first.and_then(|f| s.apfd_delta(f, w.window))),
                delta(first.and_then(|f| s.napfd_delta(f, w.window))),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_truth_csv<W: Write>(cmp: &TruthComparison, w: W) -> Result<(), StageError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["cycle", "test_id", "recorded", "rocket", "rocket_diff", "model", "model_diff"])?;
    for r in &cmp.rows {
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
        wtr.write_record([
            r.cycle_id.to_string(),
            r.test_id.to_string(),
            format!("{:.6}", r.recorded),
            format!("{:.6}", r.rocket),
            format!("{:.6}", r.rocket_diff()),
            opt(r.model),
            opt(r.model_diff()),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn format_truth(cmp: &TruthComparison) -> String {
    let fmt = |s: Option<(f64, f64)>| s.map_or(["NA".to_string(), "NA".to_string()], |(m, x)| [format!("{m:.6}"), format!("{x:.6}")]);
    let [rm, rx] = fmt(cmp.rocket_summary());
    let mut rows = vec![vec!["rocket".to_string(), rm, rx]];
    if cmp.model_summary().is_some() {
        let [mm, mx] = fmt(cmp.model_summary());
        rows.push(vec!["model".to_string(), mm, mx]);
    }
    format!("{} compared priorities\n{}", cmp.rows.len(), table(&["source", "mean_abs_diff", "max_abs_diff"], &rows))
}

/// `rank, test_id, priority, duration` in suite order. Numbers are written
/// at full precision so [`read_prioritized_csv`] restores the same suite.
pub fn write_prioritized_csv<W: Write>(suite: &PrioritizedSuite, w: W) -> Result<(), StageError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["rank", "test_id", "priority", "duration"])?;
    for (i, t) in suite.tests().iter().enumerate() {
        wtr.write_record([
            (i + 1).to_string(),
            t.test_id.to_string(),
            t.priority.to_string(),
            t.mean_duration_s.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct PrioritizedRow {
    test_id: u64,
    priority: f64,
    duration: f64,
}

/// Reads the output of [`write_prioritized_csv`]; the `rank` column is ignored.
pub fn read_prioritized_csv<R: Read>(r: R) -> Result<PrioritizedSuite, StageError> {
    let mut tests = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: PrioritizedRow = row?;
        tests.push(RankedTest {
            test_id: TestId(row.test_id),
            priority: row.priority,
            mean_duration_s: row.duration,
        });
    }
    Ok(rank(tests)?)
}

/// One test id per line, for CI scripts.
pub fn write_id_list<W: Write>(ids: impl IntoIterator<Item = TestId>, mut w: W) -> std::io::Result<()> {
    for id in ids {
        writeln!(w, "{id}")?;
    }
    Ok(())
}

pub fn write_selection_csv<W: Write>(sel: &SelectionResult, w: W) -> Result<(), StageError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["test_id", "priority", "duration", "status", "remaining_s"])?;
    for t in &sel.selected {
        wtr.write_record([
            t.test_id.to_string(),
            format!("{:.8}", t.priority),
            format!("{:.3}", t.mean_duration_s),
            "selected".into(),
            String::new(),
        ])?;
    }
    for s in &sel.skipped {
        let (status, remaining) = match s.reason {
            crate::prioritize::SkipReason::ExceedsRemaining { remaining_s } => ("exceeds-budget", format!("{remaining_s:.3}")),
            crate::prioritize::SkipReason::BudgetClosed => ("budget-closed", String::new()),
        };
        wtr.write_record([
            s.test.test_id.to_string(),
            format!("{:.8}", s.test.priority),
            format!("{:.3}", s.test.mean_duration_s),
            status.into(),
            remaining,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

use super::replay::history_before;
use super::{AtPhase, Dataset, HarnessError, StageError};
use crate::features::extract_with;
use crate::history::{CycleLog, HistoryIndex, TestId};
use crate::net::TrainedModel;
use crate::rocket::{priority, WeightScheme};
use crate::timing::Phase;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthRow {
    pub cycle_id: u32,
    pub test_id: TestId,
    pub recorded: f64,
    pub rocket: f64,
    pub model: Option<f64>,
}

impl TruthRow {
    pub fn rocket_diff(&self) -> f64 {
        (self.recorded - self.rocket).abs()
    }

    pub fn model_diff(&self) -> Option<f64> {
        self.model.map(|m| (self.recorded - m).abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthComparison {
    pub rows: Vec<TruthRow>,
}

fn mean_max(xs: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (n, sum, max) = xs.fold((0usize, 0.0, f64::NEG_INFINITY), |(n, s, m), x| (n + 1, s + x, m.max(x)));
    (n > 0).then(|| (sum / n as f64, max))
}

impl TruthComparison {
    /// Mean and max of `|recorded - rocket|`.
    pub fn rocket_summary(&self) -> Option<(f64, f64)> {
        mean_max(self.rows.iter().map(TruthRow::rocket_diff))
    }

    pub fn model_summary(&self) -> Option<(f64, f64)> {
        mean_max(self.rows.iter().filter_map(TruthRow::model_diff))
    }
}

/// Compares each recorded priority with the formula (and optionally the
/// model) evaluated on the history before that record's cycle. Records whose
/// priority cell is empty are skipped.
pub fn compare_against_ground_truth(
    ds: &Dataset,
    scheme: &WeightScheme,
    model: Option<&TrainedModel>,
) -> Result<TruthComparison, HarnessError> {
    if !ds.cycles().iter().flat_map(|c| &c.records).any(|r| r.calc_prio.is_some()) {
        return Err(HarnessError::new(Phase::Ingest, StageError::MissingPriorityColumn));
    }
    let mut rows = Vec::new();
    for cycle in ds.cycles() {
        let matrix = history_before(ds, cycle, scheme.len())?;
        let preds = match model {
            Some(m) => {
                let mm = history_before(ds, cycle, m.window_len)?;
                let v = extract_with(&mm, &m.normalizer_for(&mm));
                Some(m.predict(&v).at(Phase::Prioritize)?)
            }
            None => None,
        };
        for (i, (rec, row)) in cycle.records.iter().zip(matrix.rows()).enumerate() {
            let Some(recorded) = rec.calc_prio else { continue };
            rows.push(TruthRow {
                cycle_id: cycle.cycle_id,
                test_id: rec.test_id,
                recorded,
                rocket: priority(&row.statuses, scheme).at(Phase::Label)?,
                model: preds.as_ref().map(|p| p[i]),
            });
        }
    }
    Ok(TruthComparison { rows })
}

/// Fills every record's priority with the formula over the history before
/// its cycle.
pub fn attach_rocket_priorities(cycles: &mut [CycleLog], scheme: &WeightScheme) {
    let index = HistoryIndex::new(cycles);
    for cycle in cycles.iter_mut() {
        let ids: Vec<TestId> = cycle.records.iter().map(|r| r.test_id).collect();
        let matrix = index
            .matrix_for(&ids, cycle.cycle_id.saturating_sub(1), scheme.len())
            .expect("scheme length is at least 1");
        for (rec, row) in cycle.records.iter_mut().zip(matrix.rows()) {
            rec.calc_prio = Some(priority(&row.statuses, scheme).expect("window matches scheme"));
        }
    }
}

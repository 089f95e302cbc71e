//! End-to-end orchestration: cycle replay, the history-length study and the
//! comparison against a recorded priority column.

mod plan;
mod replay;
pub mod report;
mod study;
mod truth;

use std::path::Path;

use thiserror::Error;

use crate::augment::AugmentError;
use crate::features::FeatureError;
use crate::history::{ingest_csv, ColumnMapping, CycleLog, HistoryError, HistoryIndex};
use crate::metrics::MetricError;
use crate::net::NetError;
use crate::prioritize::PrioritizeError;
use crate::rocket::RocketError;
use crate::timing::{Phase, TimingError};

pub use plan::{CutPoint, ExperimentPlan, Strategy};
pub use replay::{
    build_training_set, fit_model, run_pipeline, run_replay, AccuracySummary, AugmentSummary, CycleResult, FitReport, ReplayReport,
    StrategySummary,
};
pub use study::{history_length_study, HistoryStudy, WindowResult};
pub use truth::{attach_rocket_priorities, compare_against_ground_truth, TruthComparison, TruthRow};

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Rocket(#[from] RocketError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Prioritize(#[from] PrioritizeError),
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("dataset has {cycles} cycles, too few for a window of {window}")]
    InsufficientHistory { cycles: usize, window: usize },
    #[error("dataset has no priority column")]
    MissingPriorityColumn,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A stage failure tagged with the phase it happened in.
#[derive(Debug, Error)]
#[error("{phase} phase: {source}")]
pub struct HarnessError {
    pub phase: Phase,
    #[source]
    pub source: StageError,
}

impl HarnessError {
    pub fn new(phase: Phase, source: impl Into<StageError>) -> Self {
        HarnessError {
            phase,
            source: source.into(),
        }
    }

    /// A numeric breakdown (diverged training, non-finite scores) rather than
    /// bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self.source,
            StageError::Net(NetError::NonFiniteLoss { .. }) | StageError::Prioritize(PrioritizeError::NonFinitePriority(_))
        )
    }
}

pub(crate) trait AtPhase<T> {
    fn at(self, phase: Phase) -> Result<T, HarnessError>;
}

impl<T, E: Into<StageError>> AtPhase<T> for Result<T, E> {
    fn at(self, phase: Phase) -> Result<T, HarnessError> {
        self.map_err(|e| HarnessError::new(phase, e))
    }
}

/// A parsed log with its per-test index.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    cycles: Vec<CycleLog>,
    index: HistoryIndex,
}

impl Dataset {
    pub fn new(name: impl Into<String>, mut cycles: Vec<CycleLog>) -> Self {
        cycles.sort_by_key(|c| c.cycle_id);
        let index = HistoryIndex::new(&cycles);
        Dataset {
            name: name.into(),
            cycles,
            index,
        }
    }

    pub fn load(path: impl AsRef<Path>, schema: &ColumnMapping) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let cycles = ingest_csv(path, schema).at(Phase::Ingest)?;
        let name = path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
        Ok(Dataset::new(name, cycles))
    }

    pub fn cycles(&self) -> &[CycleLog] {
        &self.cycles
    }

    pub fn index(&self) -> &HistoryIndex {
        &self.index
    }

    pub fn cycle_ids(&self) -> &[u32] {
        self.index.cycle_ids()
    }

    pub fn executions(&self) -> usize {
        self.cycles.iter().map(|c| c.records.len()).sum()
    }
}

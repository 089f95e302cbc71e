use super::{run_replay, AccuracySummary, Dataset, ExperimentPlan, HarnessError, StageError, Strategy};
use crate::metrics::Measure;
use crate::timing::Phase;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub window: usize,
    pub apfd: Measure,
    pub napfd: Measure,
    pub accuracy: Option<AccuracySummary>,
}

/// One dataset replayed with the network strategy under several window lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryStudy {
    pub dataset: String,
    pub windows: Vec<WindowResult>,
}

impl HistoryStudy {
    pub fn result(&self, window: usize) -> Option<&WindowResult> {
        self.windows.iter().find(|w| w.window == window)
    }

    /// `apfd(to) - apfd(from)`, if both are defined.
    pub fn apfd_delta(&self, from: usize, to: usize) -> Option<f64> {
        Some(self.result(to)?.apfd.value()? - self.result(from)?.apfd.value()?)
    }

    pub fn napfd_delta(&self, from: usize, to: usize) -> Option<f64> {
        Some(self.result(to)?.napfd.value()? - self.result(from)?.napfd.value()?)
    }
}

/// Trains one model per entry of `plan.history_windows`, all else equal.
pub fn history_length_study(ds: &Dataset, plan: &ExperimentPlan) -> Result<HistoryStudy, HarnessError> {
    let longest = plan.history_windows.iter().copied().max().unwrap_or(0);
    if plan.history_windows.is_empty() {
        return Err(HarnessError::new(Phase::Ingest, StageError::InvalidPlan("no window lengths to compare".into())));
    }
    if ds.cycles().len() <= longest {
        return Err(HarnessError::new(
            Phase::Ingest,
            StageError::InsufficientHistory {
                cycles: ds.cycles().len(),
                window: longest,
            },
        ));
    }
    let mut windows = Vec::new();
    for &w in &plan.history_windows {
        let p = ExperimentPlan {
            window_len: w,
            strategies: vec![Strategy::DeepOrder],
            ..plan.clone()
        };
        let report = run_replay(ds, &p)?;
        let s = report.summary(Strategy::DeepOrder).expect("strategy was requested");
        windows.push(WindowResult {
            window: w,
            apfd: s.mean_apfd,
            napfd: s.mean_napfd,
            accuracy: report.accuracy,
        });
    }
    Ok(HistoryStudy {
        dataset: ds.name.clone(),
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::TrainConfig;
    use crate::synth::{generate, SynthConfig};

    fn plan(windows: Vec<usize>) -> ExperimentPlan {
        ExperimentPlan {
            history_windows: windows,
            train: TrainConfig {
                epochs_max: 20,
                batch_size: Some(32),
                ..TrainConfig::default()
            },
            ..ExperimentPlan::default()
        }
    }

    #[test]
    fn identical_windows_have_zero_delta() {
        let cfg = SynthConfig {
            tests: 20,
            cycles: 30,
            ..SynthConfig::default()
        };
        let ds = Dataset::new("s", generate(&cfg, 5).unwrap());
        let study = history_length_study(&ds, &plan(vec![4, 4])).unwrap();
        assert_eq!(study.windows.len(), 2);
        assert_eq!(study.windows[0], study.windows[1]);
        assert_eq!(study.apfd_delta(4, 4), Some(0.0));

        let both = history_length_study(&ds, &plan(vec![4, 10])).unwrap();
        let d = both.apfd_delta(4, 10).unwrap();
        assert_eq!(d, both.result(10).unwrap().apfd.value().unwrap() - both.result(4).unwrap().apfd.value().unwrap());
    }

    #[test]
    fn short_log_is_insufficient() {
        let cfg = SynthConfig {
            tests: 8,
            cycles: 5,
            ..SynthConfig::default()
        };
        let ds = Dataset::new("s", generate(&cfg, 1).unwrap());
        let err = history_length_study(&ds, &plan(vec![4, 10])).unwrap_err();
        assert!(matches!(err.source, StageError::InsufficientHistory { cycles: 5, window: 10 }));
    }
}

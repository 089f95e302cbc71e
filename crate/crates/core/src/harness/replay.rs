use std::collections::HashMap;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AtPhase, Dataset, ExperimentPlan, HarnessError, StageError, Strategy};
use crate::augment::{augment, fail_ratio, Unchanged};
use crate::features::{extract_with, FeatureVector, Normalizer, NormalizerMode};
use crate::history::{ColumnMapping, CycleLog, StatusMatrix, TestId};
use crate::metrics::{apfd, mean_applicable, napfd, regression_accuracy, spearman, time_metrics, CycleOutcome, ExecutedTest, Measure};
use crate::net::{train, TrainingLog};
use crate::net::{mse, standard_dims, Network, Sample, TrainedModel};
use crate::prioritize::{rank, select_with_policy, PrioritizedSuite, RankedTest, SelectionResult};
use crate::rocket::{label_vectors, priority, WeightScheme};
use crate::timing::{Phase, PhaseTimes, Stopwatch};

const SPLIT_STREAM: u64 = 1;
const AUGMENT_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;
const SHUFFLE_STREAM: u64 = 4;
const RANDOM_STREAM: u64 = 1 << 40;

/// One strategy's result on one evaluated cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleResult {
    pub cycle_id: u32,
    pub strategy: Strategy,
    pub tests: usize,
    pub faults: usize,
    /// Over the full prioritized order.
    pub apfd: Measure,
    /// Over the budgeted selection.
    pub napfd: Measure,
    pub first_fault_s: Measure,
    pub last_fault_s: Measure,
    pub avg_fault_s: Measure,
    pub budget_s: f64,
    pub selected: f64,
    pub used_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub cycles: usize,
    pub fault_cycles: usize,
    pub mean_apfd: Measure,
    pub mean_napfd: Measure,
    pub mean_first_fault_s: Measure,
    pub mean_last_fault_s: Measure,
    pub mean_avg_fault_s: Measure,
    pub times: PhaseTimes,
}

/// Network predictions against formula labels on the evaluated cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracySummary {
    pub rows: usize,
    pub mse: f64,
    pub r_squared: Measure,
    pub residual_std: f64,
    pub spearman: Measure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSummary {
    pub fail_ratio_before: f64,
    pub fail_ratio_after: f64,
    pub interpolated: usize,
    pub perturbed: usize,
    pub removed_passed: usize,
    pub unchanged: Option<Unchanged>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Last cycle whose executions contributed training rows.
    pub trained_through: u32,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub augment: Option<AugmentSummary>,
    pub log: TrainingLog,
    pub validation_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub dataset: String,
    pub window_len: usize,
    pub cycles: usize,
    pub executions: usize,
    /// First evaluated cycle.
    pub cut_cycle: u32,
    pub train_cycles: usize,
    pub eval_cycles: usize,
    pub results: Vec<CycleResult>,
    pub summaries: Vec<StrategySummary>,
    pub accuracy: Option<AccuracySummary>,
    pub fits: Vec<FitReport>,
    pub model: Option<TrainedModel>,
}

impl ReplayReport {
    pub fn summary(&self, strategy: Strategy) -> Option<&StrategySummary> {
        self.summaries.iter().find(|s| s.strategy == strategy)
    }

    pub fn results_for(&self, strategy: Strategy) -> impl Iterator<Item = &CycleResult> {
        self.results.iter().filter(move |r| r.strategy == strategy)
    }

    /// Share of fault-containing cycles where `a` has a strictly higher NAPFD
    /// than `b`. `None` if the log has no such cycle or a strategy is missing.
    pub fn napfd_win_rate(&self, a: Strategy, b: Strategy) -> Option<f64> {
        let theirs: HashMap<u32, Measure> = self.results_for(b).map(|r| (r.cycle_id, r.napfd)).collect();
        let (mut wins, mut total) = (0usize, 0usize);
        for r in self.results_for(a).filter(|r| r.faults > 0) {
            let (Some(x), Some(y)) = (r.napfd.value(), theirs.get(&r.cycle_id).and_then(|m| m.value())) else {
                continue;
            };
            total += 1;
            wins += usize::from(x > y);
        }
        (total > 0).then(|| wins as f64 / total as f64)
    }
}

fn suite_ids(cycle: &CycleLog) -> Vec<TestId> {
    cycle.records.iter().map(|r| r.test_id).collect()
}

/// The matrix a suite is prioritized from: history strictly before `cycle`
/// (cycle ids are positive).
pub(crate) fn history_before(ds: &Dataset, cycle: &CycleLog, window: usize) -> Result<StatusMatrix, HarnessError> {
    ds.index()
        .matrix_for(&suite_ids(cycle), cycle.cycle_id.saturating_sub(1), window)
        .at(Phase::Features)
}

/// Unlabeled rows for every execution in `cycles`, each featurized from the
/// history before its own cycle, plus bounds covering all of them.
fn training_vectors(ds: &Dataset, cycles: &[&CycleLog], window: usize, mode: NormalizerMode) -> Result<(Vec<FeatureVector>, Normalizer), HarnessError> {
    let matrices = cycles
        .iter()
        .map(|c| history_before(ds, c, window))
        .collect::<Result<Vec<_>, _>>()?;
    let frozen = matrices
        .iter()
        .map(Normalizer::fit)
        .reduce(|a, b| a.merge(&b))
        .unwrap_or_else(|| Normalizer::fit_rows(std::iter::empty()));
    let mut vectors = Vec::new();
    for m in &matrices {
        let norm = match mode {
            NormalizerMode::Suite => Normalizer::fit(m),
            NormalizerMode::Frozen => frozen,
        };
        vectors.extend(extract_with(m, &norm));
    }
    Ok((vectors, frozen))
}

/// Labeled training rows plus frozen bounds for every execution in `cycles`.
pub fn build_training_set(
    ds: &Dataset,
    cycles: &[&CycleLog],
    window: usize,
    scheme: &WeightScheme,
    mode: NormalizerMode,
) -> Result<(Vec<FeatureVector>, Normalizer), HarnessError> {
    let (mut vectors, norm) = training_vectors(ds, cycles, window, mode)?;
    label_vectors(&mut vectors, scheme).at(Phase::Label)?;
    Ok((vectors, norm))
}

/// Splits off validation rows, augments the rest and trains a fresh network.
pub fn fit_model(
    vectors: &[FeatureVector],
    normalizer: Normalizer,
    window: usize,
    plan: &ExperimentPlan,
    sw: &mut Stopwatch,
) -> Result<(TrainedModel, FitReport), HarnessError> {
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.derived_seed(SPLIT_STREAM)));
    let n_val = (vectors.len() as f64 * plan.validation_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val.min(vectors.len().saturating_sub(1)));
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    let train_rows: Vec<FeatureVector> = train_idx.iter().map(|&i| vectors[i].clone()).collect();
    let validation: Vec<Sample> = val_idx.iter().filter_map(|&i| Sample::from_vector(&vectors[i])).collect();

    let (train_rows, augment_summary) = match &plan.augment {
        None => (train_rows, None),
        Some(cfg) => {
            sw.start(Phase::Augment);
            let cfg = crate::augment::AugmentConfig {
                rng_seed: plan.derived_seed(AUGMENT_STREAM),
                ..cfg.clone()
            };
            let before = fail_ratio(&train_rows);
            let outcome = augment(&train_rows, &cfg);
            sw.stop(Phase::Augment);
            let outcome = outcome.at(Phase::Augment)?;
            let summary = AugmentSummary {
                fail_ratio_before: before,
                fail_ratio_after: outcome.fail_ratio(),
                interpolated: outcome.interpolated,
                perturbed: outcome.perturbed,
                removed_passed: outcome.removed_passed,
                unchanged: outcome.unchanged,
            };
            (outcome.vectors, Some(summary))
        }
    };

    sw.start(Phase::Train);
    let result = (|| -> Result<(Network, TrainingLog), StageError> {
        let samples: Vec<Sample> = train_rows.iter().filter_map(Sample::from_vector).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(plan.derived_seed(INIT_STREAM));
        let mut net = Network::xavier(&standard_dims(window + crate::features::DERIVED_FEATURES), &mut rng)?;
        let cfg = crate::net::TrainConfig {
            rng_seed: plan.derived_seed(SHUFFLE_STREAM),
            ..plan.train.clone()
        };
        let log = train(&mut net, &samples, &[], &cfg)?;
        Ok((net, log))
    })();
    sw.stop(Phase::Train);
    let (network, log) = result.at(Phase::Train)?;

    sw.start(Phase::Validate);
    let validation_mse = if validation.is_empty() {
        Ok(None)
    } else {
        let preds = network.predict_batch(validation.iter().map(|s| s.inputs.as_slice()));
        let labels: Vec<f64> = validation.iter().map(|s| s.label).collect();
        preds.and_then(|p: Vec<f64>| mse(&p, &labels)).map(Some)
    };
    sw.stop(Phase::Validate);
    let validation_mse = validation_mse.at(Phase::Validate)?;
    info!(
        "trained on {} rows for {} epochs, final mse {:?}, validation mse {:?}",
        train_rows.len(),
        log.epochs.len(),
        log.final_mse(),
        validation_mse
    );

    let model = TrainedModel {
        network,
        window_len: window,
        normalizer,
        normalizer_mode: plan.normalizer,
        weight_kind: plan.weights,
        rng_seed: plan.seed,
    };
    let report = FitReport {
        trained_through: 0,
        train_rows: train_rows.len(),
        validation_rows: validation.len(),
        augment: augment_summary,
        log,
        validation_mse,
    };
    Ok((model, report))
}

struct Evaluation<'a> {
    cycle: &'a CycleLog,
    lookup: HashMap<TestId, usize>,
    faults: usize,
    budget_s: f64,
}

impl<'a> Evaluation<'a> {
    fn new(cycle: &'a CycleLog, budget_fraction: f64) -> Self {
        Evaluation {
            cycle,
            lookup: cycle.records.iter().enumerate().map(|(i, r)| (r.test_id, i)).collect(),
            faults: cycle.failure_count(),
            budget_s: budget_fraction * cycle.total_duration_s(),
        }
    }

    fn executed<'b>(&self, ids: impl Iterator<Item = TestId> + 'b) -> Vec<ExecutedTest> {
        ids.map(|id| {
            let r = &self.cycle.records[self.lookup[&id]];
            ExecutedTest {
                verdict: r.verdict,
                duration_s: r.duration_s,
            }
        })
        .collect()
    }

    fn score(&self, strategy: Strategy, suite: &PrioritizedSuite, sel: &SelectionResult) -> Result<CycleResult, HarnessError> {
        let full = CycleOutcome::full(self.executed(suite.ids()));
        let budgeted = CycleOutcome::new(self.executed(sel.selected.iter().map(|t| t.test_id)), self.faults).at(Phase::Evaluate)?;
        let times = time_metrics(&budgeted);
        Ok(CycleResult {
            cycle_id: self.cycle.cycle_id,
            strategy,
            tests: self.cycle.records.len(),
            faults: self.faults,
            apfd: apfd(&full),
            napfd: napfd(&budgeted),
            first_fault_s: times.first,
            last_fault_s: times.last,
            avg_fault_s: times.average,
            budget_s: self.budget_s,
            selected: sel.selected.len() as f64,
            used_s: sel.used_s,
        })
    }
}

/// Per-cycle mean of several results for the same cycle.
fn average(results: &[CycleResult]) -> CycleResult {
    let n = results.len() as f64;
    let mean = |f: fn(&CycleResult) -> Measure| mean_applicable(results.iter().map(f));
    CycleResult {
        apfd: mean(|r| r.apfd),
        napfd: mean(|r| r.napfd),
        first_fault_s: mean(|r| r.first_fault_s),
        last_fault_s: mean(|r| r.last_fault_s),
        avg_fault_s: mean(|r| r.avg_fault_s),
        selected: results.iter().map(|r| r.selected).sum::<f64>() / n,
        used_s: results.iter().map(|r| r.used_s).sum::<f64>() / n,
        ..results[0].clone()
    }
}

fn ranked_tests(matrix: &StatusMatrix, priorities: &[f64]) -> Vec<RankedTest> {
    matrix
        .rows()
        .iter()
        .zip(priorities)
        .map(|(row, &p)| RankedTest {
            test_id: row.test_id,
            priority: p,
            mean_duration_s: row.mean_duration_s,
        })
        .collect()
}

/// Priorities that reproduce a given order under a stable descending sort.
fn positional(n: usize) -> Vec<f64> {
    (0..n).map(|i| (n - i) as f64).collect()
}

struct StrategyRun {
    results: Vec<CycleResult>,
    times: PhaseTimes,
    fits: Vec<FitReport>,
    model: Option<TrainedModel>,
    accuracy: Vec<(f64, f64)>,
}

fn run_deeporder(ds: &Dataset, plan: &ExperimentPlan, cut: usize, scheme: &WeightScheme) -> Result<StrategyRun, HarnessError> {
    let window = plan.window_len;
    let mut sw = Stopwatch::new();
    sw.start(Phase::Total);
    let mut model: Option<TrainedModel> = None;
    let mut fits = Vec::new();
    let mut results = Vec::new();
    let mut accuracy = Vec::new();
    let mut since_fit = 0usize;
    for pos in cut..ds.cycles().len() {
        let cycle = &ds.cycles()[pos];
        if model.is_none() || plan.retrain_every.is_some_and(|k| since_fit >= k) {
            let history: Vec<&CycleLog> = ds.cycles()[..pos].iter().collect();
            sw.start(Phase::Features);
            let built = training_vectors(ds, &history, window, plan.normalizer);
            sw.stop(Phase::Features);
            let (mut vectors, norm) = built?;
            sw.start(Phase::Label);
            let labeled = label_vectors(&mut vectors, scheme);
            sw.stop(Phase::Label);
            labeled.at(Phase::Label)?;
            let (m, mut fit) = fit_model(&vectors, norm, window, plan, &mut sw)?;
            fit.trained_through = ds.cycles()[pos - 1].cycle_id;
            debug!("model refit before cycle {}", cycle.cycle_id);
            fits.push(fit);
            model = Some(m);
            since_fit = 0;
        }
        let m = model.as_ref().expect("fitted above");
        let eval = Evaluation::new(cycle, plan.budget_fraction);

        sw.start(Phase::Prioritize);
        let prioritized = (|| -> Result<_, HarnessError> {
            let matrix = history_before(ds, cycle, window)?;
            let vectors = extract_with(&matrix, &m.normalizer_for(&matrix));
            let raw = m.predict(&vectors).at(Phase::Prioritize)?;
            let clamped: Vec<f64> = raw.iter().map(|p| p.clamp(0.0, 1.0)).collect();
            let suite = rank(ranked_tests(&matrix, &clamped)).at(Phase::Prioritize)?;
            let sel = select_with_policy(&suite, eval.budget_s, plan.selection);
            Ok((vectors, raw, suite, sel))
        })();
        sw.stop(Phase::Prioritize);
        let (vectors, raw, suite, sel) = prioritized?;

        sw.start(Phase::Evaluate);
        let scored = eval.score(Strategy::DeepOrder, &suite, &sel);
        for (v, &p) in vectors.iter().zip(&raw) {
            // the window length always matches the scheme here
            accuracy.push((p, priority(&v.es_window, scheme).unwrap_or(0.0)));
        }
        sw.stop(Phase::Evaluate);
        results.push(scored?);
        since_fit += 1;
    }
    sw.stop(Phase::Total);
    Ok(StrategyRun {
        results,
        times: sw.summary().at(Phase::Total)?,
        fits,
        model,
        accuracy,
    })
}

fn run_baseline(ds: &Dataset, plan: &ExperimentPlan, cut: usize, scheme: &WeightScheme, strategy: Strategy) -> Result<StrategyRun, HarnessError> {
    let window = plan.window_len;
    let mut sw = Stopwatch::new();
    sw.start(Phase::Total);
    let mut results = Vec::new();
    for cycle in &ds.cycles()[cut..] {
        let eval = Evaluation::new(cycle, plan.budget_fraction);
        match strategy {
            Strategy::Rocket => {
                sw.start(Phase::Label);
                let scored = history_before(ds, cycle, window).and_then(|m| {
                    let p = m
                        .rows()
                        .iter()
                        .map(|r| priority(&r.statuses, scheme))
                        .collect::<Result<Vec<_>, _>>()
                        .at(Phase::Label)?;
                    Ok((m, p))
                });
                sw.stop(Phase::Label);
                let (matrix, prios) = scored?;
                sw.start(Phase::Prioritize);
                let ranked = rank(ranked_tests(&matrix, &prios)).map(|s| {
                    let sel = select_with_policy(&s, eval.budget_s, plan.selection);
                    (s, sel)
                });
                sw.stop(Phase::Prioritize);
                let (suite, sel) = ranked.at(Phase::Prioritize)?;
                results.push(sw.time(Phase::Evaluate, || eval.score(strategy, &suite, &sel))?);
            }
            Strategy::Untreated | Strategy::Random => {
                sw.start(Phase::Prioritize);
                let matrix = history_before(ds, cycle, window);
                sw.stop(Phase::Prioritize);
                let matrix = matrix?;
                let n = matrix.len();
                let reps = if strategy == Strategy::Random { plan.random_repetitions } else { 1 };
                let mut rng = ChaCha8Rng::seed_from_u64(plan.derived_seed(RANDOM_STREAM | u64::from(cycle.cycle_id)));
                let mut per_rep = Vec::with_capacity(reps);
                for _ in 0..reps {
                    sw.start(Phase::Prioritize);
                    let mut tests = ranked_tests(&matrix, &vec![0.0; n]);
                    if strategy == Strategy::Random {
                        tests.shuffle(&mut rng);
                    }
                    for (t, p) in tests.iter_mut().zip(positional(n)) {
                        t.priority = p;
                    }
                    let suite = rank(tests).expect("finite positional priorities");
                    let sel = select_with_policy(&suite, eval.budget_s, plan.selection);
                    sw.stop(Phase::Prioritize);
                    per_rep.push(sw.time(Phase::Evaluate, || eval.score(strategy, &suite, &sel))?);
                }
                results.push(average(&per_rep));
            }
            Strategy::DeepOrder => unreachable!("handled by run_deeporder"),
        }
    }
    sw.stop(Phase::Total);
    Ok(StrategyRun {
        results,
        times: sw.summary().at(Phase::Total)?,
        fits: Vec::new(),
        model: None,
        accuracy: Vec::new(),
    })
}

fn summarize(strategy: Strategy, results: &[CycleResult], times: PhaseTimes) -> StrategySummary {
    let mean = |f: fn(&CycleResult) -> Measure| mean_applicable(results.iter().map(f));
    StrategySummary {
        strategy,
        cycles: results.len(),
        fault_cycles: results.iter().filter(|r| r.faults > 0).count(),
        mean_apfd: mean(|r| r.apfd),
        mean_napfd: mean(|r| r.napfd),
        mean_first_fault_s: mean(|r| r.first_fault_s),
        mean_last_fault_s: mean(|r| r.last_fault_s),
        mean_avg_fault_s: mean(|r| r.avg_fault_s),
        times,
    }
}

/// Replays every cycle after the cut for each strategy in the plan.
///
/// The cycle being ranked contributes only its list of tests; its verdicts
/// and durations are used for scoring and for the budget.
pub fn run_replay(ds: &Dataset, plan: &ExperimentPlan) -> Result<ReplayReport, HarnessError> {
    plan.validate().map_err(|e| HarnessError::new(Phase::Ingest, StageError::InvalidPlan(e)))?;
    if ds.cycles().len() <= plan.window_len {
        return Err(HarnessError::new(
            Phase::Ingest,
            StageError::InsufficientHistory {
                cycles: ds.cycles().len(),
                window: plan.window_len,
            },
        ));
    }
    let cut = plan
        .cut_index(ds.cycle_ids())
        .map_err(|e| HarnessError::new(Phase::Ingest, StageError::InvalidPlan(e)))?;
    let scheme = plan.weights.scheme(plan.window_len).at(Phase::Label)?;

    let mut strategies = plan.strategies.clone();
    strategies.sort();
    strategies.dedup();
    let mut report = ReplayReport {
        dataset: ds.name.clone(),
        window_len: plan.window_len,
        cycles: ds.cycles().len(),
        executions: ds.executions(),
        cut_cycle: ds.cycle_ids()[cut],
        train_cycles: cut,
        eval_cycles: ds.cycles().len() - cut,
        results: Vec::new(),
        summaries: Vec::new(),
        accuracy: None,
        fits: Vec::new(),
        model: None,
    };
    for strategy in strategies {
        info!("replaying {} with {strategy}", ds.name);
        let run = match strategy {
            Strategy::DeepOrder => run_deeporder(ds, plan, cut, &scheme)?,
            other => run_baseline(ds, plan, cut, &scheme, other)?,
        };
        if strategy == Strategy::DeepOrder && run.accuracy.len() >= 2 {
            let (preds, labels): (Vec<f64>, Vec<f64>) = run.accuracy.iter().copied().unzip();
            let acc = regression_accuracy(&preds, &labels).at(Phase::Validate)?;
            report.accuracy = Some(AccuracySummary {
                rows: preds.len(),
                mse: acc.mse,
                r_squared: acc.r_squared,
                residual_std: acc.residual_std,
                spearman: spearman(&preds, &labels).at(Phase::Validate)?,
            });
        }
        report.summaries.push(summarize(strategy, &run.results, run.times));
        report.results.extend(run.results);
        report.fits.extend(run.fits);
        if run.model.is_some() {
            report.model = run.model;
        }
    }
    Ok(report)
}

/// Loads a log and replays it, charging the load to every strategy's
/// processing time.
pub fn run_pipeline(path: impl AsRef<Path>, schema: &ColumnMapping, plan: &ExperimentPlan) -> Result<ReplayReport, HarnessError> {
    let mut sw = Stopwatch::new();
    let ds = sw.time(Phase::Ingest, || Dataset::load(path, schema))?;
    let ingest = sw.summary().at(Phase::Ingest)?.phase(Phase::Ingest);
    let mut report = run_replay(&ds, plan)?;
    for s in &mut report.summaries {
        s.times.add_span(Phase::Ingest, ingest);
    }
    Ok(report)
}

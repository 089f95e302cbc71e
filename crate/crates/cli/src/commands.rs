use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use deeporder::augment::{augment, fail_ratio};
use deeporder::features::{extract_with, read_features_csv, write_features_csv};
use deeporder::harness::report::{
    format_replay, format_study, format_truth, read_prioritized_csv, table, write_id_list, write_prioritized_csv, write_replay,
    write_selection_csv, write_study_csv, write_truth_csv,
};
use deeporder::harness::{
    attach_rocket_priorities, build_training_set, compare_against_ground_truth, fit_model, history_length_study, run_pipeline, Dataset,
    ExperimentPlan, HarnessError,
};
use deeporder::history::{write_csv, ColumnMapping, CycleLog, StatusMatrix, TestId};
use deeporder::metrics::{apfd, napfd, time_metrics, CycleOutcome, ExecutedTest};
use deeporder::net::{load_model, save_model, TrainedModel};
use deeporder::prioritize::{rank, select_with_policy, PrioritizedSuite, RankedTest};
use deeporder::rocket::priority;
use deeporder::synth::{generate, summarize, Profile};
use deeporder::timing::Stopwatch;
use log::{info, warn};

use crate::{CliError, Command};

pub struct Context {
    pub plan: ExperimentPlan,
    pub out_dir: PathBuf,
    pub delimiter: char,
}

impl Context {
    fn schema(&self) -> Result<ColumnMapping, CliError> {
        let delimiter = u8::try_from(self.delimiter).map_err(|_| CliError::Input("delimiter must be a single ASCII character".into()))?;
        Ok(ColumnMapping {
            delimiter,
            ..ColumnMapping::default()
        })
    }

    fn load(&self, path: &Path) -> Result<Dataset, CliError> {
        if !path.is_file() {
            return Err(CliError::Input(format!("{} is not a readable file", path.display())));
        }
        Ok(Dataset::load(path, &self.schema()?)?)
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Input(format!("cannot create {}: {e}", path.display())))?;
        Ok((path, BufWriter::new(file)))
    }
}

fn stage<T, E: Into<deeporder::harness::StageError>>(phase: deeporder::timing::Phase, r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| HarnessError::new(phase, e).into())
}

pub fn run(ctx: &Context, command: Command) -> Result<(), CliError> {
    use deeporder::timing::Phase;
    match command {
        Command::Ingest { input, normalized } => {
            let ds = ctx.load(&input)?;
            let s = summarize(ds.cycles());
            println!(
                "{}: {} cycles, {} tests, {} executions, {:.4} failed, {} cycles with failures",
                ds.name, s.cycles, s.tests, s.executions, s.fail_rate, s.failing_cycles
            );
            if normalized {
                let (path, w) = ctx.create(&format!("{}.normalized.csv", ds.name))?;
                stage(Phase::Ingest, write_csv(ds.cycles(), w))?;
                println!("wrote {}", path.display());
            }
        }
        Command::Label { input, through } => {
            let ds = ctx.load(&input)?;
            let cycles = cycles_through(&ds, through)?;
            let scheme = stage(Phase::Label, ctx.plan.weights.scheme(ctx.plan.window_len))?;
            let (vectors, _) = build_training_set(&ds, &cycles, ctx.plan.window_len, &scheme, ctx.plan.normalizer)?;
            let (path, w) = ctx.create("features.csv")?;
            stage(Phase::Features, write_features_csv(&vectors, w))?;
            println!("{} labeled vectors from {} cycles, wrote {}", vectors.len(), cycles.len(), path.display());
        }
        Command::Augment { features } => {
            let file = File::open(&features).map_err(|e| CliError::Input(format!("cannot open {}: {e}", features.display())))?;
            let vectors = stage(Phase::Features, read_features_csv(file))?;
            let mut cfg = ctx
                .plan
                .augment
                .clone()
                .ok_or_else(|| CliError::Input("augmentation is disabled by the configuration".into()))?;
            cfg.rng_seed = ctx.plan.seed;
            let out = stage(Phase::Augment, augment(&vectors, &cfg))?;
            if let Some(reason) = &out.unchanged {
                warn!("input left unchanged: {reason:?}");
            }
            let (path, w) = ctx.create("features_augmented.csv")?;
            stage(Phase::Augment, write_features_csv(&out.vectors, w))?;
            println!(
                "fail share {:.4} -> {:.4}: {} interpolated, {} perturbed, {} passed rows dropped; wrote {}",
                fail_ratio(&vectors),
                out.fail_ratio(),
                out.interpolated,
                out.perturbed,
                out.removed_passed,
                path.display()
            );
        }
        Command::Train { input, through } => {
            let ds = ctx.load(&input)?;
            let cycles = cycles_through(&ds, through)?;
            let plan = &ctx.plan;
            let scheme = stage(Phase::Label, plan.weights.scheme(plan.window_len))?;
            let (vectors, norm) = build_training_set(&ds, &cycles, plan.window_len, &scheme, plan.normalizer)?;
            let mut sw = Stopwatch::new();
            let (model, mut fit) = fit_model(&vectors, norm, plan.window_len, plan, &mut sw)?;
            fit.trained_through = cycles.last().map_or(0, |c| c.cycle_id);
            let (model_path, _) = ctx.create("model.txt")?;
            save_model(&model, &model_path)?;
            let (log_path, mut w) = ctx.create("training.csv")?;
            writeln!(w, "epoch,train_mse")?;
            for e in &fit.log.epochs {
                writeln!(w, "{},{}", e.epoch, e.train_mse)?;
            }
            w.flush()?;
            println!(
                "trained through cycle {} on {} rows ({} held out), {} epochs, final mse {}, validation mse {}",
                fit.trained_through,
                fit.train_rows,
                fit.validation_rows,
                fit.log.epochs.len(),
                fit.log.final_mse().map_or("n/a".into(), |m| format!("{m:.3e}")),
                fit.validation_mse.map_or("n/a".into(), |m| format!("{m:.3e}")),
            );
            println!("wrote {} and {}", model_path.display(), log_path.display());
        }
        Command::Prioritize { input, model, cycle } => {
            let ds = ctx.load(&input)?;
            let model = model.map(load_model).transpose()?;
            let window = model.as_ref().map_or(ctx.plan.window_len, |m| m.window_len);
            let matrix = suite_matrix(&ds, cycle, window)?;
            let priorities = match &model {
                Some(m) => model_priorities(m, &matrix)?,
                None => {
                    let scheme = stage(Phase::Label, ctx.plan.weights.scheme(window))?;
                    matrix
                        .rows()
                        .iter()
                        .map(|r| stage(Phase::Label, priority(&r.statuses, &scheme)))
                        .collect::<Result<Vec<_>, _>>()?
                }
            };
            let tests = matrix
                .rows()
                .iter()
                .zip(&priorities)
                .map(|(r, &p)| RankedTest {
                    test_id: r.test_id,
                    priority: p,
                    mean_duration_s: r.mean_duration_s,
                })
                .collect();
            let suite = stage(Phase::Prioritize, rank(tests))?;
            let (path, w) = ctx.create("prioritized.csv")?;
            stage(Phase::Prioritize, write_prioritized_csv(&suite, w))?;
            print_top(&suite, 10);
            println!("ranked {} tests, wrote {}", suite.len(), path.display());
        }
        Command::Select { prioritized, budget } => {
            if !(budget >= 0.0 && budget.is_finite()) {
                return Err(CliError::Input(format!("budget must be a non-negative number of seconds, got {budget}")));
            }
            let file = File::open(&prioritized).map_err(|e| CliError::Input(format!("cannot open {}: {e}", prioritized.display())))?;
            let suite = read_prioritized_csv(file).map_err(|e| HarnessError::new(Phase::Prioritize, e))?;
            let sel = select_with_policy(&suite, budget, ctx.plan.selection);
            let (csv_path, w) = ctx.create("selection.csv")?;
            stage(Phase::Prioritize, write_selection_csv(&sel, w))?;
            let (ids_path, mut w) = ctx.create("selected.txt")?;
            write_id_list(sel.selected.iter().map(|t| t.test_id), &mut w)?;
            w.flush()?;
            println!(
                "selected {} of {} tests, {:.3} s of a {:.3} s budget ({} policy); wrote {} and {}",
                sel.selected.len(),
                suite.len(),
                sel.used_s,
                sel.budget_s,
                ctx.plan.selection,
                csv_path.display(),
                ids_path.display()
            );
        }
        Command::Evaluate { input, order, cycle } => {
            let ds = ctx.load(&input)?;
            let log = ds
                .cycles()
                .iter()
                .find(|c| c.cycle_id == cycle)
                .ok_or_else(|| CliError::Input(format!("cycle {cycle} is not in the log")))?;
            let ids = read_order(&order)?;
            evaluate(log, &ids)?;
        }
        Command::Replay { input, profile } => {
            if !input.is_file() {
                return Err(CliError::Input(format!("{} is not a readable file", input.display())));
            }
            let report = run_pipeline(&input, &ctx.schema()?, &ctx.plan)?;
            let reference = profile.map(Profile::reference_effectiveness);
            print!("{}", format_replay(&report, reference));
            stage(Phase::Evaluate, write_replay(&report, &ctx.out_dir, reference))?;
            println!("wrote reports to {}", ctx.out_dir.display());
        }
        Command::HistoryStudy { inputs } => {
            let mut studies = Vec::new();
            for input in &inputs {
                let ds = ctx.load(input)?;
                let study = history_length_study(&ds, &ctx.plan)?;
                print!("{}", format_study(&study));
                studies.push(study);
            }
            let (path, w) = ctx.create("history_study.csv")?;
            stage(Phase::Evaluate, write_study_csv(&studies, w))?;
            println!("wrote {}", path.display());
        }
        Command::Synth {
            profile,
            test_fraction,
            with_priorities,
            output,
        } => {
            let cfg = profile.config().with_test_fraction(test_fraction);
            let mut cycles = generate(&cfg, ctx.plan.seed).map_err(CliError::Input)?;
            if with_priorities {
                let scheme = stage(Phase::Label, ctx.plan.weights.scheme(ctx.plan.window_len))?;
                attach_rocket_priorities(&mut cycles, &scheme);
            }
            let path = match output {
                Some(p) => {
                    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                        fs::create_dir_all(dir)?;
                    }
                    p
                }
                None => ctx.create(&format!("{profile}.csv"))?.0,
            };
            let file = File::create(&path).map_err(|e| CliError::Input(format!("cannot create {}: {e}", path.display())))?;
            stage(Phase::Ingest, write_csv(&cycles, BufWriter::new(file)))?;
            let s = summarize(&cycles);
            println!(
                "{profile}: {} cycles, {} tests, {} executions, {:.4} failed; wrote {}",
                s.cycles,
                s.tests,
                s.executions,
                s.fail_rate,
                path.display()
            );
        }
        Command::CompareTruth { input, model } => {
            let ds = ctx.load(&input)?;
            let model = model.map(load_model).transpose()?;
            let scheme = stage(Phase::Label, ctx.plan.weights.scheme(ctx.plan.window_len))?;
            let cmp = compare_against_ground_truth(&ds, &scheme, model.as_ref())?;
            print!("{}", format_truth(&cmp));
            let (path, w) = ctx.create("truth.csv")?;
            stage(Phase::Evaluate, write_truth_csv(&cmp, w))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn cycles_through(ds: &Dataset, through: Option<u32>) -> Result<Vec<&CycleLog>, CliError> {
    let cycles: Vec<&CycleLog> = ds.cycles().iter().filter(|c| through.map_or(true, |t| c.cycle_id <= t)).collect();
    if cycles.is_empty() {
        return Err(CliError::Input("no cycles at or before the requested cut".into()));
    }
    Ok(cycles)
}

fn suite_matrix(ds: &Dataset, cycle: Option<u32>, window: usize) -> Result<StatusMatrix, CliError> {
    use deeporder::timing::Phase;
    match cycle {
        Some(c) => {
            let log = ds
                .cycles()
                .iter()
                .find(|l| l.cycle_id == c)
                .ok_or_else(|| CliError::Input(format!("cycle {c} is not in the log")))?;
            let ids: Vec<TestId> = log.records.iter().map(|r| r.test_id).collect();
            stage(Phase::Features, ds.index().matrix_for(&ids, c.saturating_sub(1), window))
        }
        None => {
            let last = *ds.cycle_ids().last().ok_or_else(|| CliError::Input("the log has no cycles".into()))?;
            stage(Phase::Features, ds.index().matrix(last, window))
        }
    }
}

fn model_priorities(model: &TrainedModel, matrix: &StatusMatrix) -> Result<Vec<f64>, CliError> {
    let vectors = extract_with(matrix, &model.normalizer_for(matrix));
    let raw = stage(deeporder::timing::Phase::Prioritize, model.predict(&vectors))?;
    Ok(raw.into_iter().map(|p| p.clamp(0.0, 1.0)).collect())
}

fn print_top(suite: &PrioritizedSuite, n: usize) {
    let rows: Vec<Vec<String>> = suite
        .tests()
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, t)| vec![(i + 1).to_string(), t.test_id.to_string(), format!("{:.6}", t.priority), format!("{:.2}", t.mean_duration_s)])
        .collect();
    print!("{}", table(&["rank", "test_id", "priority", "mean_duration_s"], &rows));
}

/// Accepts a bare id list or a CSV whose header has a `test_id` column.
fn read_order(path: &Path) -> Result<Vec<TestId>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let column = match lines.peek() {
        Some(first) if first.split(',').any(|c| c.trim() == "test_id") => {
            let col = first.split(',').position(|c| c.trim() == "test_id").expect("checked above");
            lines.next();
            col
        }
        _ => 0,
    };
    lines
        .enumerate()
        .map(|(i, line)| {
            let cell = line.split(',').nth(column).unwrap_or("").trim();
            cell.parse()
                .map(TestId)
                .map_err(|_| CliError::Input(format!("{}: line {}: `{cell}` is not a test id", path.display(), i + 1)))
        })
        .collect()
}

fn evaluate(log: &CycleLog, order: &[TestId]) -> Result<(), CliError> {
    let mut executed = Vec::new();
    let mut missing = 0usize;
    for id in order {
        match log.records.iter().find(|r| r.test_id == *id) {
            Some(r) => executed.push(ExecutedTest {
                verdict: r.verdict,
                duration_s: r.duration_s,
            }),
            None => missing += 1,
        }
    }
    if missing > 0 {
        warn!("{missing} ordered tests did not run in cycle {}", log.cycle_id);
    }
    let faults = log.failure_count();
    let outcome = CycleOutcome::new(executed, faults).map_err(|e| HarnessError::new(deeporder::timing::Phase::Evaluate, e))?;
    info!("{} of {} faults reached", outcome.detected_faults(), faults);
    let t = time_metrics(&outcome);
    let rows = vec![
        vec!["tests ordered".into(), outcome.executed().len().to_string()],
        vec!["tests in cycle".into(), log.records.len().to_string()],
        vec!["faults in cycle".into(), faults.to_string()],
        vec!["faults detected".into(), outcome.detected_faults().to_string()],
        vec!["apfd".into(), apfd(&outcome).to_string()],
        vec!["napfd".into(), napfd(&outcome).to_string()],
        vec!["first fault s".into(), t.first.to_string()],
        vec!["last fault s".into(), t.last.to_string()],
        vec!["mean fault s".into(), t.average.to_string()],
    ];
    print!("{}", table(&["cycle", &log.cycle_id.to_string()], &rows));
    Ok(())
}

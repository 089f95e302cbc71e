//! Synthetic CI logs shaped like three well-known industrial datasets.
//!
//! Each test follows two independent two-state Markov chains. The first
//! decides whether the test is scheduled in a cycle. It is sticky, so tests
//! run in streaks. The second is a latent fault: a test enters the faulty
//! state with its own propensity, stays there with a fixed persistence, and
//! fails every execution while faulty. A small flake probability adds
//! isolated failures. Propensities come from a few tiers that are scaled so
//! the expected failure share of executions matches the profile.

use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::history::{CycleLog, ExecutionRecord, TestId, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    PaintControl,
    IofRol,
    Gsdtsr,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::PaintControl, Profile::IofRol, Profile::Gsdtsr];

    pub fn config(self) -> SynthConfig {
        let base = SynthConfig::default();
        match self {
            Profile::PaintControl => SynthConfig {
                tests: 89,
                cycles: 352,
                exec_rate: 0.82,
                fail_rate: 0.19,
                duration_median_s: 40.0,
                ..base
            },
            Profile::IofRol => SynthConfig {
                tests: 1941,
                cycles: 320,
                exec_rate: 0.049,
                fail_rate: 0.28,
                exec_stickiness: 0.8,
                duration_median_s: 60.0,
                ..base
            },
            Profile::Gsdtsr => SynthConfig {
                tests: 5555,
                cycles: 336,
                exec_rate: 0.675,
                fail_rate: 0.0025,
                duration_median_s: 2.0,
                ..base
            },
        }
    }

    /// Published effectiveness for the real dataset, as `(APFD, NAPFD)`.
    pub fn reference_effectiveness(self) -> (f64, f64) {
        match self {
            Profile::PaintControl => (0.76, 0.52),
            Profile::IofRol => (0.67, 0.56),
            Profile::Gsdtsr => (0.94, 0.79),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::PaintControl => "paint-control",
            Profile::IofRol => "iofrol",
            Profile::Gsdtsr => "gsdtsr",
        })
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', '/'], "-").as_str() {
            "paint-control" | "paintcontrol" => Ok(Profile::PaintControl),
            "iofrol" | "iof-rol" => Ok(Profile::IofRol),
            "gsdtsr" => Ok(Profile::Gsdtsr),
            other => Err(format!("unknown profile `{other}` (expected paint-control, iofrol or gsdtsr)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub tests: usize,
    pub cycles: u32,
    /// Long-run share of cycles in which a test is scheduled.
    pub exec_rate: f64,
    /// 0 gives independent scheduling, values near 1 give long streaks.
    pub exec_stickiness: f64,
    /// Target share of executions that fail.
    pub fail_rate: f64,
    /// Probability that a faulty test is still faulty in the next cycle.
    pub fault_persistence: f64,
    /// Share of `fail_rate` spent on isolated flaky failures.
    pub flaky_share: f64,
    /// Tier weights and relative propensities of the fault chain.
    pub tiers: Vec<(f64, f64)>,
    pub duration_median_s: f64,
    /// Log-space spread of per-test mean durations.
    pub duration_spread: f64,
    /// Log-space spread of one execution around its test's mean.
    pub duration_jitter: f64,
    /// Keep this share of the tests (1 keeps the full suite).
    pub test_fraction: f64,
    pub start: NaiveDateTime,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            tests: 100,
            cycles: 100,
            exec_rate: 0.8,
            exec_stickiness: 0.6,
            fail_rate: 0.1,
            fault_persistence: 0.7,
            flaky_share: 0.05,
            tiers: vec![(0.35, 0.05), (0.4, 1.0), (0.25, 4.0)],
            duration_median_s: 30.0,
            duration_spread: 1.0,
            duration_jitter: 0.15,
            test_fraction: 1.0,
            start: NaiveDate::from_ymd_opt(2016, 1, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid date"),
        }
    }
}

impl SynthConfig {
    pub fn with_test_fraction(mut self, f: f64) -> Self {
        self.test_fraction = f;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64, lo_open: bool| {
            let ok = if lo_open { v > 0.0 && v <= 1.0 } else { (0.0..1.0).contains(&v) };
            if ok {
                Ok(())
            } else {
                Err(format!("{name} out of range: {v}"))
            }
        };
        unit("exec_rate", self.exec_rate, true)?;
        unit("exec_stickiness", self.exec_stickiness, false)?;
        unit("fail_rate", self.fail_rate, true)?;
        unit("fault_persistence", self.fault_persistence, false)?;
        unit("flaky_share", self.flaky_share, false)?;
        unit("test_fraction", self.test_fraction, true)?;
        if self.tests == 0 || self.cycles == 0 {
            return Err("need at least one test and one cycle".into());
        }
        if self.tiers.is_empty() || self.tiers.iter().any(|&(w, r)| !(w > 0.0) || !(r >= 0.0)) {
            return Err("tiers need positive weights and non-negative propensities".into());
        }
        if !(self.duration_median_s > 0.0) || self.duration_spread < 0.0 || self.duration_jitter < 0.0 {
            return Err("duration parameters must be positive".into());
        }
        Ok(())
    }

    fn suite_size(&self) -> usize {
        ((self.tests as f64 * self.test_fraction).round() as usize).max(1)
    }

    /// Expected long-run fault share at propensity scale `s`.
    fn expected_fault_share(&self, s: f64) -> f64 {
        let total: f64 = self.tiers.iter().map(|t| t.0).sum();
        let leave = 1.0 - self.fault_persistence;
        self.tiers
            .iter()
            .map(|&(w, r)| {
                let enter = (r * s).min(1.0);
                w / total * enter / (enter + leave)
            })
            .sum()
    }

    /// Propensity scale whose fault share matches the non-flaky part of `fail_rate`.
    fn propensity_scale(&self) -> f64 {
        let target = self.fail_rate * (1.0 - self.flaky_share);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while self.expected_fault_share(hi) < target && hi < 1e6 {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.expected_fault_share(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

struct TestModel {
    id: TestId,
    propensity: f64,
    mean_duration: f64,
    scheduled: bool,
    faulty: bool,
}

pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<Vec<CycleLog>, String> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = cfg.propensity_scale();
    let tier_total: f64 = cfg.tiers.iter().map(|t| t.0).sum();
    let durations = LogNormal::new(cfg.duration_median_s.ln(), cfg.duration_spread).map_err(|e| e.to_string())?;
    let jitter = LogNormal::new(0.0, cfg.duration_jitter).map_err(|e| e.to_string())?;

    let pi = cfg.exec_rate;
    let stay_on = pi + cfg.exec_stickiness * (1.0 - pi);
    let turn_on = pi * (1.0 - cfg.exec_stickiness);
    let leave_fault = 1.0 - cfg.fault_persistence;
    let flake = cfg.fail_rate * cfg.flaky_share;

    let mut tests: Vec<TestModel> = (0..cfg.suite_size())
        .map(|i| {
            let mut pick = rng.random::<f64>() * tier_total;
            let mut rel = cfg.tiers[cfg.tiers.len() - 1].1;
            for &(w, r) in &cfg.tiers {
                if pick < w {
                    rel = r;
                    break;
                }
                pick -= w;
            }
            let propensity = (rel * scale).min(1.0);
            let stationary = propensity / (propensity + leave_fault);
            TestModel {
                id: TestId(1000 + i as u64),
                propensity,
                mean_duration: durations.sample(&mut rng),
                scheduled: rng.random_bool(pi),
                faulty: propensity > 0.0 && rng.random_bool(stationary.min(1.0)),
            }
        })
        .collect();

    let mut cycles = Vec::with_capacity(cfg.cycles as usize);
    for c in 1..=cfg.cycles {
        let day = cfg.start + Duration::days(i64::from(c) - 1);
        let mut records = Vec::new();
        for t in tests.iter_mut() {
            t.scheduled = rng.random_bool(if t.scheduled { stay_on } else { turn_on });
            t.faulty = if t.faulty {
                !rng.random_bool(leave_fault)
            } else {
                rng.random_bool(t.propensity)
            };
        }
        if !tests.iter().any(|t| t.scheduled) {
            let i = rng.random_range(0..tests.len());
            tests[i].scheduled = true;
        }
        for t in tests.iter().filter(|t| t.scheduled) {
            let failed = t.faulty || rng.random_bool(flake);
            let duration_s = (t.mean_duration * jitter.sample(&mut rng) * 1000.0).round() / 1000.0;
            let offset = rng.random_range(8 * 3600..20 * 3600);
            records.push(ExecutionRecord {
                test_id: t.id,
                test_name: format!("suite.case_{}", t.id.0),
                duration_s,
                last_run: day + Duration::seconds(offset),
                verdict: if failed { Verdict::Failed } else { Verdict::Passed },
                cycle_id: c,
                calc_prio: None,
            });
        }
        cycles.push(CycleLog { cycle_id: c, records });
    }
    Ok(cycles)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSummary {
    pub cycles: usize,
    pub tests: usize,
    pub executions: usize,
    pub fail_rate: f64,
    pub failing_cycles: usize,
}

pub fn summarize(cycles: &[CycleLog]) -> LogSummary {
    let mut ids = std::collections::HashSet::new();
    let mut executions = 0;
    let mut failures = 0;
    for r in cycles.iter().flat_map(|c| &c.records) {
        ids.insert(r.test_id);
        executions += 1;
        failures += usize::from(r.verdict.is_failure());
    }
    LogSummary {
        cycles: cycles.len(),
        tests: ids.len(),
        executions,
        fail_rate: if executions == 0 { 0.0 } else { failures as f64 / executions as f64 },
        failing_cycles: cycles.iter().filter(|c| c.failure_count() > 0).count(),
    }
}

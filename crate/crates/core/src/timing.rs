//! Phase timing for pipeline runs.
//!
//! The harness records start and stop events per phase. [`stopwatch_metrics`]
//! folds an event log into per-phase wall-clock totals and the three summary
//! figures: processing time (everything up to and including validation),
//! ranking time, and total time.

use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Ingest,
    Features,
    Label,
    Augment,
    Train,
    Validate,
    Prioritize,
    Evaluate,
    /// Encloses the whole run.
    Total,
}

impl Phase {
    pub const ALL: [Phase; 9] = [
        Phase::Ingest,
        Phase::Features,
        Phase::Label,
        Phase::Augment,
        Phase::Train,
        Phase::Validate,
        Phase::Prioritize,
        Phase::Evaluate,
        Phase::Total,
    ];

    /// Counted towards processing time.
    pub fn is_processing(self) -> bool {
        matches!(
            self,
            Phase::Ingest | Phase::Features | Phase::Label | Phase::Augment | Phase::Train | Phase::Validate
        )
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Ingest => "ingest",
            Phase::Features => "features",
            Phase::Label => "label",
            Phase::Augment => "augment",
            Phase::Train => "train",
            Phase::Validate => "validate",
            Phase::Prioritize => "prioritize",
            Phase::Evaluate => "evaluate",
            Phase::Total => "total",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Start,
    Stop,
}

/// One event, `at` measured from the start of the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseEvent {
    pub phase: Phase,
    pub kind: EventKind,
    pub at: Duration,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimingError {
    #[error("phase `{phase}` stopped without being started")]
    StopWithoutStart { phase: Phase },
    #[error("phase `{phase}` started twice without a stop")]
    DoubleStart { phase: Phase },
    #[error("phase `{phase}` was never stopped")]
    NeverStopped { phase: Phase },
    #[error("events for `{phase}` go backwards in time")]
    NonMonotonic { phase: Phase },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseTimes {
    per_phase: [Duration; 9],
    /// Processing time: ingest through validation.
    pub pt: Duration,
    /// Ranking time.
    pub rt: Duration,
    /// The `Total` span if one was recorded, else first to last event.
    pub tt: Duration,
}

impl PhaseTimes {
    pub fn phase(&self, phase: Phase) -> Duration {
        self.per_phase[phase.index()]
    }

    /// Charges a span measured outside the event log, such as a shared load.
    pub fn add_span(&mut self, phase: Phase, d: Duration) {
        self.per_phase[phase.index()] += d;
        if phase.is_processing() {
            self.pt += d;
        } else if phase == Phase::Prioritize {
            self.rt += d;
        }
        self.tt += d;
    }

    pub fn add(&mut self, other: &PhaseTimes) {
        for (a, b) in self.per_phase.iter_mut().zip(other.per_phase) {
            *a += b;
        }
        self.pt += other.pt;
        self.rt += other.rt;
        self.tt += other.tt;
    }
}

pub fn stopwatch_metrics(events: &[PhaseEvent]) -> Result<PhaseTimes, TimingError> {
    let mut open: [Option<Duration>; 9] = [None; 9];
    let mut times = PhaseTimes::default();
    for e in events {
        let slot = &mut open[e.phase.index()];
        match (e.kind, *slot) {
            (EventKind::Start, None) => *slot = Some(e.at),
            (EventKind::Start, Some(_)) => return Err(TimingError::DoubleStart { phase: e.phase }),
            (EventKind::Stop, None) => return Err(TimingError::StopWithoutStart { phase: e.phase }),
            (EventKind::Stop, Some(start)) => {
                let span = e.at.checked_sub(start).ok_or(TimingError::NonMonotonic { phase: e.phase })?;
                times.per_phase[e.phase.index()] += span;
                *slot = None;
            }
        }
    }
    if let Some(p) = Phase::ALL.iter().find(|p| open[p.index()].is_some()) {
        return Err(TimingError::NeverStopped { phase: *p });
    }
    times.pt = Phase::ALL.iter().filter(|p| p.is_processing()).map(|&p| times.phase(p)).sum();
    times.rt = times.phase(Phase::Prioritize);
    let has_total = events.iter().any(|e| e.phase == Phase::Total);
    times.tt = if has_total {
        times.phase(Phase::Total)
    } else {
        let first = events.iter().map(|e| e.at).min().unwrap_or_default();
        let last = events.iter().map(|e| e.at).max().unwrap_or_default();
        last - first
    };
    Ok(times)
}

/// Records phase events against a monotonic clock.
#[derive(Debug)]
pub struct Stopwatch {
    origin: Instant,
    events: Vec<PhaseEvent>,
}

impl Default for Stopwatch {
    fn default() -> Self {
        Self::new()
    }
}

impl Stopwatch {
    pub fn new() -> Self {
        Stopwatch {
            origin: Instant::now(),
            events: Vec::new(),
        }
    }

    fn push(&mut self, phase: Phase, kind: EventKind) {
        self.events.push(PhaseEvent {
            phase,
            kind,
            at: self.origin.elapsed(),
        });
    }

    pub fn start(&mut self, phase: Phase) {
        self.push(phase, EventKind::Start);
    }

    pub fn stop(&mut self, phase: Phase) {
        self.push(phase, EventKind::Stop);
    }

    /// Runs `f` inside a start/stop pair. The stop is recorded even if `f`
    /// returns an error.
    pub fn time<T>(&mut self, phase: Phase, f: impl FnOnce() -> T) -> T {
        self.start(phase);
        let out = f();
        self.stop(phase);
        out
    }

    pub fn events(&self) -> &[PhaseEvent] {
        &self.events
    }

    pub fn summary(&self) -> Result<PhaseTimes, TimingError> {
        stopwatch_metrics(&self.events)
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::features::NormalizerMode;
use crate::net::TrainConfig;
use crate::prioritize::SelectionPolicy;
use crate::rocket::WeightKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Rank by the trained network's predictions.
    DeepOrder,
    /// Rank by the recency-weighted failure formula.
    Rocket,
    /// Seeded shuffles, averaged over repetitions.
    Random,
    /// Keep the order in which the log lists the cycle's tests.
    Untreated,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::DeepOrder, Strategy::Rocket, Strategy::Random, Strategy::Untreated];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::DeepOrder => "deeporder",
            Strategy::Rocket => "rocket",
            Strategy::Random => "random",
            Strategy::Untreated => "untreated",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "deeporder" => Ok(Strategy::DeepOrder),
            "rocket" => Ok(Strategy::Rocket),
            "random" => Ok(Strategy::Random),
            "untreated" | "untreated-order" => Ok(Strategy::Untreated),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// Where the log is split into training and evaluation cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutPoint {
    /// The first `floor(f · cycles)` cycles train.
    Fraction(f64),
    /// Cycles with a smaller id train; this one is the first evaluated.
    Cycle(u32),
}

impl Default for CutPoint {
    fn default() -> Self {
        CutPoint::Fraction(0.8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub cut: CutPoint,
    pub window_len: usize,
    /// Windows compared by the history-length study.
    pub history_windows: Vec<usize>,
    /// Budget per cycle as a share of that cycle's total execution time.
    pub budget_fraction: f64,
    pub strategies: Vec<Strategy>,
    pub random_repetitions: usize,
    /// Retrain after every `k` evaluated cycles; `None` trains once at the cut.
    pub retrain_every: Option<usize>,
    pub seed: u64,
    pub weights: WeightKind,
    /// `None` disables augmentation.
    pub augment: Option<AugmentConfig>,
    pub train: TrainConfig,
    pub selection: SelectionPolicy,
    /// Share of training rows held out for per-epoch validation.
    pub validation_fraction: f64,
    pub normalizer: NormalizerMode,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            cut: CutPoint::default(),
            window_len: 10,
            history_windows: vec![4, 10],
            budget_fraction: 0.5,
            strategies: Strategy::ALL.to_vec(),
            random_repetitions: 30,
            retrain_every: None,
            seed: 42,
            weights: WeightKind::Linear,
            augment: Some(AugmentConfig::default()),
            train: TrainConfig {
                batch_size: Some(32),
                ..TrainConfig::default()
            },
            selection: SelectionPolicy::default(),
            validation_fraction: 0.2,
            normalizer: NormalizerMode::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), String> {
        if self.window_len == 0 || self.history_windows.contains(&0) {
            return Err("window lengths must be at least 1".into());
        }
        if !(self.budget_fraction >= 0.0 && self.budget_fraction.is_finite()) {
            return Err(format!("budget fraction must be non-negative, got {}", self.budget_fraction));
        }
        if self.strategies.is_empty() {
            return Err("no strategies selected".into());
        }
        if self.random_repetitions == 0 {
            return Err("random_repetitions must be at least 1".into());
        }
        if self.retrain_every == Some(0) {
            return Err("retrain_every must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(format!("validation_fraction must lie in [0, 1), got {}", self.validation_fraction));
        }
        if let CutPoint::Fraction(f) = self.cut {
            if !(f > 0.0 && f < 1.0) {
                return Err(format!("cut fraction must lie in (0, 1), got {f}"));
            }
        }
        self.weights.scheme(self.window_len).map_err(|e| e.to_string())?;
        if let Some(a) = &self.augment {
            a.validate().map_err(|e| e.to_string())?;
        }
        self.train.validate()
    }

    /// Index into `cycle_ids` of the first evaluated cycle.
    pub fn cut_index(&self, cycle_ids: &[u32]) -> Result<usize, String> {
        let n = cycle_ids.len();
        let idx = match self.cut {
            CutPoint::Fraction(f) => (f * n as f64).floor() as usize,
            CutPoint::Cycle(c) => cycle_ids.partition_point(|&id| id < c),
        };
        if idx == 0 || idx >= n {
            return Err(format!("cut leaves no training or no evaluation cycles ({n} cycles, cut at {idx})"));
        }
        Ok(idx)
    }

    pub fn uses(&self, s: Strategy) -> bool {
        self.strategies.contains(&s)
    }

    /// Independent seed for one consumer of randomness.
    pub(crate) fn derived_seed(&self, stream: u64) -> u64 {
        // splitmix64 finalizer
        let mut z = self.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

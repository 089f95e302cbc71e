//! TOML run configuration.
//!
//! Every key is optional; anything left out keeps the [`ExperimentPlan`]
//! default. A file looks like this:
//!
//! ```toml
//! seed = 7
//!
//! [plan]
//! cut_fraction = 0.8
//! window_len = 10
//! strategies = ["deeporder", "random"]
//! selection = "prefix"
//!
//! [rocket]
//! weights = "linear"
//!
//! [augment]
//! enabled = true
//! k_neighbors = 5
//!
//! [train]
//! epochs_max = 500
//! batch_size = 32
//! ```

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentConfig;
use crate::features::NormalizerMode;
use crate::harness::{CutPoint, ExperimentPlan, Strategy};
use crate::prioritize::SelectionPolicy;
use crate::rocket::WeightKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub plan: PlanSection,
    pub rocket: RocketSection,
    pub augment: AugmentSection,
    /// Absent keys fall back to the plan's training defaults.
    pub train: Option<toml::Table>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub cut_fraction: Option<f64>,
    pub cut_cycle: Option<u32>,
    pub window_len: Option<usize>,
    pub history_windows: Option<Vec<usize>>,
    pub budget_fraction: Option<f64>,
    pub strategies: Option<Vec<Strategy>>,
    pub random_repetitions: Option<usize>,
    pub retrain_every: Option<usize>,
    pub selection: Option<SelectionPolicy>,
    pub validation_fraction: Option<f64>,
    pub normalizer: Option<NormalizerMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RocketSection {
    /// `"linear"` or `"geometric(r)"`.
    pub weights: Option<String>,
}

/// `enabled` (default true) plus any [`AugmentConfig`] keys.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default)]
pub struct AugmentSection {
    pub enabled: Option<bool>,
    #[serde(flatten)]
    pub settings: toml::Table,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Config::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Config, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Applies this configuration over `base` and validates the result.
    pub fn apply(&self, base: ExperimentPlan) -> Result<ExperimentPlan, ConfigError> {
        let mut plan = base;
        let p = &self.plan;
        match (p.cut_fraction, p.cut_cycle) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("set cut_fraction or cut_cycle, not both".into())),
            (Some(f), None) => plan.cut = CutPoint::Fraction(f),
            (None, Some(c)) => plan.cut = CutPoint::Cycle(c),
            (None, None) => {}
        }
        if let Some(w) = p.window_len {
            plan.window_len = w;
        }
        if let Some(ws) = &p.history_windows {
            plan.history_windows = ws.clone();
        }
        if let Some(b) = p.budget_fraction {
            plan.budget_fraction = b;
        }
        if let Some(s) = &p.strategies {
            plan.strategies = s.clone();
        }
        if let Some(r) = p.random_repetitions {
            plan.random_repetitions = r;
        }
        if p.retrain_every.is_some() {
            plan.retrain_every = p.retrain_every;
        }
        if let Some(s) = p.selection {
            plan.selection = s;
        }
        if let Some(v) = p.validation_fraction {
            plan.validation_fraction = v;
        }
        if let Some(n) = p.normalizer {
            plan.normalizer = n;
        }
        if let Some(w) = &self.rocket.weights {
            plan.weights = w.parse::<WeightKind>().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let base_augment = plan.augment.clone().unwrap_or_default();
        let augment: AugmentConfig = merge(&base_augment, &self.augment.settings)?;
        plan.augment = self.augment.enabled.unwrap_or(true).then_some(augment);
        if let Some(table) = &self.train {
            plan.train = merge(&plan.train, table)?;
        }
        if let Some(seed) = self.seed {
            plan.seed = seed;
        }
        plan.validate().map_err(ConfigError::Invalid)?;
        Ok(plan)
    }

    pub fn into_plan(self) -> Result<ExperimentPlan, ConfigError> {
        self.apply(ExperimentPlan::default())
    }
}

fn merge<T: Serialize + DeserializeOwned>(base: &T, overrides: &toml::Table) -> Result<T, ConfigError> {
    let mut table = toml::Table::try_from(base).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    for (k, v) in overrides {
        table.insert(k.clone(), v.clone());
    }
    Ok(table.try_into()?)
}

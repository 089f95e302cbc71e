//! Recency-weighted failure priority.
//!
//! A test's priority is the weighted share of recent cycles in which it
//! failed: `p = Σ_j ω_j · max(status_j, 0)`, with weights that sum to one and
//! never decrease towards the most recent cycle. Passes and not-run cycles
//! contribute nothing, so `p` lies in `[0, 1]`, reaching 1 only for a test that
//! failed in every cycle of the window.
//!
//! The same formula labels training data for the network when a dataset has
//! no ground-truth priorities.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::features::{extract_with, FeatureVector, Normalizer};
use crate::history::StatusMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum RocketError {
    #[error("window has {window} entries but the weight scheme has {weights}")]
    LengthMismatch { window: usize, weights: usize },
    #[error("invalid weight scheme: {0}")]
    InvalidScheme(String),
}

/// Per-cycle weights, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme {
    weights: Vec<f64>,
}

impl WeightScheme {
    /// Validates that weights lie in `(0, 1]`, sum to one within 1e-9 and are
    /// non-decreasing.
    pub fn new(weights: Vec<f64>) -> Result<Self, RocketError> {
        if weights.is_empty() {
            return Err(RocketError::InvalidScheme("no weights".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
            return Err(RocketError::InvalidScheme(format!("weight {w} outside (0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(RocketError::InvalidScheme(format!("weights sum to {sum}")));
        }
        if weights.windows(2).any(|p| p[1] < p[0]) {
            return Err(RocketError::InvalidScheme("weights decrease towards recent cycles".into()));
        }
        Ok(Self { weights })
    }

    /// Scales arbitrary positive weights to sum to one.
    pub fn normalized(raw: &[f64]) -> Result<Self, RocketError> {
        let sum: f64 = raw.iter().sum();
        Self::new(raw.iter().map(|w| w / sum).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `ω_j = j / Σk`.
pub fn linear_weights(m: usize) -> WeightScheme {
    assert!(m >= 1, "linear_weights needs at least one cycle");
    let total = (m * (m + 1) / 2) as f64;
    WeightScheme {
        weights: (1..=m).map(|j| j as f64 / total).collect(),
    }
}

/// `ω_j ∝ r^(m-j)`, `0 < r < 1`.
pub fn geometric_weights(m: usize, r: f64) -> Result<WeightScheme, RocketError> {
    if !(r > 0.0 && r < 1.0) {
        return Err(RocketError::InvalidScheme(format!("geometric ratio {r} outside (0, 1)")));
    }
    let raw: Vec<f64> = (1..=m).map(|j| r.powi((m - j) as i32)).collect();
    WeightScheme::normalized(&raw)
}

/// Named weight family, as written in configuration and model files.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum WeightKind {
    #[default]
    Linear,
    Geometric(f64),
}

impl WeightKind {
    pub fn scheme(&self, m: usize) -> Result<WeightScheme, RocketError> {
        match *self {
            WeightKind::Linear => Ok(linear_weights(m)),
            WeightKind::Geometric(r) => geometric_weights(m, r),
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightKind::Linear => f.write_str("linear"),
            WeightKind::Geometric(r) => write!(f, "geometric({r})"),
        }
    }
}

impl FromStr for WeightKind {
    type Err = RocketError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "linear" {
            return Ok(WeightKind::Linear);
        }
        let inner = s
            .strip_prefix("geometric(")
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(|| RocketError::InvalidScheme(format!("unknown weight scheme `{s}`")))?;
        let r: f64 = inner
            .trim()
            .parse()
            .map_err(|_| RocketError::InvalidScheme(format!("bad geometric ratio `{inner}`")))?;
        // validate the ratio
        geometric_weights(1, r)?;
        Ok(WeightKind::Geometric(r))
    }
}

pub fn priority(window: &[i8], scheme: &WeightScheme) -> Result<f64, RocketError> {
    if window.len() != scheme.len() {
        return Err(RocketError::LengthMismatch {
            window: window.len(),
            weights: scheme.len(),
        });
    }
    Ok(window
        .iter()
        .zip(&scheme.weights)
        .map(|(&s, &w)| w * f64::from(s.max(0)))
        .sum())
}

/// Sets each vector's label to the priority of its window.
pub fn label_vectors(vectors: &mut [FeatureVector], scheme: &WeightScheme) -> Result<(), RocketError> {
    for v in vectors {
        v.label_priority = Some(priority(&v.es_window, scheme)?);
    }
    Ok(())
}

/// Extracts features from `matrix` (normalized over itself) and labels them.
pub fn label_dataset(matrix: &StatusMatrix, scheme: &WeightScheme) -> Result<Vec<FeatureVector>, RocketError> {
    if matrix.window_len() != scheme.len() {
        return Err(RocketError::LengthMismatch {
            window: matrix.window_len(),
            weights: scheme.len(),
        });
    }
    let mut vectors = extract_with(matrix, &Normalizer::fit(matrix));
    label_vectors(&mut vectors, scheme)?;
    Ok(vectors)
}

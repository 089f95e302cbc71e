//! Learned test-case prioritization for continuous integration.
//!
//! The crate turns a CI execution log into per-test feature vectors, labels
//! them with a recency-weighted failure priority, trains a small Mish MLP to
//! reproduce those priorities, and uses the predictions to order and
//! budget-select the next test suite. The [`metrics`] module scores orderings
//! (APFD, NAPFD, time-to-fault) and [`harness`] replays whole logs to compare
//! strategies.
//!
//! ```
//! use deeporder::rocket::{linear_weights, priority};
//!
//! // failed two cycles ago and in the last cycle, passed in between
//! let p = priority(&[1, 0, 1], &linear_weights(3)).unwrap();
//! assert!((p - 4.0 / 6.0).abs() < 1e-12);
//! ```

pub mod augment;
pub mod config;
pub mod features;
pub mod harness;
pub mod history;
pub mod metrics;
pub mod net;
pub mod prioritize;
pub mod rocket;
pub mod synth;
pub mod timing;

pub use features::{FeatureVector, NormalizerMode};
pub use history::{CycleLog, ExecutionRecord, StatusMatrix, TestId, Verdict};
pub use net::{Network, TrainedModel};

#[cfg(doctest)]
mod book;

//! Rebalancing of a labeled feature set towards failing tests.
//!
//! Vectors are split into a failed bin (most recent executed status is a
//! failure) and a passed bin. The passed bin can be thinned at random. The
//! failed bin is grown with synthetic vectors until the failed share reaches
//! the target. Each synthetic vector starts from a seed in the failed bin and
//! one of its `k` nearest neighbours. A neighbour within half the median of the
//! seed's neighbour distances is interpolated towards. A farther neighbour
//! means the seed sits in a sparse region, and it is jittered with Gaussian
//! noise instead.

use log::warn;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::history::{TestId, FAIL};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("invalid augment config: {0}")]
    InvalidConfig(String),
    #[error("vector for test {0} carries no label")]
    Unlabeled(TestId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub k_neighbors: usize,
    pub target_fail_ratio: f64,
    /// Gaussian noise std as a fraction of each feature's std over the failed bin.
    pub noise_scale: f64,
    /// Fraction of the passed bin kept by under-sampling; 1 keeps everything.
    pub passed_keep_fraction: f64,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            k_neighbors: 5,
            target_fail_ratio: 0.05,
            noise_scale: 0.02,
            passed_keep_fraction: 1.0,
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::InvalidConfig(m));
        if self.k_neighbors == 0 {
            return bad("k_neighbors must be at least 1".into());
        }
        if !(self.target_fail_ratio > 0.0 && self.target_fail_ratio < 1.0) {
            return bad(format!("target_fail_ratio must lie in (0, 1), got {}", self.target_fail_ratio));
        }
        if !(self.noise_scale > 0.0) {
            return bad(format!("noise_scale must be positive, got {}", self.noise_scale));
        }
        if !(self.passed_keep_fraction > 0.0 && self.passed_keep_fraction <= 1.0) {
            return bad(format!("passed_keep_fraction must lie in (0, 1], got {}", self.passed_keep_fraction));
        }
        Ok(())
    }
}

pub fn is_failed(v: &FeatureVector) -> bool {
    v.last_executed_status() == Some(FAIL)
}

/// Partitions into `(failed, passed)`, keeping input order within each bin.
pub fn split_bins(vectors: &[FeatureVector]) -> (Vec<FeatureVector>, Vec<FeatureVector>) {
    vectors.iter().cloned().partition(is_failed)
}

fn label(v: &FeatureVector) -> f64 {
    v.label_priority.unwrap_or(0.0)
}

fn continuous(v: &FeatureVector) -> [f64; 2] {
    [v.duration_norm, v.last_run_norm]
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Interpolates `(1 − u)·seed + u·neighbor` on duration, last run and label.
/// Discrete features come from whichever parent lies nearer to the new point
/// in the continuous coordinates, the seed on a tie.
pub fn interpolate_at(seed: &FeatureVector, neighbor: &FeatureVector, u: f64) -> FeatureVector {
    let lerp = |a: f64, b: f64| (1.0 - u) * a + u * b;
    let mut out = seed.clone();
    out.duration_norm = lerp(seed.duration_norm, neighbor.duration_norm);
    out.last_run_norm = lerp(seed.last_run_norm, neighbor.last_run_norm);
    out.label_priority = Some(lerp(label(seed), label(neighbor)));
    let point = continuous(&out);
    if euclidean(&point, &continuous(neighbor)) < euclidean(&point, &continuous(seed)) {
        out.es_window.clone_from(&neighbor.es_window);
        out.distance = neighbor.distance;
        out.change_in_status = neighbor.change_in_status;
    }
    out.synthetic = true;
    out
}

pub fn smoter_interpolate<R: Rng + ?Sized>(seed: &FeatureVector, neighbor: &FeatureVector, rng: &mut R) -> FeatureVector {
    let u: f64 = rng.random();
    interpolate_at(seed, neighbor, u)
}

/// Per-feature standard deviations used to size the Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSpread {
    pub duration: f64,
    pub last_run: f64,
    pub label: f64,
}

impl FeatureSpread {
    /// Population standard deviation of each continuous feature.
    pub fn of(vectors: &[FeatureVector]) -> Self {
        let n = vectors.len().max(1) as f64;
        let std = |f: &dyn Fn(&FeatureVector) -> f64| {
            let mean = vectors.iter().map(f).sum::<f64>() / n;
            (vectors.iter().map(|v| (f(v) - mean).powi(2)).sum::<f64>() / n).sqrt()
        };
        FeatureSpread {
            duration: std(&|v| v.duration_norm),
            last_run: std(&|v| v.last_run_norm),
            label: std(&label),
        }
    }
}

/// Adds `N(0, (noise_scale·std)²)` to each continuous feature and the label,
/// clamping every result to `[0, 1]`.
pub fn gaussian_perturb<R: Rng + ?Sized>(
    seed: &FeatureVector,
    spread: &FeatureSpread,
    noise_scale: f64,
    rng: &mut R,
) -> FeatureVector {
    let mut jitter = |x: f64, std: f64| {
        let sigma = noise_scale * std;
        if sigma > 0.0 && sigma.is_finite() {
            // sigma is positive and finite, so construction cannot fail
            let d = Normal::new(0.0, sigma).expect("valid normal");
            (x + d.sample(rng)).clamp(0.0, 1.0)
        } else {
            x
        }
    };
    let mut out = seed.clone();
    out.duration_norm = jitter(seed.duration_norm, spread.duration);
    out.last_run_norm = jitter(seed.last_run_norm, spread.last_run);
    out.label_priority = Some(jitter(label(seed), spread.label));
    out.synthetic = true;
    out
}

/// Why augmentation left the input as it was.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unchanged {
    TooFewFailed(usize),
    AlreadyBalanced(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    /// Originals (failed and kept passed, in input order) followed by synthetic vectors.
    pub vectors: Vec<FeatureVector>,
    pub interpolated: usize,
    pub perturbed: usize,
    pub removed_passed: usize,
    pub unchanged: Option<Unchanged>,
}

impl AugmentOutcome {
    pub fn fail_ratio(&self) -> f64 {
        fail_ratio(&self.vectors)
    }
}

pub fn fail_ratio(vectors: &[FeatureVector]) -> f64 {
    if vectors.is_empty() {
        return 0.0;
    }
    vectors.iter().filter(|v| is_failed(v)).count() as f64 / vectors.len() as f64
}

/// Synthetic count `s` with `(f + s) / (f + s + p) >= t`.
fn oversample_count(failed: usize, passed: usize, t: f64) -> usize {
    let (f, p) = (failed as f64, passed as f64);
    let mut s = ((t * (f + p) - f) / (1.0 - t)).ceil().max(0.0) as usize;
    while ((failed + s) as f64) / ((failed + s + passed) as f64) < t {
        s += 1;
    }
    s
}

struct Neighbors {
    /// Indices into the failed bin, nearest first.
    idx: Vec<usize>,
    dist: Vec<f64>,
    threshold: f64,
}

fn neighbors_of(i: usize, points: &[Vec<f64>], k: usize) -> Neighbors {
    let mut cand: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, p)| (euclidean(&points[i], p), j))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(k);
    let dist: Vec<f64> = cand.iter().map(|c| c.0).collect();
    let mid = dist.len() / 2;
    let median = if dist.len() % 2 == 1 { dist[mid] } else { (dist[mid - 1] + dist[mid]) / 2.0 };
    Neighbors {
        idx: cand.iter().map(|c| c.1).collect(),
        dist,
        threshold: median / 2.0,
    }
}

pub fn augment(vectors: &[FeatureVector], cfg: &AugmentConfig) -> Result<AugmentOutcome, AugmentError> {
    cfg.validate()?;
    if let Some(v) = vectors.iter().find(|v| v.label_priority.is_none()) {
        return Err(AugmentError::Unlabeled(v.test_id));
    }
    let unchanged = |why| AugmentOutcome {
        vectors: vectors.to_vec(),
        interpolated: 0,
        perturbed: 0,
        removed_passed: 0,
        unchanged: Some(why),
    };
    let failed: Vec<&FeatureVector> = vectors.iter().filter(|v| is_failed(v)).collect();
    if failed.len() < 2 {
        warn!("augmentation skipped: only {} failed vector(s)", failed.len());
        return Ok(unchanged(Unchanged::TooFewFailed(failed.len())));
    }
    let ratio = fail_ratio(vectors);
    if ratio >= cfg.target_fail_ratio {
        return Ok(unchanged(Unchanged::AlreadyBalanced(ratio)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let passed_total = vectors.len() - failed.len();
    let keep = ((passed_total as f64) * cfg.passed_keep_fraction).round() as usize;
    let mut kept = vec![true; vectors.len()];
    if keep < passed_total {
        let passed_pos: Vec<usize> = (0..vectors.len()).filter(|&i| !is_failed(&vectors[i])).collect();
        kept.iter_mut().zip(vectors).for_each(|(k, v)| *k = is_failed(v));
        for j in index::sample(&mut rng, passed_total, keep) {
            kept[passed_pos[j]] = true;
        }
    }
    let mut out: Vec<FeatureVector> = vectors
        .iter()
        .zip(&kept)
        .filter(|(_, &k)| k)
        .map(|(v, _)| v.clone())
        .collect();

    let s = oversample_count(failed.len(), keep, cfg.target_fail_ratio);
    let points: Vec<Vec<f64>> = failed.iter().map(|v| v.to_inputs()).collect();
    let spread = FeatureSpread::of(&failed.iter().map(|&v| v.clone()).collect::<Vec<_>>());
    let k = cfg.k_neighbors.min(failed.len() - 1);
    let mut cache: Vec<Option<Neighbors>> = (0..failed.len()).map(|_| None).collect();
    let (mut interpolated, mut perturbed) = (0, 0);
    for n in 0..s {
        // walk the seeds round-robin so every failed vector contributes evenly
        let i = n % failed.len();
        let nb = cache[i].get_or_insert_with(|| neighbors_of(i, &points, k));
        let j = rng.random_range(0..nb.idx.len());
        let synthetic = if nb.dist[j] <= nb.threshold {
            interpolated += 1;
            smoter_interpolate(failed[i], failed[nb.idx[j]], &mut rng)
        } else {
            perturbed += 1;
            gaussian_perturb(failed[i], &spread, cfg.noise_scale, &mut rng)
        };
        out.push(synthetic);
    }
    Ok(AugmentOutcome {
        vectors: out,
        interpolated,
        perturbed,
        removed_passed: passed_total - keep,
        unchanged: None,
    })
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_gradients, batch_gradients_iter, mse, Gradients, NetError, Network, Sample, Scratch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Stop once the epoch's training MSE drops below this.
    pub mse_stop: f64,
    /// `None` trains full-batch; `Some(n)` shuffles and steps every `n` samples.
    pub batch_size: Option<usize>,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 1000,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            mse_stop: 1e-4,
            batch_size: None,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_eps", self.adam_eps),
            ("mse_stop", self.mse_stop),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(format!("train.{name} must be positive, got {v}"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err("adam betas must lie in [0, 1)".into());
        }
        if self.epochs_max == 0 || self.batch_size == Some(0) {
            return Err("epochs_max and batch_size must be at least 1".into());
        }
        Ok(())
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        Self {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState, cfg: &TrainConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.adam_beta1.powi(t);
    let c2 = 1.0 - cfg.adam_beta2.powi(t);
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        let groups = [
            (&mut layer.weights, &grads.weights[l], &mut state.m.weights[l], &mut state.v.weights[l]),
            (&mut layer.bias, &grads.biases[l], &mut state.m.biases[l], &mut state.v.biases[l]),
        ];
        for (params, g, m, v) in groups {
            for (((p, &g), m), v) in params.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
    /// Whether training stopped on the MSE threshold rather than the epoch cap.
    pub converged: bool,
}

impl TrainingLog {
    pub fn final_mse(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_mse)
    }

    pub fn best_mse(&self) -> Option<f64> {
        self.epochs.iter().map(|e| e.train_mse).reduce(f64::min)
    }
}

fn evaluate(net: &Network, data: &[Sample]) -> Result<f64, NetError> {
    let preds = net.predict_batch(data.iter().map(|s| s.inputs.as_slice()))?;
    let labels: Vec<f64> = data.iter().map(|s| s.label).collect();
    mse(&preds, &labels)
}

/// Trains `net` in place.
///
/// Each epoch records the training MSE (for full batch, measured before that
/// epoch's update; for mini-batches, the mean of the batch losses) and, if a
/// validation set is given, the validation MSE after the epoch.
pub fn train(net: &mut Network, data: &[Sample], validation: &[Sample], cfg: &TrainConfig) -> Result<TrainingLog, NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyTrainingSet);
    }
    if let Some(bad) = data.iter().map(|s| s.label).find(|l| !(0.0..=1.0).contains(l)) {
        return Err(NetError::LabelOutOfRange(bad));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut state = AdamState::new(net);
    let mut grads = Gradients::zeros_like(net);
    let mut scratch = Scratch::new(net);
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.epochs_max {
        let train_mse = match cfg.batch_size {
            None => {
                let loss = batch_gradients(net, data, &mut grads, &mut scratch)?;
                if loss.is_finite() && loss >= cfg.mse_stop {
                    adam_step(net, &grads, &mut state, cfg);
                }
                loss
            }
            Some(size) => {
                order.shuffle(&mut rng);
                let mut total = 0.0;
                for chunk in order.chunks(size) {
                    let samples = chunk.iter().map(|&i| &data[i]);
                    let loss = batch_gradients_iter(net, samples, chunk.len(), &mut grads, &mut scratch)?;
                    total += loss * chunk.len() as f64;
                    adam_step(net, &grads, &mut state, cfg);
                }
                total / data.len() as f64
            }
        };
        if !train_mse.is_finite() || !net.all_finite() {
            return Err(NetError::NonFiniteLoss {
                epoch,
                last_finite: log.final_mse(),
            });
        }
        let validation_mse = if validation.is_empty() {
            None
        } else {
            Some(evaluate(net, validation)?)
        };
        log.epochs.push(EpochStats {
            epoch,
            train_mse,
            validation_mse,
        });
        if train_mse < cfg.mse_stop {
            log.converged = true;
            break;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{backward, standard_dims};
    use rand::Rng;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Network::xavier(&[3, 4, 1], &mut rng).unwrap();
        let before = net.clone();
        let zero = Gradients::zeros_like(&net);
        let mut state = AdamState::new(&net);
        adam_step(&mut net, &zero, &mut state, &TrainConfig::default());
        assert_eq!(net, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction, step one is lr · g / (|g| + eps).
        for g in [0.5, -3.0, 1e-3] {
            let mut net = Network::zeros(&[1, 1]).unwrap();
            let mut grads = Gradients::zeros_like(&net);
            grads.weights[0][0] = g;
            let mut state = AdamState::new(&net);
            let cfg = TrainConfig::default();
            adam_step(&mut net, &grads, &mut state, &cfg);
            let expected = -cfg.learning_rate * g / (g.abs() + cfg.adam_eps);
            assert!((net.layers()[0].weights[0] - expected).abs() < 1e-15);
            assert!((net.layers()[0].weights[0].abs() - 0.001).abs() < 1e-7);
        }
    }

    fn random_data(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let inputs: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let label = (0.5 + 0.3 * inputs[0] - 0.2 * inputs[1] * inputs[1]).clamp(0.0, 1.0);
                Sample { inputs, label }
            })
            .collect()
    }

    #[test]
    fn identical_trajectories() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = random_data(&mut rng, 40, 5);
        let cfg = TrainConfig {
            epochs_max: 30,
            batch_size: Some(8),
            rng_seed: 4,
            ..TrainConfig::default()
        };
        let run = || {
            let mut net = Network::xavier(&standard_dims(5), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            let log = train(&mut net, &data, &[], &cfg).unwrap();
            (net, log)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn memorizes_single_point() {
        let data = vec![Sample {
            inputs: vec![0.0, 1.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.3, 0.7, 1.0, 2.0],
            label: 0.42,
        }];
        let mut net = Network::xavier(&standard_dims(14), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let cfg = TrainConfig {
            mse_stop: 1e-6,
            ..TrainConfig::default()
        };
        let log = train(&mut net, &data, &[], &cfg).unwrap();
        assert!(log.converged, "final mse {:?}", log.final_mse());
        assert!(log.epochs.len() <= 1000);
        assert!(log.epochs.iter().all(|e| e.train_mse.is_finite()));
        let p = net.predict(&data[0].inputs).unwrap();
        assert!((p - 0.42).powi(2) < 1e-6);
    }

    #[test]
    fn best_mse_not_worse_than_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = random_data(&mut rng, 64, 6);
        let val = random_data(&mut rng, 16, 6);
        let mut net = Network::xavier(&standard_dims(6), &mut rng).unwrap();
        let log = train(&mut net, &data, &val, &TrainConfig::default()).unwrap();
        let first = log.epochs[0].train_mse;
        assert!(log.best_mse().unwrap() <= first);
        assert!(log.epochs.iter().all(|e| e.validation_mse.is_some()));
        assert!(log.final_mse().unwrap() < first);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut net = Network::zeros(&[2, 1]).unwrap();
        assert!(matches!(train(&mut net, &[], &[], &TrainConfig::default()), Err(NetError::EmptyTrainingSet)));
        let bad = vec![Sample { inputs: vec![0.0, 0.0], label: 1.5 }];
        assert!(matches!(train(&mut net, &bad, &[], &TrainConfig::default()), Err(NetError::LabelOutOfRange(_))));
    }

    #[test]
    fn diverging_run_reports_non_finite_loss() {
        let mut net = Network::zeros(&[1, 1]).unwrap();
        let data = vec![Sample { inputs: vec![f64::MAX], label: 0.5 }];
        net.layers_mut()[0].weights[0] = 1.0;
        let err = train(&mut net, &data, &[], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, NetError::NonFiniteLoss { epoch: 1, last_finite: None }));
    }

    #[test]
    fn minibatch_gradient_is_mean_of_full_batch() {
        // backward over the union equals the size-weighted mean of the halves
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let net = Network::xavier(&[4, 5, 1], &mut rng).unwrap();
        let data = random_data(&mut rng, 10, 4);
        let full = backward(&net, &data).unwrap().flatten();
        let a = backward(&net, &data[..4]).unwrap().flatten();
        let b = backward(&net, &data[4..]).unwrap().flatten();
        for ((f, a), b) in full.iter().zip(&a).zip(&b) {
            assert!((f - (0.4 * a + 0.6 * b)).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { mse_stop: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: Some(0), ..Default::default() }.validate().is_err());
    }
}

//! Minibatch training of the mask estimator: joint MSE on both masks, Adam,
//! seeded shuffling, early stopping on validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{fit_normalization, TrainingExample};
use crate::error::{Error, Result};
use crate::model::{forward_batch, BatchInput, ModelWeights};
use crate::nn::layers::{update_running_stats, BATCH_NORM_MOMENTUM};
use crate::nn::{AdamConfig, AdamState, Graph, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Stop once the epoch training loss falls below this value.
    pub target_loss: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 500,
            batch_size: 8,
            learning_rate: 1e-3,
            patience: 5,
            target_loss: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    TargetReached,
    EarlyStopped,
    /// Loss or gradients became non-finite; the returned weights are the last good ones.
    Diverged,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best weights seen (lowest validation loss, or training loss without a validation set).
    pub weights: ModelWeights<f64>,
    pub history: Vec<EpochLog>,
    pub stop: StopReason,
}

impl TrainOutcome {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.history.last().map(|e| e.train_loss)
    }
}

/// `epoch,train_loss,validation_loss` with one row per epoch run.
pub fn history_csv(history: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_loss,validation_loss\n");
    for e in history {
        let v = e.validation_loss.map(|v| format!("{v:.9e}")).unwrap_or_default();
        s.push_str(&format!("{},{:.9e},{v}\n", e.epoch, e.train_loss));
    }
    s
}

fn targets(batch: &[&TrainingExample<f64>], n_bins: usize) -> Result<Tensor<f64>> {
    let mut data = Vec::with_capacity(batch.len() * 2 * n_bins);
    for ex in batch {
        data.extend_from_slice(&ex.clean_target);
        data.extend_from_slice(&ex.noise_target);
    }
    Tensor::matrix(batch.len(), 2 * n_bins, data)
}

fn batch_input(w: &ModelWeights<f64>, batch: &[&TrainingExample<f64>]) -> Result<BatchInput<f64>> {
    BatchInput::new(
        w,
        batch.iter().map(|e| e.features.as_slice()),
        batch.iter().map(|e| e.raw.as_slice()),
    )
}

/// Splits `n` shuffled indices into batches, folding a trailing batch of one
/// into its predecessor (batch norm needs at least two rows).
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

/// Mean loss of the model in inference mode.
pub fn evaluate_loss(w: &ModelWeights<f64>, examples: &[TrainingExample<f64>]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::data("no examples to evaluate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    for chunk in examples.chunks(64) {
        let refs: Vec<&TrainingExample<f64>> = chunk.iter().collect();
        let mut g = Graph::new();
        let out = forward_batch(&mut g, &w.params, &w.config, &batch_input(w, &refs)?, false, &mut rng)?;
        let loss = g.mse(out.masks, &targets(&refs, w.config.n_bins)?)?;
        total += g.value(loss).data()[0] * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

/// Trains `initial`, fitting feature normalization on `train` first.
pub fn train(
    initial: ModelWeights<f64>,
    train: &[TrainingExample<f64>],
    validation: &[TrainingExample<f64>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.len() < 2 {
        return Err(Error::data("training needs at least 2 examples"));
    }
    if cfg.batch_size < 2 {
        return Err(Error::param("batch size must be at least 2"));
    }
    let mut w = initial;
    let stats = fit_normalization(train)?;
    w.set_normalization(stats.mean, stats.std)?;
    let n_bins = w.config.n_bins;
    let mut adam = AdamState::new(
        &w.params,
        AdamConfig {
            alpha: cfg.learning_rate,
            ..AdamConfig::default()
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, w.clone());
    let mut since_best = 0;
    let momentum = BATCH_NORM_MOMENTUM;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let last_good = w.clone();
        let mut sum = 0.0;
        let mut diverged = false;
        for idx in batches(&order, cfg.batch_size) {
            let batch: Vec<&TrainingExample<f64>> = idx.iter().map(|&i| &train[i]).collect();
            let mut g = Graph::new();
            let out = forward_batch(&mut g, &w.params, &w.config, &batch_input(&w, &batch)?, true, &mut rng)?;
            let loss = g.mse(out.masks, &targets(&batch, n_bins)?)?;
            let value = g.value(loss).data()[0];
            w.params.zero_grads();
            let ok = value.is_finite()
                && match g.backward(loss, &mut w.params) {
                    Ok(()) => true,
                    Err(Error::Numerical(msg)) => {
                        log::error!("epoch {epoch}: {msg}");
                        false
                    }
                    Err(e) => return Err(e),
                };
            if !ok {
                diverged = true;
                break;
            }
            adam.step(&mut w.params);
            if let Some(stats) = out.bn_stats {
                let (mut mean, mut var) = (
                    w.params.get("raw_bn.running_mean")?.data().to_vec(),
                    w.params.get("raw_bn.running_var")?.data().to_vec(),
                );
                update_running_stats(&mut mean, &mut var, &stats, momentum);
                w.params.get_mut("raw_bn.running_mean")?.data_mut().copy_from_slice(&mean);
                w.params.get_mut("raw_bn.running_var")?.data_mut().copy_from_slice(&var);
            }
            sum += value * batch.len() as f64;
        }
        let finite_params = w.params.iter().all(|p| p.value.is_finite());
        if diverged || !finite_params {
            log::error!("training diverged in epoch {epoch}; keeping last good weights");
            let weights = if best.0.is_finite() { best.1 } else { last_good };
            return Ok(TrainOutcome {
                weights,
                history,
                stop: StopReason::Diverged,
            });
        }
        let train_loss = sum / train.len() as f64;
        let validation_loss = if validation.is_empty() {
            None
        } else {
            Some(evaluate_loss(&w, validation)?)
        };
        log::info!("epoch {epoch}: train {train_loss:.6e} validation {validation_loss:?}");
        history.push(EpochLog {
            epoch,
            train_loss,
            validation_loss,
        });
        let score = validation_loss.unwrap_or(train_loss);
        if score < best.0 {
            best = (score, w.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cfg.target_loss.is_some_and(|t| train_loss < t) {
            return Ok(TrainOutcome {
                weights: w,
                history,
                stop: StopReason::TargetReached,
            });
        }
        if validation_loss.is_some() && since_best >= cfg.patience {
            return Ok(TrainOutcome {
                weights: best.1,
                history,
                stop: StopReason::EarlyStopped,
            });
        }
    }
    Ok(TrainOutcome {
        weights: best.1,
        history,
        stop: StopReason::MaxEpochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 5]);
        let b = batches(&order[..8], 4);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn csv_has_one_row_per_epoch() {
        let h = vec![
            EpochLog {
                epoch: 1,
                train_loss: 0.5,
                validation_loss: Some(0.6),
            },
            EpochLog {
                epoch: 2,
                train_loss: 0.25,
                validation_loss: None,
            },
        ];
        let csv = history_csv(&h);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().ends_with(','));
    }
}

//! Minibatch Adam training with a step-decay learning rate and
//! best-validation checkpoint selection.

use std::ops::Range;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::nmse;
use crate::error::{Error, Result};
use crate::estimator::{Estimator, TrainingSample};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::{stream_rng, Stream};
use crate::tensor::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplier applied every `decay_every` epochs.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub learning_rate_floor: f64,
    /// Weight of the antenna-domain loss.
    pub gamma: f64,
    pub test_fraction: f64,
    /// Share of the training split held out for checkpoint selection.
    pub validation_fraction: f64,
    /// Compute per-batch gradients on the rayon pool. Results are identical
    /// either way.
    pub parallel: bool,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 200,
            learning_rate: 0.005,
            decay_factor: 0.5,
            decay_every: 50,
            learning_rate_floor: 0.00005,
            gamma: 1.0,
            test_fraction: 0.2,
            validation_fraction: 0.1,
            parallel: true,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            epochs: 150,
            batch_size: 50,
            ..Self::default()
        }
    }

    /// Learning rate for zero-based `epoch`. The floor never lifts a rate
    /// configured below it (so a zero rate stays zero).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let decays = (epoch / self.decay_every.max(1)) as i32;
        let floor = self.learning_rate_floor.min(self.learning_rate);
        (self.learning_rate * self.decay_factor.powi(decays)).max(floor)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::Config("epochs, batch_size and decay_every must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config("decay_factor must lie in (0, 1]".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config("gamma must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean `ℒ_t` over the epoch's batches.
    pub loss_t: f64,
    /// Mean `ℒ_a` over the epoch's batches.
    pub loss_a: f64,
    pub validation_nmse: f64,
    /// NMSE on the held-out test split. Monitoring only; never used for
    /// checkpoint selection.
    pub test_nmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: serde_json::Value,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub final_test_nmse: f64,
    pub scale: f64,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn validation_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.validation_nmse).collect()
    }

    pub fn test_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.test_nmse).collect()
    }
}

/// Normalized samples plus the index ranges and scale they came with.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub samples: Vec<TrainingSample>,
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
    pub scale: f64,
}

impl PreparedData {
    pub fn split(&self, range: Range<usize>) -> &[TrainingSample] {
        &self.samples[range]
    }
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation NMSE.
    pub best: ParamStore,
    /// Parameters after the last epoch.
    pub last: ParamStore,
    pub record: RunRecord,
}

/// NMSE of the full-channel estimate over `samples`, computed on
/// de-normalized values.
pub fn evaluate_nmse(
    est: &Estimator,
    store: &ParamStore,
    samples: &[TrainingSample],
    scale: f64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySplit("evaluation split is empty".into()));
    }
    let denorm = |seq: &[Vec<f64>]| -> Vec<Vec<f64>> {
        seq.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect()
    };
    let mut truth = Vec::with_capacity(samples.len());
    let mut estimates = Vec::with_capacity(samples.len());
    for s in samples {
        let (_, full) = est.predict(store, &s.inputs)?;
        truth.push(denorm(&s.full_labels));
        estimates.push(denorm(&full));
    }
    nmse(&truth, &estimates)
}

/// Trains `initial` on `data.train`, selecting on `data.validation` and
/// reporting on `data.test`.
pub fn train(
    est: &Estimator,
    initial: ParamStore,
    data: &PreparedData,
    cfg: &TrainConfig,
    seed: u64,
    snapshot: serde_json::Value,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_len = data.train.len();
    if cfg.batch_size > train_len {
        return Err(Error::Config(format!(
            "batch size {} exceeds {train_len} training samples",
            cfg.batch_size
        )));
    }
    let started = Instant::now();
    let mut store = initial;
    let mut adam = AdamState::new(&store, cfg.adam, cfg.learning_rate);
    let validation = data.split(data.validation.clone());
    let test = data.split(data.test.clone());
    let mut best = (f64::INFINITY, 0usize, store.clone());
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = data.train.clone().collect();

    for epoch in 0..cfg.epochs {
        adam.learning_rate = cfg.learning_rate_at(epoch);
        order.sort_unstable();
        order.shuffle(&mut stream_rng(seed, Stream::Shuffle, epoch as u64));
        let (mut sum_t, mut sum_a, mut batches) = (0.0, 0.0, 0usize);
        for (b, idx) in order.chunks_exact(cfg.batch_size).enumerate() {
            let batch: Vec<&TrainingSample> = idx.iter().map(|&i| &data.samples[i]).collect();
            let (parts, grads) = est.loss_and_grad(&store, &batch, cfg.gamma, cfg.parallel)?;
            if !parts.total.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss {} at epoch {}, batch {}",
                    parts.total,
                    epoch + 1,
                    b + 1
                )));
            }
            adam.step(&mut store, &grads)?;
            sum_t += parts.time;
            sum_a += parts.antenna;
            batches += 1;
        }
        let val = evaluate_nmse(est, &store, validation, data.scale)?;
        if !val.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite validation NMSE at epoch {}",
                epoch + 1
            )));
        }
        let test_nmse = evaluate_nmse(est, &store, test, data.scale)?;
        if val < best.0 {
            best = (val, epoch + 1, store.clone());
        }
        epochs.push(EpochRecord {
            epoch: epoch + 1,
            learning_rate: adam.learning_rate,
            loss_t: sum_t / batches as f64,
            loss_a: sum_a / batches as f64,
            validation_nmse: val,
            test_nmse,
        });
    }

    let (_, best_epoch, best_store) = best;
    let final_test_nmse = evaluate_nmse(est, &best_store, test, data.scale)?;
    Ok(TrainOutcome {
        best: best_store,
        last: store,
        record: RunRecord {
            config: snapshot,
            seed,
            epochs,
            best_epoch,
            final_test_nmse,
            scale: data.scale,
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig::default();
        let mut last = f64::INFINITY;
        for e in 0..1000 {
            let lr = cfg.learning_rate_at(e);
            let want = (0.005 * 0.5f64.powi((e / 50) as i32)).max(0.00005);
            assert_eq!(lr, want);
            assert!(lr <= last && lr >= 0.00005);
            last = lr;
        }
        assert_eq!(cfg.learning_rate_at(0), 0.005);
        assert_eq!(cfg.learning_rate_at(50), 0.0025);
        assert_eq!(cfg.learning_rate_at(999), 0.00005);
    }

    #[test]
    fn zero_learning_rate_stays_zero() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!((0..300).all(|e| cfg.learning_rate_at(e) == 0.0));
    }

    #[test]
    fn bad_configs_rejected() {
        for cfg in [
            TrainConfig { epochs: 0, ..TrainConfig::desk() },
            TrainConfig { batch_size: 0, ..TrainConfig::desk() },
            TrainConfig { learning_rate: -1.0, ..TrainConfig::desk() },
            TrainConfig { decay_factor: 1.5, ..TrainConfig::desk() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }
}

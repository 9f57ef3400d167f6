//! End-to-end experiment: generate, split, normalize, build, train.

use serde::{Deserialize, Serialize};

use crate::channel::ScenarioParams;
use crate::dataset::{generate_dataset, normalize, split_indices, Dataset};
use crate::error::{Error, Result};
use crate::estimator::{Dims, Estimator, ModelConfig};
use crate::pilot::{build_schedule, FrameSchedule};
use crate::rng::{stream_rng, Stream};
use crate::tensor::ParamStore;
use crate::train::{train, PreparedData, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    /// Blocks per frame `L`.
    pub blocks: usize,
    /// `r_t = |𝓛ᵖ|/L`.
    pub time_rate: f64,
    /// `r_a = N_s/N`.
    pub antenna_rate: f64,
    /// Defaults to `N_s`.
    pub pilot_length: Option<usize>,
    pub pilot_power: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            blocks: 10,
            time_rate: 1.0,
            antenna_rate: 0.5,
            pilot_length: None,
            pilot_power: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 4×4 RIS, 1000 samples, 150 epochs, batch 50.
    Desk,
    /// 8×8 RIS, 20000 samples, 1000 epochs, batch 200.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Frames to generate, before splitting.
    pub samples: usize,
    /// Pilot SNR `P/σ²` in dB; absent means noiseless.
    #[serde(default)]
    pub snr_db: Option<f64>,
    pub scenario: ScenarioParams,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self {
                seed: 2024,
                samples: 1000,
                snr_db: None,
                scenario: ScenarioParams::desk(),
                schedule: ScheduleConfig::default(),
                model: ModelConfig::default(),
                train: TrainConfig::desk(),
            },
            Profile::Paper => Self {
                seed: 2024,
                samples: 20000,
                snr_db: None,
                scenario: ScenarioParams::full_scale(),
                schedule: ScheduleConfig::default(),
                model: ModelConfig::default(),
                train: TrainConfig::default(),
            },
        }
    }

    pub fn frame_schedule(&self) -> Result<FrameSchedule> {
        let s = &self.schedule;
        build_schedule(
            s.blocks,
            s.time_rate,
            self.scenario.ris_elements(),
            s.antenna_rate,
            s.pilot_length,
            s.pilot_power,
        )
    }

    pub fn dims(&self) -> Result<Dims> {
        let sched = self.frame_schedule()?;
        Ok(Dims::new(
            self.scenario.bs_antennas,
            self.scenario.ris_elements(),
            sched.selected_count(),
            &self.model,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.frame_schedule()?;
        self.train.validate()?;
        if self.samples == 0 {
            return Err(Error::Config("samples must be positive".into()));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::Config("snr_db must be finite; omit it for noiseless pilots".into()));
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let mut ds = generate_dataset(
            &self.scenario,
            &self.frame_schedule()?,
            self.samples,
            self.snr_db,
            self.seed,
        )?;
        ds.manifest.config = Some(self.snapshot());
        Ok(ds)
    }

    /// Splits and normalizes a dataset generated from this config.
    pub fn prepare(&self, dataset: &Dataset) -> Result<PreparedData> {
        let mut samples = dataset.training_samples()?;
        let splits = split_indices(samples.len(), self.train.test_fraction, self.train.validation_fraction)?;
        let scale = normalize(&mut samples, splits.train.clone())?;
        Ok(PreparedData {
            samples,
            train: splits.train,
            validation: splits.validation,
            test: splits.test,
            scale,
        })
    }

    /// Network with initial parameters drawn from the `Init` sub-stream.
    pub fn build_estimator(&self) -> Result<(Estimator, ParamStore)> {
        let mut rng = stream_rng(self.seed, Stream::Init, 0);
        Estimator::new(self.dims()?, &self.model, &mut rng)
    }

    pub fn run(&self) -> Result<(Estimator, TrainOutcome)> {
        let ds = self.generate()?;
        let data = self.prepare(&ds)?;
        let (est, init) = self.build_estimator()?;
        let outcome = train(&est, init, &data, &self.train, self.seed, self.snapshot())?;
        Ok((est, outcome))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_profile_shapes() {
        let cfg = ExperimentConfig::profile(Profile::Desk);
        cfg.validate().unwrap();
        let d = cfg.dims().unwrap();
        assert_eq!((d.sub_len(), d.full_len(), d.hidden), (32, 64, 32));
        assert_eq!(cfg.samples, 1000);
    }

    #[test]
    fn paper_profile_values() {
        let cfg = ExperimentConfig::profile(Profile::Paper);
        assert_eq!(cfg.samples, 20000);
        assert_eq!(cfg.scenario.ris_elements(), 64);
        assert_eq!(cfg.scenario.paths, 5);
        assert_eq!(cfg.train.epochs, 1000);
        assert_eq!(cfg.train.batch_size, 200);
        assert_eq!(cfg.train.learning_rate, 0.005);
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = ExperimentConfig::profile(Profile::Desk);
        let back: ExperimentConfig = serde_json::from_value(cfg.snapshot()).unwrap();
        assert_eq!(back, cfg);
    }
}

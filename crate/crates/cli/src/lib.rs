//! Command implementations behind the `ris-chanest` binary.
//!
//! Configuration is resolved in three layers: the selected profile, then an
//! optional TOML file merged over it, then command-line overrides. The fully
//! resolved config is embedded in every artifact a command writes, so any
//! artifact can be replayed on its own.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ris_chanest::checkpoint::Checkpoint;
use ris_chanest::dataset::{Dataset, Manifest};
use ris_chanest::experiment::{ExperimentConfig, Profile};
use ris_chanest::sweep::{axis_by_name, sweep_with, SweepReport};
use ris_chanest::train::{evaluate_nmse, train, RunRecord};
use ris_chanest::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const RUN_FILE: &str = "run.json";

/// Process exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Format(_) => EXIT_IO,
        Error::Divergence(_) => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    pub report: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: "out/dataset".into(),
            checkpoint: "out/checkpoint".into(),
            report: "out/report".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliConfig {
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub paths: Paths,
}

/// Flags that override values resolved from the profile and config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
}

impl CliConfig {
    pub fn profile(profile: Profile) -> Self {
        Self {
            experiment: ExperimentConfig::profile(profile),
            paths: Paths::default(),
        }
    }

    /// `text` is merged key by key over `base`; keys it omits keep the
    /// profile value.
    pub fn from_toml_over(base: &CliConfig, text: &str) -> ris_chanest::Result<Self> {
        let mut tree = toml::Value::try_from(base).map_err(config_err)?;
        let patch: toml::Table = toml::from_str(text).map_err(config_err)?;
        merge(&mut tree, toml::Value::Table(patch));
        let cfg: CliConfig = tree.try_into().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn resolve(ov: &Overrides) -> ris_chanest::Result<Self> {
        let mut cfg = Self::profile(ov.profile.unwrap_or(Profile::Desk));
        if let Some(path) = &ov.config {
            let text = fs::read_to_string(path)?;
            cfg = Self::from_toml_over(&cfg, &text)?;
        }
        if let Some(seed) = ov.seed {
            cfg.experiment.seed = seed;
        }
        cfg.experiment.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes to JSON")
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn merge(base: &mut toml::Value, patch: toml::Value) {
    match (base, patch) {
        (toml::Value::Table(b), toml::Value::Table(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateSummary {
    pub samples: usize,
    pub bytes: u64,
    pub dir: PathBuf,
}

pub fn cmd_generate(cfg: &CliConfig, out: Option<&Path>) -> ris_chanest::Result<GenerateSummary> {
    let dir = out.unwrap_or(&cfg.paths.dataset).to_path_buf();
    let mut ds = cfg.experiment.generate()?;
    ds.manifest.config = Some(cfg.snapshot());
    let bytes = ds.save(&dir)?;
    Ok(GenerateSummary {
        samples: ds.manifest.count,
        bytes,
        dir,
    })
}

/// Loads the dataset at `cfg.paths.dataset` and checks it was generated with
/// the same physics and frame schedule `cfg` trains on.
pub fn load_matching_dataset(cfg: &CliConfig) -> ris_chanest::Result<Dataset> {
    let dir = &cfg.paths.dataset;
    if !dir.join(ris_chanest::dataset::MANIFEST_FILE).exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no dataset at {}; run `generate` first", dir.display()),
        )));
    }
    let ds = Dataset::load(dir)?;
    check_manifest(&ds.manifest, &cfg.experiment)?;
    Ok(ds)
}

fn check_manifest(m: &Manifest, exp: &ExperimentConfig) -> ris_chanest::Result<()> {
    let schedule = exp.frame_schedule()?;
    let mismatch = if m.scenario != exp.scenario {
        Some("scenario")
    } else if m.schedule != schedule {
        Some("frame schedule")
    } else if m.snr_db != exp.snr_db {
        Some("snr_db")
    } else if m.count != exp.samples {
        Some("sample count")
    } else if m.seed != exp.seed {
        Some("seed")
    } else {
        None
    };
    match mismatch {
        Some(what) => Err(Error::Config(format!(
            "dataset {what} does not match the config; regenerate the dataset"
        ))),
        None => Ok(()),
    }
}

pub struct TrainArtifacts {
    pub record: RunRecord,
    pub checkpoint: PathBuf,
    pub run: PathBuf,
}

/// Trains on the dataset at `cfg.paths.dataset` and writes the
/// best-validation checkpoint and the run record into `out` (or
/// `cfg.paths.checkpoint`). On divergence the partial record is not written.
pub fn cmd_train(cfg: &CliConfig, out: Option<&Path>) -> ris_chanest::Result<TrainArtifacts> {
    let ds = load_matching_dataset(cfg)?;
    let data = cfg.experiment.prepare(&ds)?;
    let (est, init) = cfg.experiment.build_estimator()?;
    let outcome = train(&est, init, &data, &cfg.experiment.train, cfg.experiment.seed, cfg.snapshot())?;

    let dir = out.unwrap_or(&cfg.paths.checkpoint).to_path_buf();
    fs::create_dir_all(&dir)?;
    let checkpoint = dir.join(CHECKPOINT_FILE);
    Checkpoint::from_store(&outcome.best, Some(cfg.snapshot())).save(&checkpoint)?;
    let run = dir.join(RUN_FILE);
    fs::write(&run, serde_json::to_string_pretty(&outcome.record)?)?;
    Ok(TrainArtifacts {
        record: outcome.record,
        checkpoint,
        run,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: serde_json::Value,
    pub validation_nmse: f64,
    pub test_nmse: f64,
}

/// Evaluates a checkpoint using only the config snapshot stored inside it.
/// `dataset` overrides the dataset directory recorded in that snapshot.
pub fn cmd_eval(checkpoint: &Path, dataset: Option<&Path>) -> ris_chanest::Result<EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let snapshot = ck
        .config
        .clone()
        .ok_or_else(|| Error::Config("checkpoint carries no config snapshot".into()))?;
    let mut cfg: CliConfig = serde_json::from_value(snapshot.clone())?;
    if let Some(d) = dataset {
        cfg.paths.dataset = d.to_path_buf();
    }
    let ds = load_matching_dataset(&cfg)?;
    let data = cfg.experiment.prepare(&ds)?;
    let (est, mut store) = cfg.experiment.build_estimator()?;
    ck.restore_into(&mut store)?;
    Ok(EvalReport {
        config: snapshot,
        validation_nmse: evaluate_nmse(&est, &store, data.split(data.validation.clone()), data.scale)?,
        test_nmse: evaluate_nmse(&est, &store, data.split(data.test.clone()), data.scale)?,
    })
}

/// `1/2`, `0.25`, `inf` and `-inf` are accepted.
pub fn parse_values(text: &str) -> ris_chanest::Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let parsed = match s.split_once('/') {
                Some((n, d)) => n.trim().parse::<f64>().and_then(|n| d.trim().parse::<f64>().map(|d| n / d)),
                None => s.parse::<f64>(),
            };
            parsed.map_err(|_| Error::Config(format!("cannot parse sweep value {s:?}")))
        })
        .collect()
}

pub struct SweepArtifacts {
    pub report: SweepReport,
    pub csv: PathBuf,
    pub runs: PathBuf,
}

#[derive(Serialize)]
struct SweepRuns<'a> {
    config: serde_json::Value,
    axis: &'a str,
    runs: Vec<(f64, &'a RunRecord)>,
}

/// One independent generate-and-train run per value. Writes the CSV report
/// to `out` (or `<paths.report>/sweep_<axis>.csv`) and the full run records,
/// with the base config, next to it as JSON.
pub fn cmd_sweep(
    cfg: &CliConfig,
    axis: &str,
    values: &[f64],
    out: Option<&Path>,
) -> ris_chanest::Result<SweepArtifacts> {
    let axis = axis_by_name(axis)?;
    let csv = match out {
        Some(p) => p.to_path_buf(),
        None => cfg.paths.report.join(format!("sweep_{}.csv", axis.name())),
    };
    let report = sweep_with(axis.as_ref(), values, &cfg.experiment, |exp| {
        let snapshot = CliConfig {
            experiment: exp.clone(),
            paths: cfg.paths.clone(),
        }
        .snapshot();
        let ds = exp.generate()?;
        let data = exp.prepare(&ds)?;
        let (est, init) = exp.build_estimator()?;
        Ok(train(&est, init, &data, &exp.train, exp.seed, snapshot)?.record)
    })?;
    if let Some(parent) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    report.write_csv(fs::File::create(&csv)?)?;
    let runs = csv.with_extension("runs.json");
    let body = SweepRuns {
        config: cfg.snapshot(),
        axis: &report.axis,
        runs: report.runs.iter().map(|r| (r.value, &r.record)).collect(),
    };
    fs::write(&runs, serde_json::to_string_pretty(&body)?)?;
    Ok(SweepArtifacts { report, csv, runs })
}

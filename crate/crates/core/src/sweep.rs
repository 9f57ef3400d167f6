//! Parameter sweeps. Each sweepable axis implements [`SweepAxis`] and is
//! registered by name.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::train::RunRecord;

pub const CSV_HEADER: &str = "axis,value,epoch,loss_t,loss_a,nmse";

pub trait SweepAxis: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Sets this axis to `value` in `cfg`.
    fn apply(&self, cfg: &mut ExperimentConfig, value: f64) -> Result<()>;
}

#[derive(Debug)]
struct AntennaRate;

impl SweepAxis for AntennaRate {
    fn name(&self) -> &'static str {
        "r_a"
    }

    fn apply(&self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        cfg.schedule.antenna_rate = value;
        Ok(())
    }
}

#[derive(Debug)]
struct TimeRate;

impl SweepAxis for TimeRate {
    fn name(&self) -> &'static str {
        "r_t"
    }

    fn apply(&self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        cfg.schedule.time_rate = value;
        Ok(())
    }
}

#[derive(Debug)]
struct Snr;

impl SweepAxis for Snr {
    fn name(&self) -> &'static str {
        "snr"
    }

    /// `+inf` selects noiseless pilots.
    fn apply(&self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        cfg.snr_db = if value == f64::INFINITY { None } else { Some(value) };
        Ok(())
    }
}

#[derive(Debug)]
struct Epochs;

impl SweepAxis for Epochs {
    fn name(&self) -> &'static str {
        "epoch"
    }

    fn apply(&self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        if !(value >= 1.0 && value.fract() == 0.0) {
            return Err(Error::Config(format!("epoch count {value} is not a positive integer")));
        }
        cfg.train.epochs = value as usize;
        Ok(())
    }
}

type AxisCtor = fn() -> Box<dyn SweepAxis>;

static AXES: &[(&str, AxisCtor)] = &[
    ("r_a", || Box::new(AntennaRate)),
    ("r_t", || Box::new(TimeRate)),
    ("snr", || Box::new(Snr)),
    ("epoch", || Box::new(Epochs)),
];

pub fn axis_names() -> impl Iterator<Item = &'static str> {
    AXES.iter().map(|(n, _)| *n)
}

pub fn axis_by_name(name: &str) -> Result<Box<dyn SweepAxis>> {
    AXES.iter()
        .find(|(n, _)| *n == name)
        .map(|(_, ctor)| ctor())
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown sweep axis {name:?}; known: {}",
                axis_names().collect::<Vec<_>>().join(", ")
            ))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub axis: String,
    pub value: f64,
    pub epoch: usize,
    pub loss_t: f64,
    pub loss_a: f64,
    pub nmse: f64,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub value: f64,
    pub record: RunRecord,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub axis: String,
    pub runs: Vec<SweepRun>,
}

impl SweepReport {
    /// One row per `(value, epoch)`; `nmse` is the held-out test NMSE.
    pub fn rows(&self) -> Vec<ReportRow> {
        self.runs
            .iter()
            .flat_map(|run| {
                run.record.epochs.iter().map(move |e| ReportRow {
                    axis: self.axis.clone(),
                    value: run.value,
                    epoch: e.epoch,
                    loss_t: e.loss_t,
                    loss_a: e.loss_a,
                    nmse: e.test_nmse,
                })
            })
            .collect()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        write_rows(w, &self.rows())
    }
}

pub fn write_rows(w: impl Write, rows: &[ReportRow]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(true).from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows(r: impl std::io::Read) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// One independent trained run per value, all sharing `base.seed`.
pub fn sweep(axis: &dyn SweepAxis, values: &[f64], base: &ExperimentConfig) -> Result<SweepReport> {
    sweep_with(axis, values, base, |cfg| Ok(cfg.run()?.1.record))
}

/// [`sweep`] with a caller-supplied runner, e.g. to persist artifacts.
pub fn sweep_with(
    axis: &dyn SweepAxis,
    values: &[f64],
    base: &ExperimentConfig,
    mut run: impl FnMut(&ExperimentConfig) -> Result<RunRecord>,
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut runs = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = base.clone();
        axis.apply(&mut cfg, value)?;
        cfg.validate()?;
        runs.push(SweepRun {
            value,
            record: run(&cfg)?,
        });
    }
    Ok(SweepReport {
        axis: axis.name().to_string(),
        runs,
    })
}

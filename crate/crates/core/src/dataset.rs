//! Synthetic frame datasets: generation, on-disk format and normalization.
//!
//! A dataset directory holds `manifest.json` (scenario, schedule, SNR, seed,
//! sample count and the resolved config) and `dataset.bin`, a little-endian
//! container:
//!
//! ```text
//! magic   b"RISCSEQ\0"
//! u32     format version (1)
//! u64     record count
//! u32 ×5  blocks L, BS antennas M, RIS elements N, paths L_g, input length
//! record  ray parameters (f64s), L × M × N complex C(n) column-major as
//!         (re, im) pairs, L × input-length f64 network inputs
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSample, PathParams, RayParams, ScenarioParams};
use crate::complex::{stack_re_im, ComplexMatrix};
use crate::error::{Error, Result};
use crate::estimator::TrainingSample;
use crate::pilot::{build_network_input, ls_estimate, observe, FrameSchedule};
use crate::rng::{stream_rng, Stream};

const MAGIC: &[u8; 8] = b"RISCSEQ\0";
const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "dataset.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub scenario: ScenarioParams,
    pub schedule: FrameSchedule,
    /// `None` for noiseless pilots.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub count: usize,
    pub data_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// Ground truth and pilot inputs for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub rays: RayParams,
    pub c_seq: Vec<ComplexMatrix>,
    pub inputs: Vec<Vec<f64>>,
}

impl FrameRecord {
    /// Input and both label sequences, unnormalized.
    pub fn training_sample(&self, schedule: &FrameSchedule) -> Result<TrainingSample> {
        let cols = schedule.selected_columns();
        let sub_labels = self
            .c_seq
            .iter()
            .map(|c| Ok(stack_re_im(&c.select_columns(&cols)?.vectorize())))
            .collect::<Result<_>>()?;
        let full_labels = self.c_seq.iter().map(|c| stack_re_im(&c.vectorize())).collect();
        Ok(TrainingSample {
            inputs: self.inputs.clone(),
            sub_labels,
            full_labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub records: Vec<FrameRecord>,
}

/// Draws `count` frames. Frame `i` uses its own dataset and noise sub-streams
/// of `seed`, so the channels do not depend on the schedule or SNR and the
/// output does not depend on the thread count.
pub fn generate_dataset(
    scenario: &ScenarioParams,
    schedule: &FrameSchedule,
    count: usize,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Config("dataset needs at least one sample".into()));
    }
    scenario.validate()?;
    schedule.validate()?;
    if schedule.ris_elements != scenario.ris_elements() {
        return Err(Error::Schedule(format!(
            "schedule built for {} elements, scenario has {}",
            schedule.ris_elements,
            scenario.ris_elements()
        )));
    }
    let records = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, Stream::Dataset, i as u64);
            let sample = ChannelSample::draw(scenario, schedule.blocks, &mut rng)?;
            let mut noise = stream_rng(seed, Stream::Noise, i as u64);
            let mut estimates = BTreeMap::new();
            for &b in &schedule.pilot_blocks {
                let obs = observe(&sample.c_seq[b - 1], b, schedule, snr_db, &mut noise)?;
                estimates.insert(b, ls_estimate(&obs)?);
            }
            let inputs = build_network_input(&estimates, schedule)?;
            Ok(FrameRecord {
                rays: sample.rays,
                c_seq: sample.c_seq,
                inputs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        manifest: Manifest {
            version: FORMAT_VERSION,
            scenario: scenario.clone(),
            schedule: schedule.clone(),
            snr_db,
            seed,
            count,
            data_file: DATA_FILE.into(),
            config: None,
        },
        records,
    })
}

impl Dataset {
    pub fn training_samples(&self) -> Result<Vec<TrainingSample>> {
        self.records
            .iter()
            .map(|r| r.training_sample(&self.manifest.schedule))
            .collect()
    }

    /// Writes manifest and data file into `dir`; returns the data file size.
    pub fn save(&self, dir: &Path) -> Result<u64> {
        std::fs::create_dir_all(dir)?;
        let data_path = dir.join(&self.manifest.data_file);
        {
            let mut w = BufWriter::new(File::create(&data_path)?);
            self.write_records(&mut w)?;
            w.flush()?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(dir.join(MANIFEST_FILE), manifest)?;
        Ok(std::fs::metadata(&data_path)?.len())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
        if manifest.version != FORMAT_VERSION {
            return Err(Error::Format(format!("manifest version {}", manifest.version)));
        }
        let mut r = BufReader::new(File::open(dir.join(&manifest.data_file))?);
        let records = read_records(&mut r, &manifest)?;
        Ok(Self { manifest, records })
    }

    fn write_records(&self, w: &mut impl Write) -> Result<()> {
        let m = &self.manifest;
        let input_len = self.records.first().map_or(0, |r| r.inputs[0].len());
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u64::<LittleEndian>(self.records.len() as u64)?;
        for v in [
            m.schedule.blocks,
            m.scenario.bs_antennas,
            m.scenario.ris_elements(),
            m.scenario.paths,
            input_len,
        ] {
            w.write_u32::<LittleEndian>(v as u32)?;
        }
        let put = |w: &mut dyn Write, x: f64| w.write_f64::<LittleEndian>(x);
        for rec in &self.records {
            let r = &rec.rays;
            for x in [r.gain.re, r.gain.im, r.departure, r.ris_azimuth, r.ris_elevation] {
                put(w, x)?;
            }
            for p in &r.paths {
                for x in [p.gain.re, p.gain.im, p.delay, p.motion_angle, p.azimuth, p.elevation] {
                    put(w, x)?;
                }
            }
            for c in &rec.c_seq {
                for z in c.vectorize() {
                    put(w, z.re)?;
                    put(w, z.im)?;
                }
            }
            for x in rec.inputs.iter().flatten() {
                put(w, *x)?;
            }
        }
        Ok(())
    }
}

fn read_records(r: &mut impl Read, m: &Manifest) -> Result<Vec<FrameRecord>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad dataset magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("dataset format version {version}")));
    }
    let count = r.read_u64::<LittleEndian>()? as usize;
    let mut header = [0usize; 5];
    for h in header.iter_mut() {
        *h = r.read_u32::<LittleEndian>()? as usize;
    }
    let [blocks, m_ant, n_el, paths, input_len] = header;
    let expected = [
        m.schedule.blocks,
        m.scenario.bs_antennas,
        m.scenario.ris_elements(),
        m.scenario.paths,
        2 * m.scenario.bs_antennas * m.schedule.selected_count(),
    ];
    if header != expected || count != m.count {
        return Err(Error::Format(format!(
            "data header {header:?} x{count} disagrees with manifest {expected:?} x{}",
            m.count
        )));
    }
    let mut get = || r.read_f64::<LittleEndian>();
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let (gre, gim, departure, ris_azimuth, ris_elevation) = (get()?, get()?, get()?, get()?, get()?);
        let mut path_list = Vec::with_capacity(paths);
        for _ in 0..paths {
            path_list.push(PathParams {
                gain: Complex64::new(get()?, get()?),
                delay: get()?,
                motion_angle: get()?,
                azimuth: get()?,
                elevation: get()?,
            });
        }
        let mut c_seq = Vec::with_capacity(blocks);
        for _ in 0..blocks {
            let v = (0..m_ant * n_el)
                .map(|_| Ok(Complex64::new(get()?, get()?)))
                .collect::<std::io::Result<Vec<_>>>()?;
            c_seq.push(ComplexMatrix::from_vectorized(m_ant, n_el, &v)?);
        }
        let inputs = (0..blocks)
            .map(|_| (0..input_len).map(|_| get()).collect::<std::io::Result<Vec<_>>>())
            .collect::<std::io::Result<Vec<_>>>()?;
        records.push(FrameRecord {
            rays: RayParams {
                gain: Complex64::new(gre, gim),
                departure,
                ris_azimuth,
                ris_elevation,
                paths: path_list,
            },
            c_seq,
            inputs,
        });
    }
    Ok(records)
}

/// Disjoint contiguous index ranges: train, validation (carved from the end
/// of the training share) and test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

pub fn split_indices(count: usize, test_fraction: f64, validation_fraction: f64) -> Result<Splits> {
    if !(0.0..1.0).contains(&test_fraction) || !(0.0..1.0).contains(&validation_fraction) {
        return Err(Error::Config("split fractions must lie in [0, 1)".into()));
    }
    let test = ((count as f64 * test_fraction).round() as usize).max(1);
    if test >= count {
        return Err(Error::EmptySplit(format!("{count} samples leave no training data")));
    }
    let train_all = count - test;
    let val = ((train_all as f64 * validation_fraction).round() as usize).max(1);
    if val >= train_all {
        return Err(Error::EmptySplit(format!("{train_all} training samples leave no room for validation")));
    }
    let train = train_all - val;
    Ok(Splits {
        train: 0..train,
        validation: train..train_all,
        test: train_all..count,
    })
}

/// Divides every input and label by the largest absolute real or imaginary
/// part found in the training range. Returns the scale.
pub fn normalize(samples: &mut [TrainingSample], train: Range<usize>) -> Result<f64> {
    if samples.is_empty() || train.is_empty() {
        return Err(Error::EmptySplit("nothing to normalize".into()));
    }
    let scale = samples[train]
        .iter()
        .flat_map(|s| {
            s.inputs
                .iter()
                .chain(&s.sub_labels)
                .chain(&s.full_labels)
                .flatten()
        })
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::DegenerateScale(format!("training maximum is {scale}")));
    }
    for s in samples.iter_mut() {
        for v in s
            .inputs
            .iter_mut()
            .chain(s.sub_labels.iter_mut())
            .chain(s.full_labels.iter_mut())
            .flatten()
        {
            *v /= scale;
        }
    }
    Ok(scale)
}

/// Per-frame `Σₙ‖c(n) − ĉ(n)‖² / Σₙ‖c(n)‖²`, averaged over frames.
pub fn nmse(truth: &[Vec<Vec<f64>>], estimate: &[Vec<Vec<f64>>]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptySplit("NMSE over zero samples".into()));
    }
    if truth.len() != estimate.len() {
        return Err(crate::error::shape_err!("{} truths, {} estimates", truth.len(), estimate.len()));
    }
    let mut acc = 0.0;
    for (t, e) in truth.iter().zip(estimate) {
        let (mut err, mut energy) = (0.0, 0.0);
        for (tn, en) in t.iter().zip(e) {
            if tn.len() != en.len() {
                return Err(crate::error::shape_err!("block of {} vs {}", tn.len(), en.len()));
            }
            for (a, b) in tn.iter().zip(en) {
                err += (a - b) * (a - b);
                energy += a * a;
            }
        }
        acc += err / energy;
    }
    Ok(acc / truth.len() as f64)
}

use std::fs::File;
use std::io::BufReader;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::DrqcSpec;

use super::dataset::{drqc_dataset, Dataset, DrqcDatasetConfig};
use super::image::{image_dataset, read_pgm, signal_dataset, synth_image, SynthKind};
use super::train::{DensityTask, LossKind, Task};

fn default_components() -> usize {
    25
}

fn default_samples() -> usize {
    1024
}

fn default_image_size() -> usize {
    32
}

fn default_points() -> usize {
    1000
}

/// Serializable description of a training problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    /// Regression on samples of a re-uploading circuit.
    Drqc {
        circuit: DrqcSpec,
        #[serde(default)]
        dataset: DrqcDatasetConfig,
    },
    /// Gaussian-mixture density estimation.
    Density {
        sigma_range: (f64, f64),
        #[serde(default = "default_components")]
        components: usize,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        data_seed: u64,
    },
    /// Coordinate → intensity fit of a synthetic image name or a PGM path.
    Image {
        source: String,
        #[serde(default = "default_image_size")]
        size: usize,
    },
    /// Sum-of-sinusoids 1-D signal fit.
    Signal {
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default)]
        data_seed: u64,
    },
}

/// Materialized task data.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskData {
    Regression(Dataset),
    Density(DensityTask),
}

impl TaskData {
    pub fn task(&self) -> Task<'_> {
        match self {
            TaskData::Regression(d) => Task::Regression(d),
            TaskData::Density(d) => Task::Density(d),
        }
    }

    /// Input and output widths a model must have.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            TaskData::Regression(d) => (d.input_dim(), d.target_dim()),
            TaskData::Density(_) => (1, 1),
        }
    }
}

impl TaskSpec {
    /// Single-wire, 8-upload circuit regression with the default split.
    pub fn drqc_single_qubit(circuit_seed: u64) -> Self {
        TaskSpec::Drqc {
            circuit: DrqcSpec::single_qubit(8, circuit_seed),
            dataset: DrqcDatasetConfig::default(),
        }
    }

    pub fn loss(&self) -> LossKind {
        match self {
            TaskSpec::Density { .. } => LossKind::NllNormalized,
            _ => LossKind::Mse,
        }
    }

    pub fn build(&self) -> Result<TaskData> {
        match self {
            TaskSpec::Drqc { circuit, dataset } => {
                Ok(TaskData::Regression(drqc_dataset(circuit, dataset)?))
            }
            TaskSpec::Density {
                sigma_range,
                components,
                samples,
                data_seed,
            } => Ok(TaskData::Density(DensityTask::mixture(
                *data_seed,
                *components,
                *sigma_range,
                *samples,
            )?)),
            TaskSpec::Image { source, size } => {
                let img = match SynthKind::parse(source) {
                    Ok(kind) => synth_image(kind, *size)?,
                    Err(_) => {
                        let file = File::open(source).map_err(|e| {
                            Error::Parse(format!("cannot open image {source:?}: {e}"))
                        })?;
                        read_pgm(BufReader::new(file))?
                    }
                };
                Ok(TaskData::Regression(image_dataset(&img, source)?))
            }
            TaskSpec::Signal { points, data_seed } => {
                Ok(TaskData::Regression(signal_dataset(*data_seed, *points)?))
            }
        }
    }
}

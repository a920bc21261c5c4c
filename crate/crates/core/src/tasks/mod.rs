//! Datasets, losses and training loops for the experiments.

mod dataset;
mod density;
mod image;
mod spec;
mod train;

pub use dataset::{drqc_dataset, fmt17, Dataset, DrqcDatasetConfig, Provenance, Split};
pub use density::{
    kl_divergence, make_mixture, mixture_pdf, model_density, nll_normalized, sample_mixture,
    KlReport, MixtureDistribution, UniformGrid, KL_MASS_FLOOR, KL_Q_FLOOR,
};
pub use image::{
    image_dataset, read_pgm, signal_dataset, synth_image, write_pgm, GrayImage, SynthKind,
    CHIRP_RATE,
};
pub use spec::{TaskData, TaskSpec};
pub use train::{
    evaluate, train, DensityTask, LossKind, Metric, Metrics, OptimizerConfig, QuadratureConfig,
    Task, TrainConfig,
};

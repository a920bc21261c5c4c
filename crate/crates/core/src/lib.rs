pub mod autodiff;
pub mod baselines;
pub mod bench;
pub mod error;
pub mod model;
pub mod qrun;
pub mod quantum;
pub mod rng;
pub mod tasks;

pub use error::{Error, Result};

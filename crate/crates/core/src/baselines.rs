//! Reference networks: plain MLPs, SIREN, random Fourier features and a
//! FAN-style Fourier layer.
//!
//! The FAN layer is a reconstruction from its published description
//! (`[cos(W_p x), sin(W_p x), σ(W_q x + b)]`), not a port of the original code.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{Activation, Layer, ModelConfig};

/// Relative tolerance for budget matching.
pub const BUDGET_TOLERANCE: f64 = 0.05;

fn default_omega0() -> f64 {
    30.0
}

fn default_p_ratio() -> f64 {
    0.25
}

fn default_tanh() -> Activation {
    Activation::Tanh
}

fn check_widths(widths: &[usize], what: &str) -> Result<()> {
    if widths.len() < 3 {
        return Err(Error::contract(format!(
            "{what} needs at least one hidden layer"
        )));
    }
    if widths.contains(&0) {
        return Err(Error::contract(format!("{what} widths must be positive")));
    }
    Ok(())
}

fn dense_stack(widths: &[usize], activation: Activation) -> Vec<Layer> {
    let mut layers = Vec::new();
    for (i, pair) in widths.windows(2).enumerate() {
        if i > 0 {
            layers.push(Layer::Act(activation));
        }
        layers.push(Layer::Linear {
            d_in: pair[0],
            d_out: pair[1],
        });
    }
    layers
}

/// `widths = [d_in, hidden…, d_out]`; the activation follows every hidden
/// layer, the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpConfig {
    pub fn layers(&self) -> Result<Vec<Layer>> {
        check_widths(&self.widths, "MLP")?;
        Ok(dense_stack(&self.widths, self.activation))
    }
}

/// Sinusoidal MLP: `sin(ω₀(Wx + b))` hidden layers with the two-tier init
/// (`U(±1/d_in)` first, `U(±√(6/fan_in)/ω₀)` after), linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirenConfig {
    pub widths: Vec<usize>,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
}

impl SirenConfig {
    pub fn layers(&self) -> Result<Vec<Layer>> {
        check_widths(&self.widths, "SIREN")?;
        let last = self.widths.len() - 2;
        Ok(self
            .widths
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                if i == last {
                    Layer::Linear {
                        d_in: pair[0],
                        d_out: pair[1],
                    }
                } else {
                    Layer::Sine {
                        d_in: pair[0],
                        d_out: pair[1],
                        omega0: self.omega0,
                        first: i == 0,
                    }
                }
            })
            .collect())
    }
}

/// Frozen Gaussian projection `B ~ N(0, σ²)` of `features` rows, encoded as
/// `[cos 2πBx; sin 2πBx]` and fed to an MLP over `widths[1..]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RffConfig {
    pub widths: Vec<usize>,
    pub features: usize,
    pub sigma: f64,
    #[serde(default = "default_tanh")]
    pub activation: Activation,
}

impl RffConfig {
    pub fn layers(&self) -> Result<Vec<Layer>> {
        check_widths(&self.widths, "RFF-MLP")?;
        let mut mlp_widths = vec![2 * self.features];
        mlp_widths.extend_from_slice(&self.widths[1..]);
        let mut layers = vec![Layer::Rff {
            d_in: self.widths[0],
            features: self.features,
            sigma: self.sigma,
        }];
        layers.extend(dense_stack(&mlp_widths, self.activation));
        Ok(layers)
    }
}

/// Value-level `[cos(2πBx), sin(2πBx)]`.
pub fn rff_features(b: &Tensor, x: &[f64]) -> Result<Vec<f64>> {
    if b.cols() != x.len() {
        return Err(Error::Shape {
            op: "rff_features",
            left: b.shape().to_vec(),
            right: vec![x.len()],
        });
    }
    let phases: Vec<f64> = (0..b.rows())
        .map(|r| std::f64::consts::TAU * b.row(r).iter().zip(x).fold(0.0, |a, (u, v)| a + u * v))
        .collect();
    Ok(phases
        .iter()
        .map(|p| p.cos())
        .chain(phases.iter().map(|p| p.sin()))
        .collect())
}

/// Stack of FAN layers over `widths[..len-1]` closed by a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanConfig {
    pub widths: Vec<usize>,
    #[serde(default = "default_p_ratio")]
    pub p_ratio: f64,
    #[serde(default = "default_tanh")]
    pub activation: Activation,
}

impl FanConfig {
    pub fn layers(&self) -> Result<Vec<Layer>> {
        check_widths(&self.widths, "FAN")?;
        let last = self.widths.len() - 2;
        Ok(self
            .widths
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                if i == last {
                    Layer::Linear {
                        d_in: pair[0],
                        d_out: pair[1],
                    }
                } else {
                    Layer::Fan {
                        d_in: pair[0],
                        d_out: pair[1],
                        p_ratio: self.p_ratio,
                        activation: self.activation,
                    }
                }
            })
            .collect())
    }
}

/// Splits a FAN layer of `width` outputs into `(d_p, d_q)`: `d_p` cosine and
/// `d_p` sine channels, `d_q = width − 2d_p` nonlinear ones.
pub fn fan_split(width: usize, p_ratio: f64) -> Result<(usize, usize)> {
    if !(p_ratio > 0.0 && p_ratio < 0.5) {
        return Err(Error::contract(format!(
            "FAN p_ratio must lie in (0, 0.5), got {p_ratio}"
        )));
    }
    let dp = (width as f64 * p_ratio).round() as usize;
    if dp == 0 || 2 * dp >= width {
        return Err(Error::contract(format!(
            "FAN width {width} with p_ratio {p_ratio} leaves an empty partition"
        )));
    }
    Ok((dp, width - 2 * dp))
}

/// Searches hidden widths `1..=max_width` for the configuration whose
/// trainable count is closest to `budget`, failing if it misses by more than
/// [`BUDGET_TOLERANCE`].
pub fn match_budget(
    budget: usize,
    max_width: usize,
    make: impl Fn(usize) -> ModelConfig,
) -> Result<(ModelConfig, usize)> {
    let mut best: Option<(ModelConfig, usize)> = None;
    for h in 1..=max_width {
        let cfg = make(h);
        let Ok(count) = cfg.trainable_count() else {
            continue;
        };
        let better = best
            .as_ref()
            .is_none_or(|(_, c)| count.abs_diff(budget) < c.abs_diff(budget));
        if better {
            best = Some((cfg, count));
        }
        if count > 2 * budget {
            break;
        }
    }
    let (cfg, count) = best.ok_or_else(|| Error::contract("no buildable configuration"))?;
    let miss = count.abs_diff(budget) as f64 / budget as f64;
    if miss > BUDGET_TOLERANCE {
        return Err(Error::contract(format!(
            "closest {} has {count} parameters, {:.1}% from the budget {budget}",
            cfg.name(),
            100.0 * miss
        )));
    }
    Ok((cfg, count))
}

//! Layer stacks over a flat, named parameter list.
//!
//! Every model in the crate is a [`Network`]: a sequence of [`Layer`]s whose
//! parameter blocks are stored in order as `"<layer>.<block>"`. Forward passes
//! take one tape [`Var`] per block so the same code serves training,
//! inference and gradient checks.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Unary, Var};
use crate::baselines::{fan_split, FanConfig, MlpConfig, RffConfig, SirenConfig};
use crate::error::{Error, Result};
use crate::qrun::{self, QrunConfig, QrunNetConfig};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Sin,
}

impl Activation {
    pub fn unary(self) -> Unary {
        match self {
            Activation::Tanh => Unary::Tanh,
            Activation::Relu => Unary::Relu,
            Activation::Sin => Unary::Sin,
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        self.unary().apply(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Frozen blocks (e.g. random Fourier projections) enter the tape as
    /// constants and are never updated.
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `x·Wᵀ + b`, `W` stored `d_out × d_in`.
    Linear {
        d_in: usize,
        d_out: usize,
    },
    Act(Activation),
    /// `sin(ω₀·(x·Wᵀ + b))`; `first` selects the input-layer init.
    Sine {
        d_in: usize,
        d_out: usize,
        omega0: f64,
        first: bool,
    },
    Qrun(QrunConfig),
    /// `[cos(2π x·Bᵀ), sin(2π x·Bᵀ)]` with frozen Gaussian `B`.
    Rff {
        d_in: usize,
        features: usize,
        sigma: f64,
    },
    /// `[cos(x·Wpᵀ), sin(x·Wpᵀ), σ(x·Wqᵀ + b)]`.
    Fan {
        d_in: usize,
        d_out: usize,
        p_ratio: f64,
        activation: Activation,
    },
}

fn uniform(rng: &mut SplitMix64, shape: &[usize], bound: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.uniform_range(-bound, bound);
    }
    t
}

impl Layer {
    pub fn d_in(&self) -> Option<usize> {
        match *self {
            Layer::Linear { d_in, .. }
            | Layer::Sine { d_in, .. }
            | Layer::Rff { d_in, .. }
            | Layer::Fan { d_in, .. } => Some(d_in),
            Layer::Qrun(ref c) => Some(c.d_in),
            Layer::Act(_) => None,
        }
    }

    pub fn d_out(&self) -> Option<usize> {
        match *self {
            Layer::Linear { d_out, .. } | Layer::Sine { d_out, .. } | Layer::Fan { d_out, .. } => {
                Some(d_out)
            }
            Layer::Rff { features, .. } => Some(2 * features),
            Layer::Qrun(ref c) => Some(c.d_out),
            Layer::Act(_) => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Layer::Linear { d_in, d_out } if *d_in == 0 || *d_out == 0 => {
                Err(Error::contract("linear layer widths must be positive"))
            }
            Layer::Sine { omega0, .. } if !(*omega0 > 0.0 && omega0.is_finite()) => Err(
                Error::contract(format!("sine frequency scale must be > 0, got {omega0}")),
            ),
            Layer::Sine { d_in, d_out, .. } if *d_in == 0 || *d_out == 0 => {
                Err(Error::contract("sine layer widths must be positive"))
            }
            Layer::Qrun(c) => c.validate(),
            Layer::Rff {
                d_in,
                features,
                sigma,
            } => {
                if *d_in == 0 || *features == 0 || !(*sigma > 0.0 && sigma.is_finite()) {
                    Err(Error::contract(
                        "random Fourier features need positive sizes and bandwidth",
                    ))
                } else {
                    Ok(())
                }
            }
            Layer::Fan {
                d_in,
                d_out,
                p_ratio,
                ..
            } => {
                if *d_in == 0 {
                    return Err(Error::contract("FAN input width must be positive"));
                }
                fan_split(*d_out, *p_ratio).map(|_| ())
            }
            _ => Ok(()),
        }
    }

    /// Draws initial blocks as `(block name, value, trainable)`.
    fn init(&self, rng: &mut SplitMix64) -> Result<Vec<(&'static str, Tensor, bool)>> {
        Ok(match *self {
            Layer::Linear { d_in, d_out } => {
                let bound = (1.0 / d_in as f64).sqrt();
                vec![
                    ("W", uniform(rng, &[d_out, d_in], bound), true),
                    ("b", uniform(rng, &[d_out], bound), true),
                ]
            }
            Layer::Act(_) => vec![],
            Layer::Sine {
                d_in,
                d_out,
                omega0,
                first,
            } => {
                let bound = if first {
                    1.0 / d_in as f64
                } else {
                    (6.0 / d_in as f64).sqrt() / omega0
                };
                let w = uniform(rng, &[d_out, d_in], bound);
                let b = uniform(rng, &[d_out], (1.0 / d_in as f64).sqrt());
                vec![("W", w, true), ("b", b, true)]
            }
            Layer::Qrun(ref c) => qrun::qrun_init(c, rng)?.into_blocks(),
            Layer::Rff {
                d_in,
                features,
                sigma,
            } => {
                let mut b = Tensor::zeros(&[features, d_in]);
                for v in b.data_mut() {
                    *v = sigma * rng.normal();
                }
                vec![("B", b, false)]
            }
            Layer::Fan {
                d_in,
                d_out,
                p_ratio,
                ..
            } => {
                let (dp, dq) = fan_split(d_out, p_ratio)?;
                let bound = (1.0 / d_in as f64).sqrt();
                vec![
                    ("Wp", uniform(rng, &[dp, d_in], bound), true),
                    ("Wq", uniform(rng, &[dq, d_in], bound), true),
                    ("bq", uniform(rng, &[dq], bound), true),
                ]
            }
        })
    }

    fn forward(&self, tape: &mut Tape, blocks: &[Var], x: Var) -> Result<Var> {
        match *self {
            Layer::Linear { .. } => tape.affine(x, blocks[0], blocks[1]),
            Layer::Act(a) => Ok(tape.unary(a.unary(), x)),
            Layer::Sine { omega0, .. } => {
                let z = tape.affine(x, blocks[0], blocks[1])?;
                let z = tape.scale(z, omega0);
                Ok(tape.sin(z))
            }
            Layer::Qrun(ref c) => qrun::qrun_tape_forward(c, tape, blocks, x),
            Layer::Rff { .. } => {
                let z = tape.matmul_bt(x, blocks[0])?;
                let z = tape.scale(z, std::f64::consts::TAU);
                let c = tape.cos(z);
                let s = tape.sin(z);
                tape.concat_cols(&[c, s])
            }
            Layer::Fan { activation, .. } => {
                let p = tape.matmul_bt(x, blocks[0])?;
                let c = tape.cos(p);
                let s = tape.sin(p);
                let q = tape.affine(x, blocks[1], blocks[2])?;
                let q = tape.unary(activation.unary(), q);
                tape.concat_cols(&[c, s, q])
            }
        }
    }
}

/// Model configurations selectable by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Qrun(QrunNetConfig),
    Mlp(MlpConfig),
    Siren(SirenConfig),
    Rff(RffConfig),
    Fan(FanConfig),
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Qrun(_) => "qrun",
            ModelConfig::Mlp(c) => match c.activation {
                Activation::Tanh => "mlp_tanh",
                Activation::Relu => "mlp_relu",
                Activation::Sin => "mlp_sin",
            },
            ModelConfig::Siren(_) => "siren",
            ModelConfig::Rff(_) => "rff",
            ModelConfig::Fan(_) => "fan",
        }
    }

    pub fn layers(&self) -> Result<Vec<Layer>> {
        match self {
            ModelConfig::Qrun(c) => c.layers(),
            ModelConfig::Mlp(c) => c.layers(),
            ModelConfig::Siren(c) => c.layers(),
            ModelConfig::Rff(c) => c.layers(),
            ModelConfig::Fan(c) => c.layers(),
        }
    }

    pub fn build(&self, seed: u64) -> Result<Network> {
        Network::new(self.layers()?, seed)
    }

    /// Trainable scalar count without drawing any weights.
    pub fn trainable_count(&self) -> Result<usize> {
        Ok(self.build(0)?.trainable_count())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    /// `spans[i]` is the range of `params` owned by layer `i`.
    spans: Vec<std::ops::Range<usize>>,
    params: Vec<Param>,
    d_in: usize,
    d_out: usize,
}

impl Network {
    /// Validates the width chain and draws every block from one stream.
    pub fn new(layers: Vec<Layer>, seed: u64) -> Result<Self> {
        let mut rng = SplitMix64::new(seed);
        let first = layers
            .iter()
            .find_map(Layer::d_in)
            .ok_or_else(|| Error::contract("a network needs at least one weighted layer"))?;
        let mut width = first;
        let mut params = Vec::new();
        let mut spans = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            layer.validate()?;
            if let Some(d) = layer.d_in() {
                if d != width {
                    return Err(Error::Shape {
                        op: "network",
                        left: vec![width],
                        right: vec![d],
                    });
                }
            }
            if let Some(d) = layer.d_out() {
                width = d;
            }
            let start = params.len();
            for (block, value, trainable) in layer.init(&mut rng)? {
                params.push(Param {
                    name: format!("{i}.{block}"),
                    value,
                    trainable,
                });
            }
            spans.push(start..params.len());
        }
        Ok(Self {
            layers,
            spans,
            params,
            d_in: first,
            d_out: width,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn total_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Replaces block values, keeping names and shapes.
    pub fn load(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::contract(format!(
                "expected {} parameter blocks, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, v) in self.params.iter().zip(&values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Shape {
                    op: "load",
                    left: p.value.shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value = v;
        }
        Ok(())
    }

    /// Pushes every block onto `tape`: trainable ones as parameters, frozen
    /// ones as constants.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if p.trainable {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect()
    }

    /// Forward pass for a batch `x` of shape `N × d_in`; `vars` as returned
    /// by [`Network::register`] (or any tape leaves of the same shapes).
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        if vars.len() != self.params.len() {
            return Err(Error::contract(format!(
                "network has {} blocks, {} vars given",
                self.params.len(),
                vars.len()
            )));
        }
        let mut h = x;
        for (layer, span) in self.layers.iter().zip(&self.spans) {
            h = layer.forward(tape, &vars[span.clone()], h)?;
        }
        Ok(h)
    }

    /// Inference on a batch of rows.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.constant(p.value.clone()))
            .collect();
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, &vars, xv)?;
        Ok(tape.value(y).clone())
    }

    /// `(name, value)` of every block, the layout `grad_check` expects.
    pub fn blocks(&self) -> Vec<(String, Tensor)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_chain_is_checked() {
        let bad = vec![
            Layer::Linear { d_in: 2, d_out: 3 },
            Layer::Act(Activation::Tanh),
            Layer::Linear { d_in: 4, d_out: 1 },
        ];
        assert!(matches!(Network::new(bad, 0), Err(Error::Shape { .. })));
    }

    #[test]
    fn same_seed_same_weights() {
        let layers = vec![
            Layer::Linear { d_in: 2, d_out: 3 },
            Layer::Act(Activation::Relu),
        ];
        assert_eq!(
            Network::new(layers.clone(), 4).unwrap(),
            Network::new(layers.clone(), 4).unwrap()
        );
        assert_ne!(
            Network::new(layers.clone(), 4).unwrap(),
            Network::new(layers, 5).unwrap()
        );
    }

    #[test]
    fn load_rejects_wrong_shapes() {
        let mut net = Network::new(vec![Layer::Linear { d_in: 2, d_out: 1 }], 0).unwrap();
        assert!(net
            .load(vec![Tensor::zeros(&[2, 1]), Tensor::zeros(&[1])])
            .is_err());
        assert!(net
            .load(vec![Tensor::zeros(&[1, 2]), Tensor::zeros(&[1])])
            .is_ok());
        assert_eq!(
            net.predict(&Tensor::filled(&[3, 2], 1.0)).unwrap().data(),
            [0.0; 3]
        );
    }

    #[test]
    fn model_config_tag_and_unknown_keys() {
        let cfg: ModelConfig =
            serde_json::from_str(r#"{"kind":"mlp","widths":[1,8,1],"activation":"relu"}"#).unwrap();
        assert_eq!(cfg.name(), "mlp_relu");
        let err = serde_json::from_str::<ModelConfig>(
            r#"{"kind":"mlp","widths":[1,8,1],"activaton":"relu"}"#,
        );
        assert!(err.is_err());
    }
}

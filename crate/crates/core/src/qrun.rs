//! The relaxed re-uploading layer.
//!
//! For an input `x ∈ R^{d_in}` the layer projects to `p = d_out/α` positions,
//! `x' = W0·x + b0`, encodes every position as
//! `h_j = [cos(w₁x'_j), sin(w₁x'_j), …, cos(w_n x'_j), sin(w_n x'_j)]`, and
//! maps each `h_j` through one shared three-layer "observable" network
//! `2n → m → m → α`. The output concatenates the `p` blocks of `α` values.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{Activation, Layer};
use crate::rng::SplitMix64;

/// Smallest spacing between initial frequencies.
pub const MIN_FREQUENCY_GAP: f64 = 1e-6;
const LOWEST_FREQUENCY: f64 = 0.5;

fn default_true() -> bool {
    true
}

fn default_omega_max() -> f64 {
    30.0
}

fn default_activation() -> Activation {
    Activation::Tanh
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QrunConfig {
    pub d_in: usize,
    pub d_out: usize,
    pub alpha: usize,
    pub n: usize,
    pub m: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_true")]
    pub use_bias_observable: bool,
    /// Upper end of the initial frequency range `U(0.5, omega_max)`.
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
}

impl QrunConfig {
    /// Config with default activation, biases and frequency range.
    pub fn new(d_in: usize, d_out: usize, alpha: usize, n: usize, m: usize) -> Self {
        Self {
            d_in,
            d_out,
            alpha,
            n,
            m,
            activation: Activation::Tanh,
            use_bias_observable: true,
            omega_max: default_omega_max(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_out == 0 || self.alpha == 0 || self.n == 0 || self.m == 0 {
            return Err(Error::contract(
                "Q-RUN sizes d_in, d_out, alpha, n, m must all be positive",
            ));
        }
        if self.d_out % self.alpha != 0 {
            return Err(Error::contract(format!(
                "d_out = {} is not divisible by alpha = {}",
                self.d_out, self.alpha
            )));
        }
        if self.activation == Activation::Sin {
            return Err(Error::contract(
                "observable activation must be tanh or relu",
            ));
        }
        if !(self.omega_max > LOWEST_FREQUENCY && self.omega_max.is_finite()) {
            return Err(Error::contract(format!(
                "omega_max must exceed {LOWEST_FREQUENCY}, got {}",
                self.omega_max
            )));
        }
        Ok(())
    }

    /// Number of positions `p = d_out / α`.
    pub fn positions(&self) -> usize {
        self.d_out / self.alpha
    }
}

/// Nominal parameter count of the layer: projection without its bias,
/// frequencies, and observable weights without biases,
/// `d_in·d_out/α + n(1 + 2m) + m² + mα`.
pub fn nominal_param_count(cfg: &QrunConfig) -> usize {
    let (n, m) = (cfg.n, cfg.m);
    cfg.d_in * cfg.d_out / cfg.alpha + n * (1 + 2 * m) + m * m + m * cfg.alpha
}

/// Scalars actually trained: the nominal count plus `p` for `b0`, plus
/// `2m + α` when the observable carries biases.
pub fn param_count(cfg: &QrunConfig) -> usize {
    let biases = if cfg.use_bias_observable {
        2 * cfg.m + cfg.alpha
    } else {
        0
    };
    nominal_param_count(cfg) + cfg.positions() + biases
}

#[derive(Debug, Clone, PartialEq)]
pub struct QrunParams {
    pub w0: Tensor,
    pub b0: Tensor,
    pub w: Tensor,
    pub w1: Tensor,
    pub b1: Option<Tensor>,
    pub w2: Tensor,
    pub b2: Option<Tensor>,
    pub w3: Tensor,
    pub b3: Option<Tensor>,
}

impl QrunParams {
    /// Blocks in storage order `W0 b0 w W1 [b1] W2 [b2] W3 [b3]`.
    pub fn into_blocks(self) -> Vec<(&'static str, Tensor, bool)> {
        let mut out = vec![
            ("W0", self.w0, true),
            ("b0", self.b0, true),
            ("w", self.w, true),
            ("W1", self.w1, true),
        ];
        if let Some(b) = self.b1 {
            out.push(("b1", b, true));
        }
        out.push(("W2", self.w2, true));
        if let Some(b) = self.b2 {
            out.push(("b2", b, true));
        }
        out.push(("W3", self.w3, true));
        if let Some(b) = self.b3 {
            out.push(("b3", b, true));
        }
        out
    }

    /// Inverse of [`QrunParams::into_blocks`].
    pub fn from_blocks(cfg: &QrunConfig, blocks: &[Tensor]) -> Result<Self> {
        let expected = if cfg.use_bias_observable { 9 } else { 6 };
        if blocks.len() != expected {
            return Err(Error::contract(format!(
                "Q-RUN expects {expected} blocks, got {}",
                blocks.len()
            )));
        }
        let mut it = blocks.iter().cloned();
        let mut next = || it.next().expect("length checked");
        let bias = cfg.use_bias_observable;
        let (w0, b0, w, w1) = (next(), next(), next(), next());
        let b1 = bias.then(&mut next);
        let w2 = next();
        let b2 = bias.then(&mut next);
        let w3 = next();
        let b3 = bias.then(&mut next);
        let params = Self {
            w0,
            b0,
            w,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        };
        params.check_shapes(cfg)?;
        Ok(params)
    }

    fn check_shapes(&self, cfg: &QrunConfig) -> Result<()> {
        let (p, n, m, a) = (cfg.positions(), cfg.n, cfg.m, cfg.alpha);
        let mut expect: Vec<(&Tensor, Vec<usize>)> = vec![
            (&self.w0, vec![p, cfg.d_in]),
            (&self.b0, vec![p]),
            (&self.w, vec![n]),
            (&self.w1, vec![m, 2 * n]),
            (&self.w2, vec![m, m]),
            (&self.w3, vec![a, m]),
        ];
        for (b, len) in [(&self.b1, m), (&self.b2, m), (&self.b3, a)] {
            if let Some(b) = b {
                expect.push((b, vec![len]));
            }
        }
        for (t, shape) in expect {
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape {
                    op: "qrun params",
                    left: shape,
                    right: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut SplitMix64, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.uniform_range(-bound, bound);
    }
    t
}

/// Weights `U(±√(1/fan_in))`, zero biases, and frequencies drawn from
/// `U(0.5, omega_max)`, sorted and pushed apart to a minimum gap.
pub fn qrun_init(cfg: &QrunConfig, rng: &mut SplitMix64) -> Result<QrunParams> {
    cfg.validate()?;
    let (p, n, m, a) = (cfg.positions(), cfg.n, cfg.m, cfg.alpha);
    let w0 = uniform(rng, &[p, cfg.d_in], cfg.d_in);
    let mut w: Vec<f64> = (0..n)
        .map(|_| rng.uniform_range(LOWEST_FREQUENCY, cfg.omega_max))
        .collect();
    w.sort_by(f64::total_cmp);
    for i in 1..n {
        if w[i] - w[i - 1] <= MIN_FREQUENCY_GAP {
            w[i] = w[i - 1] + 2.0 * MIN_FREQUENCY_GAP;
        }
    }
    let w1 = uniform(rng, &[m, 2 * n], 2 * n);
    let w2 = uniform(rng, &[m, m], m);
    let w3 = uniform(rng, &[a, m], m);
    let bias = |len: usize| cfg.use_bias_observable.then(|| Tensor::zeros(&[len]));
    Ok(QrunParams {
        w0,
        b0: Tensor::zeros(&[p]),
        w: Tensor::vector(w),
        w1,
        b1: bias(m),
        w2,
        b2: bias(m),
        w3,
        b3: bias(a),
    })
}

/// Interleaved `(cos, sin)` encoding of every position, one row per position.
pub fn reupload_encode(x_prime: &[f64], w: &[f64]) -> Vec<Vec<f64>> {
    x_prime
        .iter()
        .map(|&x| {
            w.iter()
                .flat_map(|&wi| {
                    let (s, c) = (wi * x).sin_cos();
                    [c, s]
                })
                .collect()
        })
        .collect()
}

fn dense(w: &Tensor, b: Option<&Tensor>, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|r| {
            let dot = w.row(r).iter().zip(x).fold(0.0, |acc, (a, b)| acc + a * b);
            dot + b.map_or(0.0, |b| b.data()[r])
        })
        .collect()
}

/// Shared observable network on one encoded position.
pub fn observable_apply(
    h_j: &[f64],
    params: &QrunParams,
    activation: Activation,
) -> Result<Vec<f64>> {
    if h_j.len() != params.w1.cols() {
        return Err(Error::Shape {
            op: "observable_apply",
            left: vec![params.w1.cols()],
            right: vec![h_j.len()],
        });
    }
    let act = |v: Vec<f64>| {
        v.into_iter()
            .map(|x| activation.apply(x))
            .collect::<Vec<_>>()
    };
    let z1 = act(dense(&params.w1, params.b1.as_ref(), h_j));
    let z2 = act(dense(&params.w2, params.b2.as_ref(), &z1));
    Ok(dense(&params.w3, params.b3.as_ref(), &z2))
}

/// Single-input evaluation written directly from the definition; the tape
/// path in [`qrun_tape_forward`] is checked against it.
pub fn qrun_forward(params: &QrunParams, cfg: &QrunConfig, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != cfg.d_in {
        return Err(Error::Shape {
            op: "qrun_forward",
            left: vec![cfg.d_in],
            right: vec![x.len()],
        });
    }
    params.check_shapes(cfg)?;
    let x_prime = dense(&params.w0, Some(&params.b0), x);
    let mut out = Vec::with_capacity(cfg.d_out);
    for h in reupload_encode(&x_prime, params.w.data()) {
        out.extend(observable_apply(&h, params, cfg.activation)?);
    }
    Ok(out)
}

/// Batched forward on a tape: `x` is `N × d_in`, the result `N × d_out`.
pub fn qrun_tape_forward(cfg: &QrunConfig, tape: &mut Tape, blocks: &[Var], x: Var) -> Result<Var> {
    let rows = tape.value(x).rows();
    let (p, n) = (cfg.positions(), cfg.n);
    let mut it = blocks.iter().copied();
    let mut next = || {
        it.next()
            .ok_or_else(|| Error::contract("missing Q-RUN parameter block"))
    };
    let (w0, b0, w, w1) = (next()?, next()?, next()?, next()?);
    let b1 = if cfg.use_bias_observable {
        Some(next()?)
    } else {
        None
    };
    let w2 = next()?;
    let b2 = if cfg.use_bias_observable {
        Some(next()?)
    } else {
        None
    };
    let w3 = next()?;
    let b3 = if cfg.use_bias_observable {
        Some(next()?)
    } else {
        None
    };

    let xp = tape.affine(x, w0, b0)?;
    // One row per (sample, position); outer product with the frequencies.
    let flat = tape.reshape(xp, &[rows * p, 1])?;
    let wr = tape.reshape(w, &[1, n])?;
    let phase = tape.matmul(flat, wr)?;
    let h = tape.cos_sin(phase)?;

    let act = cfg.activation.unary();
    let mut z = h;
    for (wk, bk, last) in [(w1, b1, false), (w2, b2, false), (w3, b3, true)] {
        z = match bk {
            Some(b) => tape.affine(z, wk, b)?,
            None => tape.matmul_bt(z, wk)?,
        };
        if !last {
            z = tape.unary(act, z);
        }
    }
    tape.reshape(z, &[rows, cfg.d_out])
}

/// A stack of re-uploading layers sharing `α, n, m`, optionally closed by a
/// linear read-out. `widths = [1, 32, 32, 1]` with a head gives
/// `Q-RUN(1→32) → Q-RUN(32→32) → Linear(32→1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QrunNetConfig {
    pub widths: Vec<usize>,
    pub alpha: usize,
    pub n: usize,
    pub m: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_true")]
    pub use_bias_observable: bool,
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
    #[serde(default = "default_true")]
    pub linear_head: bool,
}

impl QrunNetConfig {
    pub fn layer_config(&self, d_in: usize, d_out: usize) -> QrunConfig {
        QrunConfig {
            d_in,
            d_out,
            alpha: self.alpha,
            n: self.n,
            m: self.m,
            activation: self.activation,
            use_bias_observable: self.use_bias_observable,
            omega_max: self.omega_max,
        }
    }

    pub fn layers(&self) -> Result<Vec<Layer>> {
        if self.widths.len() < 2 || (self.linear_head && self.widths.len() < 3) {
            return Err(Error::contract(
                "Q-RUN network needs at least one Q-RUN layer",
            ));
        }
        let last = self.widths.len() - 2;
        Ok(self
            .widths
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                if self.linear_head && i == last {
                    Layer::Linear {
                        d_in: pair[0],
                        d_out: pair[1],
                    }
                } else {
                    Layer::Qrun(self.layer_config(pair[0], pair[1]))
                }
            })
            .collect())
    }
}

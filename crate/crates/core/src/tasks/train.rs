use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::rng::SplitMix64;

use super::dataset::{Dataset, Split};
use super::density::{
    kl_divergence, make_mixture, model_density, nll_normalized, KlReport, MixtureDistribution,
    UniformGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
    NllNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Adam(AdamConfig),
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam(AdamConfig::default())
    }
}

/// Trapezoid grid used by the density loss during training, in the
/// task's raw coordinates. With `jitter`, every epoch shifts the nodes by a
/// uniform fraction of one spacing so the model cannot hide mass between
/// fixed nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    #[serde(default)]
    pub jitter: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            lo: -12.0,
            hi: 12.0,
            points: 4096,
            jitter: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Rows per step; `None` trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    /// Record the test metric every this many epochs (0 = never).
    #[serde(default)]
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize, lr: f64) -> Self {
        Self {
            epochs,
            optimizer: OptimizerConfig::Adam(AdamConfig {
                lr,
                ..AdamConfig::default()
            }),
            batch_size: None,
            seed: 0,
            loss: LossKind::Mse,
            quadrature: QuadratureConfig::default(),
            eval_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::contract("epochs must be ≥ 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::contract("batch_size must be ≥ 1"));
        }
        let OptimizerConfig::Adam(adam) = self.optimizer;
        adam.validate()
    }
}

/// Density-estimation problem: samples from a mixture, stored raw.
/// Models see `x / scale`; KL is invariant under that change of variable.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTask {
    pub dist: MixtureDistribution,
    pub samples: Vec<f64>,
    pub scale: f64,
    /// Grid on which KL is evaluated, in raw coordinates.
    pub eval_grid: UniformGrid,
}

impl DensityTask {
    /// `k` components with means in `[−8, 8]`, `count` samples.
    pub fn mixture(seed: u64, k: usize, sigma_range: (f64, f64), count: usize) -> Result<Self> {
        let dist = make_mixture(seed, k, (-8.0, 8.0), sigma_range)?;
        let samples = dist.sample(&mut SplitMix64::new(seed ^ 0x5EED_5A3B_1E5D_0001), count)?;
        Ok(Self {
            dist,
            samples,
            scale: 12.0,
            eval_grid: UniformGrid::new(-12.0, 12.0, 4096)?,
        })
    }

    /// KL of the model density against the true mixture on `eval_grid`.
    pub fn kl(&self, net: &Network) -> Result<KlReport> {
        let nodes = self.eval_grid.nodes();
        let scaled = UniformGrid::new(
            self.eval_grid.lo / self.scale,
            self.eval_grid.hi / self.scale,
            self.eval_grid.points,
        )?;
        // Normalizing in scaled coordinates then dividing by `scale` gives
        // the raw-coordinate density.
        let q: Vec<f64> = model_density(net, &scaled)?
            .into_iter()
            .map(|v| v / self.scale)
            .collect();
        let p: Vec<f64> = nodes.iter().map(|&x| self.dist.pdf(x)).collect();
        kl_divergence(&p, &q, &self.eval_grid)
    }
}

pub enum Task<'a> {
    Regression(&'a Dataset),
    Density(&'a DensityTask),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mse,
    Mae,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    /// Training loss per epoch.
    pub history: Vec<f64>,
    /// `(epoch, test metric)` pairs when `eval_every > 0`.
    pub test_history: Vec<(usize, f64)>,
    /// Final metrics by name (`train_mse`, `test_mse`, `kl`, …).
    pub final_metrics: BTreeMap<String, f64>,
    pub wall_seconds: f64,
}

fn mse_loss(tape: &mut Tape, net: &Network, vars: &[Var], x: &Tensor, y: &Tensor) -> Result<Var> {
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y.clone());
    let out = net.forward(tape, vars, xv)?;
    let diff = tape.sub(out, yv)?;
    let sq = tape.square(diff);
    Ok(tape.mean(sq))
}

/// Mean error of the model over one split.
pub fn evaluate(net: &Network, data: &Dataset, metric: Metric, split: Split) -> Result<f64> {
    let rows = data.indices(split);
    if rows.is_empty() {
        return Err(Error::contract("cannot evaluate on an empty split"));
    }
    let (x, y) = data.gather(&rows)?;
    let pred = net.predict(&x)?;
    let errs = pred.data().iter().zip(y.data()).map(|(p, t)| p - t);
    let total = match metric {
        Metric::Mse => errs.fold(0.0, |a, e| a + e * e),
        Metric::Mae => errs.fold(0.0, |a, e| a + e.abs()),
    };
    Ok(total / pred.len() as f64)
}

struct Optimizer {
    trainable: Vec<usize>,
    state: AdamState,
}

impl Optimizer {
    fn new(net: &Network, cfg: &TrainConfig) -> Result<Self> {
        let trainable: Vec<usize> = (0..net.params().len())
            .filter(|&i| net.params()[i].trainable)
            .collect();
        let values: Vec<Tensor> = trainable
            .iter()
            .map(|&i| net.params()[i].value.clone())
            .collect();
        let OptimizerConfig::Adam(adam) = cfg.optimizer;
        Ok(Self {
            trainable,
            state: AdamState::new(adam, &values)?,
        })
    }

    /// Backward from `loss` and one Adam update. Returns `false` when a
    /// gradient is non-finite (the parameters are left untouched).
    fn step(&mut self, net: &mut Network, tape: &Tape, vars: &[Var], loss: Var) -> Result<bool> {
        let grads = tape.backward(loss)?;
        let g: Vec<Tensor> = self
            .trainable
            .iter()
            .map(|&i| grads.wrt(vars[i]).cloned().expect("leaf gradient"))
            .collect();
        if g.iter().any(|t| !t.all_finite()) {
            return Ok(false);
        }
        let mut values: Vec<Tensor> = self
            .trainable
            .iter()
            .map(|&i| net.params()[i].value.clone())
            .collect();
        adam_step(&mut values, &g, &mut self.state)?;
        for (&i, v) in self.trainable.iter().zip(values) {
            net.params_mut()[i].value = v;
        }
        Ok(true)
    }
}

/// Full training run. Deterministic in `cfg.seed`; aborts with
/// [`Error::Divergence`] on the first non-finite loss or gradient.
pub fn train(net: &mut Network, task: Task<'_>, cfg: &TrainConfig) -> Result<Metrics> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = SplitMix64::new(cfg.seed);
    let mut opt = Optimizer::new(net, cfg)?;
    let mut metrics = Metrics::default();
    let diverged = |epoch: usize, m: &Metrics| Error::Divergence {
        epoch,
        last_finite: m.history.len().checked_sub(1),
    };

    match (task, cfg.loss) {
        (Task::Regression(data), LossKind::Mse) => {
            if data.input_dim() != net.d_in() || data.target_dim() != net.d_out() {
                return Err(Error::Shape {
                    op: "train",
                    left: vec![net.d_in(), net.d_out()],
                    right: vec![data.input_dim(), data.target_dim()],
                });
            }
            let mut rows = data.indices(Split::Train);
            if rows.is_empty() {
                return Err(Error::contract("training split is empty"));
            }
            let full = data.gather(&rows)?;
            for epoch in 0..cfg.epochs {
                let batches: Vec<(Tensor, Tensor)> = match cfg.batch_size {
                    Some(b) if b < rows.len() => {
                        rng.shuffle(&mut rows);
                        rows.chunks(b)
                            .map(|c| data.gather(c))
                            .collect::<Result<_>>()?
                    }
                    _ => vec![full.clone()],
                };
                let mut total = 0.0;
                for (x, y) in &batches {
                    let mut tape = Tape::new();
                    let vars = net.register(&mut tape);
                    let loss = mse_loss(&mut tape, net, &vars, x, y)?;
                    let value = tape.value(loss).item();
                    if !value.is_finite() || !opt.step(net, &tape, &vars, loss)? {
                        return Err(diverged(epoch, &metrics));
                    }
                    total += value * x.rows() as f64;
                }
                metrics.history.push(total / rows.len() as f64);
                if cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 && !data.test.is_empty()
                {
                    metrics
                        .test_history
                        .push((epoch + 1, evaluate(net, data, Metric::Mse, Split::Test)?));
                }
            }
            for (name, metric) in [("mse", Metric::Mse), ("mae", Metric::Mae)] {
                metrics.final_metrics.insert(
                    format!("train_{name}"),
                    evaluate(net, data, metric, Split::Train)?,
                );
                if !data.test.is_empty() {
                    metrics.final_metrics.insert(
                        format!("test_{name}"),
                        evaluate(net, data, metric, Split::Test)?,
                    );
                }
            }
        }
        (Task::Density(task), LossKind::NllNormalized) => {
            if net.d_in() != 1 || net.d_out() != 1 {
                return Err(Error::contract(
                    "density models map one input to one output",
                ));
            }
            if cfg.batch_size.is_some() {
                return Err(Error::contract("density training is full-batch"));
            }
            let q = cfg.quadrature;
            let grid = UniformGrid::new(q.lo / task.scale, q.hi / task.scale, q.points)?;
            let (base, weights) = (grid.nodes(), grid.weights());
            let samples: Vec<f64> = task.samples.iter().map(|x| x / task.scale).collect();
            for epoch in 0..cfg.epochs {
                let nodes: Vec<f64> = if q.jitter {
                    let shift = (rng.uniform() - 0.5) * grid.step();
                    base.iter().map(|v| v + shift).collect()
                } else {
                    base.clone()
                };
                let mut tape = Tape::new();
                let vars = net.register(&mut tape);
                let loss = nll_normalized(&mut tape, net, &vars, &samples, &nodes, &weights)?;
                let value = tape.value(loss).item();
                if !value.is_finite() || !opt.step(net, &tape, &vars, loss)? {
                    return Err(diverged(epoch, &metrics));
                }
                metrics.history.push(value);
            }
            let report = task.kl(net)?;
            metrics.final_metrics.insert("kl".into(), report.kl);
            metrics
                .final_metrics
                .insert("kl_clipped".into(), report.clipped as f64);
        }
        (_, loss) => {
            return Err(Error::contract(format!(
                "loss {loss:?} does not fit this task"
            )));
        }
    }
    metrics.wall_seconds = start.elapsed().as_secs_f64();
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Layer, Network};
    use crate::tasks::dataset::Provenance;

    fn linear_data() -> Dataset {
        let mut rng = SplitMix64::new(1);
        let n = 64;
        let xs: Vec<f64> = (0..2 * n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let ys: Vec<f64> = xs
            .chunks(2)
            .map(|p| 0.7 * p[0] - 1.3 * p[1] + 0.25)
            .collect();
        Dataset::new(
            Tensor::matrix(n, 2, xs).unwrap(),
            Tensor::matrix(n, 1, ys).unwrap(),
            (0..48).collect(),
            (48..64).collect(),
            Provenance::new("linear", 1),
        )
        .unwrap()
    }

    #[test]
    fn linear_model_converges() {
        let data = linear_data();
        let mut net = Network::new(vec![Layer::Linear { d_in: 2, d_out: 1 }], 3).unwrap();
        let m = train(
            &mut net,
            Task::Regression(&data),
            &TrainConfig::new(2000, 0.05),
        )
        .unwrap();
        assert_eq!(m.history.len(), 2000);
        assert!(
            m.final_metrics["train_mse"] < 1e-10,
            "{:?}",
            m.final_metrics
        );
    }

    #[test]
    fn one_epoch_and_determinism() {
        let data = linear_data();
        let mut cfg = TrainConfig::new(1, 0.01);
        let mut a = Network::new(vec![Layer::Linear { d_in: 2, d_out: 1 }], 3).unwrap();
        let ma = train(&mut a, Task::Regression(&data), &cfg).unwrap();
        assert_eq!(ma.history.len(), 1);
        cfg.epochs = 30;
        cfg.batch_size = Some(10);
        let mut b = Network::new(vec![Layer::Linear { d_in: 2, d_out: 1 }], 3).unwrap();
        let mut c = b.clone();
        let mb = train(&mut b, Task::Regression(&data), &cfg).unwrap();
        let mc = train(&mut c, Task::Regression(&data), &cfg).unwrap();
        assert_eq!(mb.history, mc.history);
        assert_eq!(b, c);
    }

    #[test]
    fn divergence_is_reported() {
        let data = linear_data();
        let mut net = Network::new(vec![Layer::Linear { d_in: 2, d_out: 1 }], 0).unwrap();
        let mut values: Vec<Tensor> = net.params().iter().map(|p| p.value.clone()).collect();
        values[1] = Tensor::vector(vec![f64::NAN]);
        net.load(values).unwrap();
        let err = train(
            &mut net,
            Task::Regression(&data),
            &TrainConfig::new(5, 0.01),
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::Divergence {
                epoch: 0,
                last_finite: None
            }
        );
    }

    #[test]
    fn evaluation_reference_values() {
        let data = linear_data();
        let mut zero = Network::new(vec![Layer::Linear { d_in: 2, d_out: 1 }], 0).unwrap();
        zero.load(vec![Tensor::zeros(&[1, 2]), Tensor::zeros(&[1])])
            .unwrap();
        let signs: Vec<f64> = (0..64)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let pm = Dataset::new(
            data.inputs.clone(),
            Tensor::matrix(64, 1, signs).unwrap(),
            data.train.clone(),
            data.test.clone(),
            Provenance::default(),
        )
        .unwrap();
        assert_eq!(evaluate(&zero, &pm, Metric::Mse, Split::All).unwrap(), 1.0);
        let mut rng = SplitMix64::new(9);
        let noisy: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
        let nd = Dataset::new(
            data.inputs.clone(),
            Tensor::matrix(64, 1, noisy).unwrap(),
            vec![],
            vec![],
            Provenance::default(),
        )
        .unwrap();
        let mse = evaluate(&zero, &nd, Metric::Mse, Split::All).unwrap();
        let mae = evaluate(&zero, &nd, Metric::Mae, Split::All).unwrap();
        assert!(mse >= 0.0 && mae <= mse.sqrt());
        assert!(evaluate(&zero, &nd, Metric::Mse, Split::Test).is_err());
    }

    #[test]
    fn loss_kind_must_match_task() {
        let data = linear_data();
        let mut net = Network::new(vec![Layer::Linear { d_in: 2, d_out: 1 }], 0).unwrap();
        let mut cfg = TrainConfig::new(1, 0.01);
        cfg.loss = LossKind::NllNormalized;
        assert!(train(&mut net, Task::Regression(&data), &cfg).is_err());
    }

    #[test]
    fn density_training_reduces_kl() {
        let task = DensityTask::mixture(4, 3, (0.5, 1.0), 256).unwrap();
        let mut net = crate::model::ModelConfig::Mlp(crate::baselines::MlpConfig {
            widths: vec![1, 16, 1],
            activation: crate::model::Activation::Tanh,
        })
        .build(0)
        .unwrap();
        let before = task.kl(&net).unwrap().kl;
        let mut cfg = TrainConfig::new(200, 0.02);
        cfg.loss = LossKind::NllNormalized;
        cfg.quadrature.points = 512;
        let m = train(&mut net, Task::Density(&task), &cfg).unwrap();
        assert!(
            m.final_metrics["kl"] < before,
            "{before} -> {}",
            m.final_metrics["kl"]
        );
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok: TrainConfig =
            serde_json_like(r#"{"epochs":3,"optimizer":{"kind":"adam","lr":0.01}}"#).unwrap();
        assert_eq!(ok.epochs, 3);
        assert!(
            serde_json_like(r#"{"epochs":3,"optimizer":{"kind":"adam","lerning_rate":0.01}}"#)
                .is_err()
        );
    }

    fn serde_json_like(s: &str) -> std::result::Result<TrainConfig, serde_json::Error> {
        serde_json::from_str(s)
    }
}

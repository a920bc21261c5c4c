//! Benchmark suites: every registered model on one task family at matched
//! parameter budgets, over several seeds, flattened to result rows.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{match_budget, FanConfig, MlpConfig, RffConfig, SirenConfig};
use crate::error::{Error, Result};
use crate::model::{Activation, ModelConfig};
use crate::qrun::QrunNetConfig;
use crate::tasks::{fmt17, TaskData, TaskSpec, TrainConfig};

/// Seeds every suite runs by default.
pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

/// Seed of the fixed reference circuit behind the circuit-regression suites.
pub const CIRCUIT_SEED: u64 = 7;

/// Seeds of the two fixed mixtures; the runs vary only the model seed.
pub const MIXTURE_SEEDS: [u64; 2] = [11, 12];

const EPOCHS: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Rq1,
    De,
    Ir,
    Ablation,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Rq1, Suite::De, Suite::Ir, Suite::Ablation];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Rq1 => "rq1",
            Suite::De => "de",
            Suite::Ir => "ir",
            Suite::Ablation => "ablation",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| {
                Error::contract(format!(
                    "unknown suite {name:?}; expected one of rq1, de, ir, ablation"
                ))
            })
    }
}

/// One training session of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub task_label: String,
    pub task: TaskSpec,
    pub model_label: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

/// One `(run, metric)` result.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub task: String,
    pub model: String,
    pub param_count: usize,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub wall_seconds: f64,
    pub status: String,
}

impl BenchRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

fn mlp(widths: Vec<usize>, activation: Activation) -> ModelConfig {
    ModelConfig::Mlp(MlpConfig { widths, activation })
}

fn two_hidden(d_in: usize, h: usize) -> Vec<usize> {
    vec![d_in, h, h, 1]
}

/// SIREN, RFF-MLP and FAN with two hidden layers, each sized to `budget`.
fn fourier_baselines(
    d_in: usize,
    budget: usize,
    rff_sigma: f64,
) -> Result<Vec<(String, ModelConfig)>> {
    let siren = match_budget(budget, 256, |h| {
        ModelConfig::Siren(SirenConfig {
            widths: two_hidden(d_in, h),
            omega0: 30.0,
        })
    })?;
    let rff = match_budget(budget, 256, |h| {
        ModelConfig::Rff(RffConfig {
            widths: two_hidden(d_in, h),
            features: 16,
            sigma: rff_sigma,
            activation: Activation::Tanh,
        })
    })?;
    let fan = match_budget(budget, 256, |h| {
        ModelConfig::Fan(FanConfig {
            widths: two_hidden(d_in, h),
            p_ratio: 0.25,
            activation: Activation::Tanh,
        })
    })?;
    Ok([siren, rff, fan]
        .into_iter()
        .map(|(c, _)| (c.name().to_string(), c))
        .collect())
}

fn qrun(widths: Vec<usize>, n: usize, m: usize) -> ModelConfig {
    ModelConfig::Qrun(QrunNetConfig {
        widths,
        alpha: 2,
        n,
        m,
        activation: Activation::Tanh,
        use_bias_observable: true,
        omega_max: 30.0,
        linear_head: true,
    })
}

/// Q-RUN used on the circuit-regression task with `n` re-uploads: a single
/// re-uploading position, like the one-wire reference circuit.
pub fn rq1_qrun(n: usize) -> ModelConfig {
    qrun(vec![1, 2, 1], n, 16)
}

/// Q-RUN for density estimation: `Q-RUN(1→32) → Q-RUN(32→32) → Linear`,
/// 4 re-uploads, observable module `[8, 32, 2]` (3,421 parameters).
pub fn de_qrun() -> ModelConfig {
    qrun(vec![1, 32, 32, 1], 4, 32)
}

/// Q-RUN for coordinate fitting under 650 parameters.
pub fn ir_qrun(d_in: usize) -> ModelConfig {
    qrun(vec![d_in, 64, 1], 4, 16)
}

fn models(suite: Suite) -> Result<Vec<(String, ModelConfig)>> {
    let mut out = Vec::new();
    match suite {
        Suite::Rq1 => {
            out.push(("qrun".to_string(), rq1_qrun(4)));
            out.push(("mlp_relu".into(), mlp(two_hidden(1, 32), Activation::Relu)));
            out.push(("mlp_tanh".into(), mlp(two_hidden(1, 32), Activation::Tanh)));
            out.extend(fourier_baselines(1, 1153, 1.0)?);
        }
        Suite::De => {
            out.push(("qrun".to_string(), de_qrun()));
            out.push(("mlp_relu".into(), mlp(two_hidden(1, 64), Activation::Relu)));
            out.push(("mlp_tanh".into(), mlp(two_hidden(1, 64), Activation::Tanh)));
            out.extend(fourier_baselines(1, 4353, 4.0)?);
        }
        Suite::Ir => {
            // Two-dimensional coordinates; the 1-D signal reuses the same
            // architectures with one input.
            out.push(("qrun".to_string(), ir_qrun(2)));
            let (relu, _) = match_budget(840, 64, |h| mlp(two_hidden(2, h), Activation::Relu))?;
            out.push(("mlp_relu".into(), relu));
            let (tanh, _) = match_budget(840, 64, |h| mlp(two_hidden(2, h), Activation::Tanh))?;
            out.push(("mlp_tanh".into(), tanh));
            out.extend(fourier_baselines(2, 840, 4.0)?);
        }
        Suite::Ablation => {
            for n in 1..=4 {
                out.push((format!("qrun_n{n}"), rq1_qrun(n)));
            }
        }
    }
    Ok(out)
}

/// Rewrites a model built for `d_in` inputs to take `to` inputs.
fn with_input_dim(model: &ModelConfig, to: usize) -> ModelConfig {
    let mut m = model.clone();
    match &mut m {
        ModelConfig::Qrun(c) => c.widths[0] = to,
        ModelConfig::Mlp(c) => c.widths[0] = to,
        ModelConfig::Siren(c) => c.widths[0] = to,
        ModelConfig::Rff(c) => c.widths[0] = to,
        ModelConfig::Fan(c) => c.widths[0] = to,
    }
    m
}

fn tasks(suite: Suite) -> Vec<(String, TaskSpec)> {
    match suite {
        Suite::Rq1 | Suite::Ablation => vec![(
            "drqc_1q8u".into(),
            TaskSpec::drqc_single_qubit(CIRCUIT_SEED),
        )],
        Suite::De => vec![
            ("px1".into(), density_task(MIXTURE_SEEDS[0], (0.08, 1.0))),
            ("px2".into(), density_task(MIXTURE_SEEDS[1], (0.08, 0.1))),
        ],
        Suite::Ir => vec![
            (
                "radial_chirp".into(),
                TaskSpec::Image {
                    source: "radial_chirp".into(),
                    size: 32,
                },
            ),
            (
                "signal".into(),
                TaskSpec::Signal {
                    points: 1000,
                    data_seed: 5,
                },
            ),
        ],
    }
}

/// Mixture of 25 components, means in `[−8, 8]`, 1,024 samples.
pub fn density_task(data_seed: u64, sigma_range: (f64, f64)) -> TaskSpec {
    TaskSpec::Density {
        sigma_range,
        components: 25,
        samples: 1024,
        data_seed,
    }
}

fn train_config(suite: Suite, model: &ModelConfig, seed: u64) -> TrainConfig {
    let lr = match (suite, model) {
        (Suite::De, _) => 1e-3,
        (_, ModelConfig::Siren(_)) => 1e-4,
        _ => 3e-3,
    };
    let mut cfg = TrainConfig::new(EPOCHS, lr);
    cfg.seed = seed;
    if suite == Suite::De {
        cfg.loss = crate::tasks::LossKind::NllNormalized;
        cfg.quadrature.points = DE_TRAIN_GRID;
        cfg.quadrature.jitter = true;
    }
    cfg
}

/// Training-time quadrature nodes for density runs. KL is always evaluated
/// on the full 4,096-node grid.
pub const DE_TRAIN_GRID: usize = 512;

/// Every session of `suite` over `seeds`, in a fixed order.
pub fn suite_runs(suite: Suite, seeds: &[u64]) -> Result<Vec<RunSpec>> {
    let models = models(suite)?;
    let mut runs = Vec::new();
    for (task_label, task) in tasks(suite) {
        let d_in = match &task {
            TaskSpec::Image { .. } => 2,
            _ => 1,
        };
        for (model_label, model) in &models {
            for &seed in seeds {
                let model = with_input_dim(model, d_in);
                runs.push(RunSpec {
                    task_label: task_label.clone(),
                    task: task.clone(),
                    model_label: model_label.clone(),
                    train: train_config(suite, &model, seed),
                    model,
                    seed,
                });
            }
        }
    }
    Ok(runs)
}

/// Metric a suite is judged by for a task.
pub fn primary_metric(task: &TaskSpec) -> &'static str {
    match task {
        TaskSpec::Drqc { .. } => "test_mse",
        TaskSpec::Density { .. } => "kl",
        TaskSpec::Image { .. } | TaskSpec::Signal { .. } => "train_mse",
    }
}

/// Trains one session. Failures become a single row carrying the status.
pub fn run_one(spec: &RunSpec, data: &TaskData) -> Vec<BenchRow> {
    let start = Instant::now();
    let row = |metric: &str, value: f64, params: usize, status: String| BenchRow {
        task: spec.task_label.clone(),
        model: spec.model_label.clone(),
        param_count: params,
        metric: metric.to_string(),
        value,
        seed: spec.seed,
        wall_seconds: start.elapsed().as_secs_f64(),
        status,
    };
    let mut net = match spec.model.build(spec.seed) {
        Ok(net) => net,
        Err(e) => {
            return vec![row(
                primary_metric(&spec.task),
                f64::NAN,
                0,
                format!("error: {e}"),
            )]
        }
    };
    let params = net.trainable_count();
    match crate::tasks::train(&mut net, data.task(), &spec.train) {
        Ok(m) => m
            .final_metrics
            .iter()
            .filter(|(k, _)| k.as_str() != "kl_clipped")
            .map(|(k, &v)| {
                let mut r = row(k, v, params, "ok".into());
                r.wall_seconds = m.wall_seconds;
                r
            })
            .collect(),
        Err(e @ Error::Divergence { .. }) => vec![row(
            primary_metric(&spec.task),
            f64::NAN,
            params,
            format!("diverged: {e}"),
        )],
        Err(e) => vec![row(
            primary_metric(&spec.task),
            f64::NAN,
            params,
            format!("error: {e}"),
        )],
    }
}

/// Runs every session sequentially, building each task once. `progress`
/// sees each session's rows as they complete.
pub fn run_suite(
    runs: &[RunSpec],
    mut progress: impl FnMut(&RunSpec, &[BenchRow]),
) -> Result<Vec<BenchRow>> {
    let mut cache: Vec<(TaskSpec, TaskData)> = Vec::new();
    let mut rows = Vec::new();
    for spec in runs {
        let idx = match cache.iter().position(|(t, _)| *t == spec.task) {
            Some(i) => i,
            None => {
                cache.push((spec.task.clone(), spec.task.build()?));
                cache.len() - 1
            }
        };
        let out = run_one(spec, &cache[idx].1);
        progress(spec, &out);
        rows.extend(out);
    }
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn sort_rows(rows: &mut [BenchRow]) {
    rows.sort_by(|a, b| {
        (&a.task, &a.model, a.seed, &a.metric).cmp(&(&b.task, &b.model, b.seed, &b.metric))
    });
}

pub const CSV_HEADER: [&str; 8] = [
    "task",
    "model",
    "param_count",
    "metric",
    "value",
    "seed",
    "wall_seconds",
    "status",
];

pub fn write_rows(rows: &[BenchRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.model.clone(),
            r.param_count.to_string(),
            r.metric.clone(),
            fmt17(r.value),
            r.seed.to_string(),
            format!("{:.3}", r.wall_seconds),
            r.status.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Median of a metric over the successful seeds of one `(task, model)`.
pub fn median(rows: &[BenchRow], task: &str, model: &str, metric: &str) -> Option<f64> {
    let mut v: Vec<f64> = rows
        .iter()
        .filter(|r| r.ok() && r.task == task && r.model == model && r.metric == metric)
        .map(|r| r.value)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_parse_by_name() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()).unwrap(), s);
        }
        assert!(Suite::parse("").is_err());
        assert!(Suite::parse("rq2").is_err());
    }

    #[test]
    fn budgets_follow_the_protocol() {
        let count = |m: &ModelConfig| m.trainable_count().unwrap();
        assert_eq!(count(&de_qrun()), 3421);
        assert!(count(&ir_qrun(2)) <= 650);
        for run in suite_runs(Suite::De, &[0]).unwrap() {
            if run.model_label.starts_with("mlp") {
                assert!(count(&run.model) >= 4000);
            }
            assert_eq!(run.train.epochs, 3000);
        }
        let rq1 = suite_runs(Suite::Rq1, &[0]).unwrap();
        let relu = rq1.iter().find(|r| r.model_label == "mlp_relu").unwrap();
        let q = rq1.iter().find(|r| r.model_label == "qrun").unwrap();
        assert!(count(&q.model) <= count(&relu.model));
        let ir = suite_runs(Suite::Ir, &[0]).unwrap();
        let relu = ir.iter().find(|r| r.model_label == "mlp_relu").unwrap();
        assert!(count(&relu.model).abs_diff(840) <= 42);
    }

    #[test]
    fn suites_cover_models_and_seeds() {
        let abl = suite_runs(Suite::Ablation, &DEFAULT_SEEDS).unwrap();
        assert_eq!(abl.len(), 12);
        let de = suite_runs(Suite::De, &DEFAULT_SEEDS).unwrap();
        for task in ["px1", "px2"] {
            for model in ["qrun", "mlp_tanh", "mlp_relu"] {
                assert_eq!(
                    de.iter()
                        .filter(|r| r.task_label == task && r.model_label == model)
                        .count(),
                    3
                );
            }
        }
        let ir = suite_runs(Suite::Ir, &[0]).unwrap();
        let signal_q = ir
            .iter()
            .find(|r| r.task_label == "signal" && r.model_label == "qrun")
            .unwrap();
        assert_eq!(signal_q.model.build(0).unwrap().d_in(), 1);
    }

    #[test]
    fn failures_become_status_rows_and_csv_is_sorted() {
        let mut runs = suite_runs(Suite::Ablation, &[1, 0]).unwrap();
        runs.truncate(2);
        for r in &mut runs {
            r.train.epochs = 2;
        }
        runs[1].train.optimizer =
            crate::tasks::OptimizerConfig::Adam(crate::autodiff::AdamConfig {
                lr: f64::INFINITY,
                ..Default::default()
            });
        let rows = run_suite(&runs, |_, _| {}).unwrap();
        assert!(rows.iter().any(|r| !r.ok() && r.value.is_nan()));
        assert!(rows.iter().any(|r| r.ok() && r.metric == "test_mse"));
        assert!(rows
            .windows(2)
            .all(|w| (w[0].seed, &w[0].metric) <= (w[1].seed, &w[1].metric)));
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("task,model,param_count,metric,value,seed,wall_seconds,status\n"));
        assert_eq!(
            median(&rows, "drqc_1q8u", "qrun_n1", "test_mse"),
            rows.iter()
                .find(|r| r.ok() && r.metric == "test_mse")
                .map(|r| r.value)
        );
    }

    #[test]
    fn median_of_even_and_odd() {
        let mk = |v: f64, status: &str| BenchRow {
            task: "t".into(),
            model: "m".into(),
            param_count: 1,
            metric: "x".into(),
            value: v,
            seed: 0,
            wall_seconds: 0.0,
            status: status.into(),
        };
        let rows = vec![
            mk(3.0, "ok"),
            mk(1.0, "ok"),
            mk(f64::NAN, "diverged"),
            mk(2.0, "ok"),
        ];
        assert_eq!(median(&rows, "t", "m", "x"), Some(2.0));
        assert_eq!(median(&rows[..2], "t", "m", "x"), Some(2.0));
        assert_eq!(median(&rows, "t", "m", "y"), None);
    }
}

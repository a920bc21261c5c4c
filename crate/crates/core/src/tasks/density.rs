use std::f64::consts::TAU;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::rng::SplitMix64;

/// Smallest density treated as mass when integrating `p log(p/q)`.
pub const KL_MASS_FLOOR: f64 = 1e-12;
/// Model densities are clipped to this before taking logs.
pub const KL_Q_FLOOR: f64 = 1e-300;

/// `points` equally spaced nodes on `[lo, hi]`, both ends included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || points < 2 {
            return Err(Error::contract(format!(
                "invalid grid [{lo}, {hi}] with {points} points"
            )));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|k| self.lo + h * k as f64).collect()
    }

    /// Composite trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.points];
        w[0] = 0.5 * h;
        w[self.points - 1] = 0.5 * h;
        w
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights()
            .iter()
            .zip(values)
            .fold(0.0, |acc, (w, v)| acc + w * v)
    }
}

/// Equal-weight Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDistribution {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

impl MixtureDistribution {
    pub fn new(means: Vec<f64>, stddevs: Vec<f64>) -> Result<Self> {
        if means.is_empty() || means.len() != stddevs.len() {
            return Err(Error::contract(
                "mixture needs matching, non-empty means and stddevs",
            ));
        }
        if stddevs.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || means.iter().any(|m| !m.is_finite())
        {
            return Err(Error::contract(
                "mixture parameters must be finite with positive stddevs",
            ));
        }
        Ok(Self { means, stddevs })
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let k = self.components() as f64;
        self.means
            .iter()
            .zip(&self.stddevs)
            .map(|(m, s)| {
                let z = (x - m) / s;
                (-0.5 * z * z).exp() / (s * TAU.sqrt())
            })
            .sum::<f64>()
            / k
    }

    /// Component index, then one Box–Muller normal, per sample.
    pub fn sample(&self, rng: &mut SplitMix64, count: usize) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(Error::contract("sample count must be ≥ 1"));
        }
        Ok((0..count)
            .map(|_| {
                let c = rng.index(self.components());
                self.means[c] + self.stddevs[c] * rng.normal()
            })
            .collect())
    }
}

/// `k` components with means `U(mu_range)` and stddevs `U(sigma_range)`,
/// drawn as all means first, then all stddevs.
pub fn make_mixture(
    seed: u64,
    k: usize,
    mu_range: (f64, f64),
    sigma_range: (f64, f64),
) -> Result<MixtureDistribution> {
    if k == 0
        || !(mu_range.0 <= mu_range.1)
        || !(sigma_range.0 > 0.0 && sigma_range.0 <= sigma_range.1)
    {
        return Err(Error::contract("invalid mixture ranges"));
    }
    let mut rng = SplitMix64::new(seed);
    let means = (0..k)
        .map(|_| rng.uniform_range(mu_range.0, mu_range.1))
        .collect();
    let stddevs = (0..k)
        .map(|_| rng.uniform_range(sigma_range.0, sigma_range.1))
        .collect();
    MixtureDistribution::new(means, stddevs)
}

pub fn mixture_pdf(dist: &MixtureDistribution, x: f64) -> f64 {
    dist.pdf(x)
}

pub fn sample_mixture(
    dist: &MixtureDistribution,
    rng: &mut SplitMix64,
    count: usize,
) -> Result<Vec<f64>> {
    dist.sample(rng, count)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlReport {
    pub kl: f64,
    /// Grid nodes where `q` had to be clipped to [`KL_Q_FLOOR`].
    pub clipped: usize,
}

/// `∫ p log(p/q)` by the trapezoid rule; both densities are grid samples
/// that must each integrate to `1 ± 1e-4`.
pub fn kl_divergence(p: &[f64], q: &[f64], grid: &UniformGrid) -> Result<KlReport> {
    if p.len() != grid.points || q.len() != grid.points {
        return Err(Error::Shape {
            op: "kl_divergence",
            left: vec![grid.points],
            right: vec![p.len(), q.len()],
        });
    }
    for (name, d) in [("p", p), ("q", q)] {
        let mass = grid.integrate(d);
        if (mass - 1.0).abs() > 1e-4 {
            return Err(Error::contract(format!(
                "{name} integrates to {mass}, not 1"
            )));
        }
    }
    let mut clipped = 0;
    let integrand: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi < KL_MASS_FLOOR {
                return 0.0;
            }
            let qi = if qi < KL_Q_FLOOR {
                clipped += 1;
                KL_Q_FLOOR
            } else {
                qi
            };
            pi * (pi / qi).ln()
        })
        .collect();
    Ok(KlReport {
        kl: grid.integrate(&integrand),
        clipped,
    })
}

/// Normalized model density `q̂ = exp(f) / ∫ exp(f)` at the grid nodes.
pub fn model_density(net: &Network, grid: &UniformGrid) -> Result<Vec<f64>> {
    let nodes = grid.nodes();
    let out = net.predict(&Tensor::matrix(nodes.len(), 1, nodes)?)?;
    let c = out.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let q: Vec<f64> = out.data().iter().map(|f| (f - c).exp()).collect();
    let z = grid.integrate(&q);
    Ok(q.into_iter().map(|v| v / z).collect())
}

/// Negative log-likelihood of `samples` under `q = exp(f)` normalized by its
/// trapezoid integral over `grid`:
///
/// `−mean f(xᵢ) + c + ln Σ_k w_k exp(f(g_k) − c)`, `c = max_k f(g_k)`.
///
/// `c` enters as a constant, which leaves the value and gradient unchanged
/// while keeping the exponentials bounded. `grid_nodes` may differ from the
/// grid's own nodes (e.g. a shifted copy) but must match its weights.
pub fn nll_normalized(
    tape: &mut Tape,
    net: &Network,
    vars: &[Var],
    samples: &[f64],
    grid_nodes: &[f64],
    grid_weights: &[f64],
) -> Result<Var> {
    if samples.is_empty() || grid_nodes.len() < 2 || grid_nodes.len() != grid_weights.len() {
        return Err(Error::contract(
            "density loss needs samples and a matching grid",
        ));
    }
    let (glo, ghi) = (grid_nodes[0], grid_nodes[grid_nodes.len() - 1]);
    if let Some(x) = samples.iter().find(|&&x| x < glo || x > ghi) {
        return Err(Error::contract(format!(
            "sample {x} lies outside the quadrature grid [{glo}, {ghi}]"
        )));
    }
    let (n, g) = (samples.len(), grid_nodes.len());
    let mut rows = samples.to_vec();
    rows.extend_from_slice(grid_nodes);
    let x = tape.constant(Tensor::matrix(n + g, 1, rows)?);
    let out = net.forward(tape, vars, x)?;
    let fs = tape.slice_rows(out, 0, n)?;
    let fg = tape.slice_rows(out, n, g)?;
    let c = tape
        .value(fg)
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !c.is_finite() {
        return Err(Error::NonFinite {
            block: "<density>".into(),
        });
    }
    let shifted = tape.shift(fg, -c);
    let e = tape.exp(shifted);
    let w = tape.constant(Tensor::matrix(g, 1, grid_weights.to_vec())?);
    let we = tape.mul(e, w)?;
    let z = tape.sum(we);
    let log_z = tape.ln(z);
    let log_z = tape.shift(log_z, c);
    let mean_f = tape.mean(fs);
    let neg = tape.scale(mean_f, -1.0);
    tape.add(neg, log_z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::baselines::MlpConfig;
    use crate::model::{Activation, Layer, ModelConfig};

    #[test]
    fn mixture_ranges_follow_the_protocol() {
        let d = make_mixture(3, 25, (-8.0, 8.0), (0.08, 0.1)).unwrap();
        assert_eq!(d.components(), 25);
        assert!(d.means.iter().all(|m| (-8.0..=8.0).contains(m)));
        assert!(d.stddevs.iter().all(|s| (0.08..=0.1).contains(s)));
        assert_eq!(d, make_mixture(3, 25, (-8.0, 8.0), (0.08, 0.1)).unwrap());
    }

    #[test]
    fn single_component_peak_and_mean() {
        let d = make_mixture(0, 1, (0.0, 0.0), (1.0, 1.0)).unwrap();
        assert!((d.pdf(0.0) - 1.0 / TAU.sqrt()).abs() < 1e-15);
        let s = d.sample(&mut SplitMix64::new(5), 1_000_000).unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 4.0 / 1000.0, "{mean}");
    }

    #[test]
    fn pdf_integrates_to_one_and_is_symmetric() {
        let grid = UniformGrid::new(-20.0, 20.0, 16384).unwrap();
        for (seed, sig) in [(1, (0.08, 1.0)), (2, (0.08, 0.1))] {
            let d = make_mixture(seed, 25, (-8.0, 8.0), sig).unwrap();
            let p: Vec<f64> = grid.nodes().iter().map(|&x| d.pdf(x)).collect();
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((grid.integrate(&p) - 1.0).abs() < 1e-6);
        }
        let sym = MixtureDistribution::new(vec![-1.5, 1.5], vec![0.4, 0.4]).unwrap();
        for x in [0.1, 0.7, 2.3] {
            assert_eq!(sym.pdf(x), sym.pdf(-x));
        }
    }

    #[test]
    fn kl_closed_forms() {
        let grid = UniformGrid::new(-12.0, 12.0, 4096).unwrap();
        let n0 = MixtureDistribution::new(vec![0.0], vec![1.0]).unwrap();
        let n1 = MixtureDistribution::new(vec![1.0], vec![1.0]).unwrap();
        let p: Vec<f64> = grid.nodes().iter().map(|&x| n0.pdf(x)).collect();
        let q: Vec<f64> = grid.nodes().iter().map(|&x| n1.pdf(x)).collect();
        assert!(kl_divergence(&p, &p, &grid).unwrap().kl.abs() < 1e-10);
        assert!((kl_divergence(&p, &q, &grid).unwrap().kl - 0.5).abs() < 1e-6);
        let mut rng = SplitMix64::new(4);
        for _ in 0..10 {
            let a = make_mixture(rng.next_u64(), 5, (-6.0, 6.0), (0.3, 1.0)).unwrap();
            let b = make_mixture(rng.next_u64(), 5, (-6.0, 6.0), (0.3, 1.0)).unwrap();
            let pa: Vec<f64> = grid.nodes().iter().map(|&x| a.pdf(x)).collect();
            let pb: Vec<f64> = grid.nodes().iter().map(|&x| b.pdf(x)).collect();
            assert!(kl_divergence(&pa, &pb, &grid).unwrap().kl >= 0.0);
        }
        assert!(kl_divergence(&p, &vec![1.0; grid.points], &grid).is_err());
    }

    fn constant_net(value: f64) -> Network {
        let mut net = Network::new(vec![Layer::Linear { d_in: 1, d_out: 1 }], 0).unwrap();
        net.load(vec![Tensor::zeros(&[1, 1]), Tensor::vector(vec![value])])
            .unwrap();
        net
    }

    fn loss_of(net: &Network, samples: &[f64], grid: &UniformGrid) -> f64 {
        let mut tape = Tape::new();
        let vars = net.register(&mut tape);
        let l = nll_normalized(
            &mut tape,
            net,
            &vars,
            samples,
            &grid.nodes(),
            &grid.weights(),
        )
        .unwrap();
        tape.value(l).item()
    }

    #[test]
    fn constant_model_loss_is_log_width() {
        let grid = UniformGrid::new(-8.0, 8.0, 1001).unwrap();
        for c in [-3.0, 0.0, 40.0] {
            let l = loss_of(&constant_net(c), &[0.5, -2.0, 7.0], &grid);
            assert!((l - 16f64.ln()).abs() < 1e-12, "{l}");
        }
    }

    #[test]
    fn loss_ignores_scale_and_checks_coverage() {
        let grid = UniformGrid::new(-4.0, 4.0, 257).unwrap();
        let cfg = ModelConfig::Mlp(MlpConfig {
            widths: vec![1, 6, 1],
            activation: Activation::Tanh,
        });
        let net = cfg.build(2).unwrap();
        let samples = [0.3, -1.0, 2.2];
        let base = loss_of(&net, &samples, &grid);
        // q → 2q is a shift of ln 2 in the model output.
        let mut shifted = net.clone();
        let last = shifted.params().len() - 1;
        let mut values: Vec<Tensor> = shifted.params().iter().map(|p| p.value.clone()).collect();
        values[last].data_mut()[0] += 2f64.ln();
        shifted.load(values).unwrap();
        assert!((loss_of(&shifted, &samples, &grid) - base).abs() < 1e-12);
        let mut tape = Tape::new();
        let vars = net.register(&mut tape);
        assert!(nll_normalized(
            &mut tape,
            &net,
            &vars,
            &[5.0],
            &grid.nodes(),
            &grid.weights()
        )
        .is_err());
    }

    #[test]
    fn loss_gradients() {
        let grid = UniformGrid::new(-3.0, 3.0, 65).unwrap();
        for seed in 0..3 {
            let net = ModelConfig::Mlp(MlpConfig {
                widths: vec![1, 5, 1],
                activation: Activation::Tanh,
            })
            .build(seed)
            .unwrap();
            let samples = [0.1, -0.4, 1.3, 2.0];
            let report = grad_check(
                |tape, vars| {
                    nll_normalized(tape, &net, vars, &samples, &grid.nodes(), &grid.weights())
                },
                &net.blocks(),
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(report.passed, "{report}");
        }
    }

    #[test]
    fn normalized_density_integrates_to_one() {
        let grid = UniformGrid::new(-12.0, 12.0, 4096).unwrap();
        let net = ModelConfig::Mlp(MlpConfig {
            widths: vec![1, 8, 1],
            activation: Activation::Relu,
        })
        .build(1)
        .unwrap();
        let q = model_density(&net, &grid).unwrap();
        assert!((grid.integrate(&q) - 1.0).abs() < 1e-12);
    }
}

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::contract(format!(
                "adam lr must be > 0, got {}",
                self.lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::contract(format!(
                    "adam {name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if !(self.eps >= 0.0) {
            return Err(Error::contract("adam eps must be non-negative"));
        }
        Ok(())
    }
}

/// First and second moment estimates, one slot per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape {
            op: "adam_step",
            left: vec![params.len()],
            right: vec![grads.len()],
        });
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.len() != m.len() {
            return Err(Error::Shape {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((theta, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_matches_closed_form() {
        let cfg = AdamConfig::default();
        let mut params = vec![Tensor::scalar(0.0)];
        let grads = vec![Tensor::scalar(1.0)];
        let mut state = AdamState::new(cfg, &params).unwrap();
        adam_step(&mut params, &grads, &mut state).unwrap();
        let delta = params[0].item();
        // m̂ = v̂ = 1 after bias correction.
        let closed = -cfg.lr * 1.0 / (1.0f64.sqrt() + cfg.eps);
        assert_eq!(delta, closed);
        assert!((delta - -9.99999995e-4).abs() < 1e-11);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_fixed() {
        let mut params = vec![Tensor::vector(vec![0.3, -1.2, 4.0])];
        let before = params.clone();
        let grads = vec![Tensor::zeros(&[3])];
        let mut state = AdamState::new(AdamConfig::default(), &params).unwrap();
        adam_step(&mut params, &grads, &mut state).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step(), 1);
        for _ in 0..50 {
            adam_step(&mut params, &grads, &mut state).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(state.step(), 51);
    }

    #[test]
    fn deterministic_over_repeated_runs() {
        let run = || {
            let mut params = vec![Tensor::vector(vec![1.0, 2.0]), Tensor::scalar(-0.5)];
            let mut state = AdamState::new(AdamConfig::default(), &params).unwrap();
            for i in 0..100 {
                let fi = i as f64;
                let grads = vec![
                    Tensor::vector(vec![(fi * 0.37).sin(), (fi * 0.11).cos()]),
                    Tensor::scalar(params[1].item() * 2.0),
                ];
                adam_step(&mut params, &grads, &mut state).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        for (x, y) in a.iter().zip(&b) {
            let bx: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
            let by: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bx, by);
        }
    }

    #[test]
    fn rejects_bad_hyperparameters_and_shapes() {
        let p = vec![Tensor::scalar(0.0)];
        let bad = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(bad, &p).is_err());
        let bad = AdamConfig {
            beta2: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(bad, &p).is_err());

        let mut params = vec![Tensor::zeros(&[2])];
        let mut state = AdamState::new(AdamConfig::default(), &params).unwrap();
        let grads = vec![Tensor::zeros(&[3])];
        assert!(matches!(
            adam_step(&mut params, &grads, &mut state),
            Err(Error::Shape { .. })
        ));
    }
}

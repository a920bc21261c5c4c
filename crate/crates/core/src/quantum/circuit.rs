use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::gate::{rot, ry, Gate2};
use super::observable::{expectation, Observable, ObservableSpec};
use super::state::{check_capacity, StateVector};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// How data uploads are laid out in a re-uploading circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrqcLayout {
    /// One wire, `L` alternating encode/variational layers.
    SingleQubitMultilayer,
    /// `N` wires each encoding once, followed by one variational block.
    MultiqubitSinglelayer,
}

/// Serializable description of a data re-uploading circuit.
///
/// Variational blocks are `Rot(φ, θ, ω) = Rz(ω)·Ry(θ)·Rz(φ)` on every wire,
/// followed by a CNOT ring when there is more than one wire. Each block holds
/// `3·qubits` angles in wire order. Missing angles are drawn from
/// U(0, 2π) using `seed`; missing data weights default to 1; the default
/// observable is Z on wire 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrqcSpec {
    pub layout: DrqcLayout,
    pub qubits: usize,
    pub layers: usize,
    pub uploads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variational: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableSpec>,
    pub seed: u64,
}

impl DrqcSpec {
    /// Single wire re-uploading `uploads` times.
    pub fn single_qubit(uploads: usize, seed: u64) -> Self {
        Self {
            layout: DrqcLayout::SingleQubitMultilayer,
            qubits: 1,
            layers: uploads,
            uploads,
            variational: None,
            data_weights: None,
            observable: None,
            seed,
        }
    }

    /// `qubits` wires, one scalar input uploaded once per wire.
    pub fn multi_qubit(qubits: usize, seed: u64) -> Self {
        Self {
            layout: DrqcLayout::MultiqubitSinglelayer,
            qubits,
            layers: 1,
            uploads: qubits,
            variational: None,
            data_weights: None,
            observable: None,
            seed,
        }
    }

    /// Input dimension implied by the layout.
    pub fn input_dim(&self) -> usize {
        match self.layout {
            DrqcLayout::SingleQubitMultilayer => 1,
            DrqcLayout::MultiqubitSinglelayer => self.qubits / self.uploads.max(1),
        }
    }

    fn validate(&self) -> Result<()> {
        check_capacity(self.qubits)?;
        if self.uploads == 0 || self.layers == 0 {
            return Err(Error::contract(
                "a circuit needs at least one layer and one upload",
            ));
        }
        match self.layout {
            DrqcLayout::SingleQubitMultilayer => {
                if self.qubits != 1 {
                    return Err(Error::contract(
                        "single_qubit_multilayer requires qubits = 1",
                    ));
                }
                if self.uploads != self.layers {
                    return Err(Error::contract(
                        "single_qubit_multilayer uploads once per layer",
                    ));
                }
            }
            DrqcLayout::MultiqubitSinglelayer => {
                if self.layers != 1 {
                    return Err(Error::contract(
                        "multiqubit_singlelayer requires layers = 1",
                    ));
                }
                if self.qubits % self.uploads != 0 {
                    return Err(Error::contract(format!(
                        "{} qubits cannot hold whole inputs of {} uploads",
                        self.qubits, self.uploads
                    )));
                }
            }
        }
        Ok(())
    }

    /// Resolves defaults and checks shapes.
    pub fn compile(&self) -> Result<Drqc> {
        self.validate()?;
        let per_block = 3 * self.qubits;
        let angles = match &self.variational {
            Some(blocks) => {
                if blocks.len() != self.layers || blocks.iter().any(|b| b.len() != per_block) {
                    return Err(Error::contract(format!(
                        "variational angles must be {} blocks of {per_block}",
                        self.layers
                    )));
                }
                blocks.clone()
            }
            None => {
                let mut rng = SplitMix64::new(self.seed);
                (0..self.layers)
                    .map(|_| {
                        (0..per_block)
                            .map(|_| rng.uniform_range(0.0, TAU))
                            .collect()
                    })
                    .collect()
            }
        };
        let blocks = angles
            .iter()
            .map(|b| {
                b.chunks_exact(3)
                    .map(|a| rot(a[0], a[1], a[2]))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let data_weights = match &self.data_weights {
            Some(w) if w.len() != self.uploads => {
                return Err(Error::contract(format!(
                    "expected {} data weights, got {}",
                    self.uploads,
                    w.len()
                )))
            }
            Some(w) => w.clone(),
            None => vec![1.0; self.uploads],
        };
        if data_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::contract("data weights must be finite"));
        }
        let observable = match &self.observable {
            Some(spec) => spec.build()?,
            None => Observable::z0(self.qubits),
        };
        if observable.qubits() != self.qubits {
            return Err(Error::contract(format!(
                "observable acts on {} qubits, circuit has {}",
                observable.qubits(),
                self.qubits
            )));
        }
        Ok(Drqc {
            layout: self.layout,
            qubits: self.qubits,
            uploads: self.uploads,
            blocks,
            data_weights,
            observable,
        })
    }
}

/// A [`DrqcSpec`] with every default resolved into gates.
#[derive(Debug, Clone)]
pub struct Drqc {
    layout: DrqcLayout,
    qubits: usize,
    uploads: usize,
    blocks: Vec<Vec<Gate2>>,
    data_weights: Vec<f64>,
    observable: Observable,
}

impl Drqc {
    pub fn input_dim(&self) -> usize {
        match self.layout {
            DrqcLayout::SingleQubitMultilayer => 1,
            DrqcLayout::MultiqubitSinglelayer => self.qubits / self.uploads,
        }
    }

    fn variational(&self, state: &mut StateVector, block: &[Gate2]) -> Result<()> {
        for (q, g) in block.iter().enumerate() {
            state.apply_single_in_place(g, q)?;
        }
        match self.qubits {
            1 => {}
            2 => state.apply_cnot_in_place(0, 1)?,
            n => {
                for q in 0..n {
                    state.apply_cnot_in_place(q, (q + 1) % n)?;
                }
            }
        }
        Ok(())
    }

    /// Final state for input `x`.
    pub fn state(&self, x: &[f64]) -> Result<StateVector> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                op: "drqc_eval",
                left: vec![self.input_dim()],
                right: vec![x.len()],
            });
        }
        let mut state = StateVector::zero(self.qubits)?;
        match self.layout {
            DrqcLayout::SingleQubitMultilayer => {
                for (w, block) in self.data_weights.iter().zip(&self.blocks) {
                    state.apply_single_in_place(&ry(w * x[0])?, 0)?;
                    self.variational(&mut state, block)?;
                }
            }
            DrqcLayout::MultiqubitSinglelayer => {
                for q in 0..self.qubits {
                    let w = self.data_weights[q % self.uploads];
                    state.apply_single_in_place(&ry(w * x[q / self.uploads])?, q)?;
                }
                self.variational(&mut state, &self.blocks[0])?;
            }
        }
        Ok(state)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        expectation(&self.state(x)?, &self.observable)
    }
}

/// One-shot evaluation; compile once with [`DrqcSpec::compile`] for batches.
pub fn drqc_eval(spec: &DrqcSpec, x: &[f64]) -> Result<f64> {
    spec.compile()?.eval(x)
}

/// `⟨0|S(x)† Ô S(x)|0⟩` with `S(x) = ⊗_j ⊗_i Ry(w_i x_j)`.
///
/// Input element `j` occupies wires `j·n .. j·n + n`, wire `j·n + i` carrying
/// weight `w_i`.
pub fn theoretical_qrun(w: &[f64], d: usize, obs: &Observable, x: &[f64]) -> Result<f64> {
    if w.is_empty() || d == 0 {
        return Err(Error::contract("theoretical Q-RUN needs n ≥ 1 and d ≥ 1"));
    }
    if x.len() != d {
        return Err(Error::Shape {
            op: "theoretical_qrun",
            left: vec![d],
            right: vec![x.len()],
        });
    }
    let n = w.len();
    check_capacity(n * d)?;
    let mut state = StateVector::zero(n * d)?;
    for (j, &xj) in x.iter().enumerate() {
        for (i, &wi) in w.iter().enumerate() {
            state.apply_single_in_place(&ry(wi * xj)?, j * n + i)?;
        }
    }
    expectation(&state, obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn trivial_single(x: f64) -> f64 {
        let spec = DrqcSpec {
            variational: Some(vec![vec![0.0; 3]]),
            ..DrqcSpec::single_qubit(1, 0)
        };
        drqc_eval(&spec, &[x]).unwrap()
    }

    #[test]
    fn zero_angle_circuit_is_cosine() {
        assert!((trivial_single(0.0) - 1.0).abs() < 1e-15);
        assert!((trivial_single(PI) + 1.0).abs() < 1e-15);
        for x in [0.3, -2.0, 7.5] {
            assert!((trivial_single(x) - x.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn rq1_circuits_are_bounded() {
        let mut rng = SplitMix64::new(5);
        for spec in [DrqcSpec::single_qubit(8, 1), DrqcSpec::multi_qubit(8, 1)] {
            let c = spec.compile().unwrap();
            for _ in 0..1000 {
                let y = c.eval(&[rng.uniform_range(-20.0, 20.0)]).unwrap();
                assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&y));
            }
        }
    }

    /// With unit data weights every output is 2π-periodic.
    #[test]
    fn unit_weights_give_period_two_pi() {
        for spec in [DrqcSpec::single_qubit(8, 3), DrqcSpec::multi_qubit(4, 3)] {
            let c = spec.compile().unwrap();
            for x in [-3.0, 0.4, 9.9] {
                let a = c.eval(&[x]).unwrap();
                let b = c.eval(&[x + TAU]).unwrap();
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layout_invariants_enforced() {
        let mut bad = DrqcSpec::single_qubit(3, 0);
        bad.qubits = 2;
        assert!(bad.compile().is_err());
        let mut bad = DrqcSpec::multi_qubit(4, 0);
        bad.layers = 2;
        assert!(bad.compile().is_err());
        assert!(matches!(
            DrqcSpec::multi_qubit(15, 0).compile(),
            Err(Error::Capacity {
                requested: 15,
                limit: 14
            })
        ));
    }

    #[test]
    fn spec_json_round_trip() {
        let mut spec = DrqcSpec::multi_qubit(2, 9);
        spec.observable = Some(ObservableSpec::Pauli("ZZ".into()));
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<DrqcSpec>(&text).unwrap(), spec);
        let typo = text.replace("\"seed\"", "\"sed\"");
        assert!(serde_json::from_str::<DrqcSpec>(&typo).is_err());
    }

    #[test]
    fn theoretical_single_qubit_is_cosine() {
        let z = Observable::pauli("Z").unwrap();
        assert_eq!(theoretical_qrun(&[1.0], 1, &z, &[0.0]).unwrap(), 1.0);
        for k in 0..10 {
            let x = -4.0 + 0.9 * k as f64;
            let f = theoretical_qrun(&[1.7], 1, &z, &[x]).unwrap();
            assert!((f - (1.7 * x).cos()).abs() < 1e-12);
        }
    }

    /// Z on every wire of a product state factorizes into a product of cosines.
    #[test]
    fn theoretical_product_observable_factorizes() {
        let obs = Observable::pauli("ZZZZ").unwrap();
        let w = [0.5, 2.0];
        let x = [0.3, -1.1];
        let f = theoretical_qrun(&w, 2, &obs, &x).unwrap();
        let expect: f64 = x
            .iter()
            .flat_map(|xj| w.iter().map(move |wi| (wi * xj).cos()))
            .product();
        assert!((f - expect).abs() < 1e-13);
    }

    #[test]
    fn theoretical_capacity() {
        let obs = Observable::z0(15);
        assert!(matches!(
            theoretical_qrun(&[1.0; 5], 3, &obs, &[0.0; 3]),
            Err(Error::Capacity { .. })
        ));
    }
}

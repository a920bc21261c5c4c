use num_complex::Complex64;

use super::gate::Gate2;
use crate::error::{Error, Result};

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 14;

/// Dense statevector over `2^q` amplitudes.
///
/// Qubit 0 is the least-significant bit of the basis index, so on two qubits
/// index 1 is `|01⟩` (qubit 0 set) and index 2 is `|10⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    qubits: usize,
    amps: Vec<Complex64>,
}

pub(crate) fn check_capacity(qubits: usize) -> Result<()> {
    if qubits > MAX_QUBITS {
        return Err(Error::Capacity {
            requested: qubits,
            limit: MAX_QUBITS,
        });
    }
    if qubits == 0 {
        return Err(Error::contract("a register needs at least one qubit"));
    }
    Ok(())
}

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero(qubits: usize) -> Result<Self> {
        check_capacity(qubits)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { qubits, amps })
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n = amps.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::contract(format!(
                "{n} amplitudes is not a power of two"
            )));
        }
        let qubits = n.trailing_zeros() as usize;
        check_capacity(qubits)?;
        let state = Self { qubits, amps };
        let drift = (state.norm_sqr() - 1.0).abs();
        if drift > 1e-12 {
            return Err(Error::contract(format!(
                "state is not normalized (|ψ|² − 1 = {drift:e})"
            )));
        }
        Ok(state)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_target(&self, target: usize) -> Result<()> {
        if target >= self.qubits {
            return Err(Error::contract(format!(
                "qubit {target} out of range for a {}-qubit register",
                self.qubits
            )));
        }
        Ok(())
    }

    pub fn apply_single(&self, gate: &Gate2, target: usize) -> Result<StateVector> {
        let mut next = self.clone();
        next.apply_single_in_place(gate, target)?;
        Ok(next)
    }

    pub(crate) fn apply_single_in_place(&mut self, gate: &Gate2, target: usize) -> Result<()> {
        self.check_target(target)?;
        let g = gate.0;
        let stride = 1usize << target;
        for block in self.amps.chunks_exact_mut(stride << 1) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, x1) = (*a0, *a1);
                *a0 = g[0][0] * x0 + g[0][1] * x1;
                *a1 = g[1][0] * x0 + g[1][1] * x1;
            }
        }
        Ok(())
    }

    pub fn apply_cnot(&self, control: usize, target: usize) -> Result<StateVector> {
        let mut next = self.clone();
        next.apply_cnot_in_place(control, target)?;
        Ok(next)
    }

    pub(crate) fn apply_cnot_in_place(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_target(control)?;
        self.check_target(target)?;
        if control == target {
            return Err(Error::contract("CNOT control and target coincide"));
        }
        let (cm, tm) = (1usize << control, 1usize << target);
        for i in 0..self.amps.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amps.swap(i, i | tm);
            }
        }
        Ok(())
    }
}

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::state::StateVector;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Hermiticity tolerance for dense observables.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Largest imaginary residue accepted in an expectation value.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;
/// Dense matrices grow as `4^q`; 10 qubits is already 16 MiB of entries.
pub const MAX_DENSE_QUBITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn from_char(c: char) -> Result<Self> {
        match c {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(Error::Parse(format!("unknown Pauli letter {other:?}"))),
        }
    }

    fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Hermitian measurement operator.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// One letter per qubit, index = qubit number.
    Pauli(Vec<Pauli>),
    /// Row-major `dim × dim` matrix.
    Dense { dim: usize, entries: Vec<Complex64> },
}

impl Observable {
    /// Parses `"ZII"`-style strings; the first letter acts on qubit 0.
    pub fn pauli(word: &str) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::Parse("empty Pauli string".into()));
        }
        Ok(Observable::Pauli(
            word.chars().map(Pauli::from_char).collect::<Result<_>>()?,
        ))
    }

    /// `Z` on qubit 0, identity elsewhere.
    pub fn z0(qubits: usize) -> Self {
        let mut ops = vec![Pauli::I; qubits.max(1)];
        ops[0] = Pauli::Z;
        Observable::Pauli(ops)
    }

    pub fn dense(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::contract(format!(
                "observable dimension {dim} is not a power of two"
            )));
        }
        let qubits = dim.trailing_zeros() as usize;
        if qubits > MAX_DENSE_QUBITS {
            return Err(Error::Capacity {
                requested: qubits,
                limit: MAX_DENSE_QUBITS,
            });
        }
        if entries.len() != dim * dim {
            return Err(Error::Shape {
                op: "observable",
                left: vec![dim, dim],
                right: vec![entries.len()],
            });
        }
        let obs = Observable::Dense { dim, entries };
        let err = obs.hermiticity_error();
        if err > HERMITIAN_TOL {
            return Err(Error::NotHermitian { residue: err });
        }
        Ok(obs)
    }

    /// `(A + A†)/2` with real and imaginary parts of `A` drawn from N(0, 1).
    pub fn random_hermitian(qubits: usize, rng: &mut SplitMix64) -> Result<Self> {
        super::state::check_capacity(qubits)?;
        if qubits > MAX_DENSE_QUBITS {
            return Err(Error::Capacity {
                requested: qubits,
                limit: MAX_DENSE_QUBITS,
            });
        }
        let dim = 1usize << qubits;
        let a: Vec<Complex64> = (0..dim * dim)
            .map(|_| {
                let re = rng.normal();
                let im = rng.normal();
                Complex64::new(re, im)
            })
            .collect();
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                entries[i * dim + j] = (a[i * dim + j] + a[j * dim + i].conj()) * 0.5;
            }
        }
        Observable::dense(dim, entries)
    }

    pub fn qubits(&self) -> usize {
        match self {
            Observable::Pauli(ops) => ops.len(),
            Observable::Dense { dim, .. } => dim.trailing_zeros() as usize,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Observable::Pauli(ops) => 1 << ops.len(),
            Observable::Dense { dim, .. } => *dim,
        }
    }

    /// `max |O − O†|`; exactly zero for Pauli strings.
    pub fn hermiticity_error(&self) -> f64 {
        match self {
            Observable::Pauli(_) => 0.0,
            Observable::Dense { dim, entries } => {
                let mut err: f64 = 0.0;
                for i in 0..*dim {
                    for j in 0..*dim {
                        err = err.max((entries[i * dim + j] - entries[j * dim + i].conj()).norm());
                    }
                }
                err
            }
        }
    }

    /// Dense matrix form, building Pauli strings by tensor products.
    pub fn to_dense(&self) -> Vec<Complex64> {
        match self {
            Observable::Dense { entries, .. } => entries.clone(),
            Observable::Pauli(ops) => {
                let dim = 1usize << ops.len();
                let mut m = vec![Complex64::new(0.0, 0.0); dim * dim];
                for col in 0..dim {
                    let (row, phase) = pauli_action(ops, col);
                    m[row * dim + col] = phase;
                }
                m
            }
        }
    }

    pub fn to_spec(&self) -> ObservableSpec {
        match self {
            Observable::Pauli(ops) => {
                ObservableSpec::Pauli(ops.iter().map(|p| p.as_char()).collect())
            }
            Observable::Dense { entries, .. } => ObservableSpec::Dense {
                re: entries.iter().map(|z| z.re).collect(),
                im: entries.iter().map(|z| z.im).collect(),
            },
        }
    }
}

/// Image of basis state `col` under a Pauli string: `P|col⟩ = phase · |row⟩`.
fn pauli_action(ops: &[Pauli], col: usize) -> (usize, Complex64) {
    let mut row = col;
    let mut phase = Complex64::new(1.0, 0.0);
    for (q, p) in ops.iter().enumerate() {
        let bit = (col >> q) & 1;
        match p {
            Pauli::I => {}
            Pauli::X => row ^= 1 << q,
            Pauli::Y => {
                row ^= 1 << q;
                // Y|0⟩ = i|1⟩, Y|1⟩ = −i|0⟩
                phase *= if bit == 0 {
                    Complex64::new(0.0, 1.0)
                } else {
                    Complex64::new(0.0, -1.0)
                };
            }
            Pauli::Z => {
                if bit == 1 {
                    phase = -phase;
                }
            }
        }
    }
    (row, phase)
}

/// `⟨ψ|O|ψ⟩`, asserting that the imaginary residue is negligible.
pub fn expectation(state: &StateVector, obs: &Observable) -> Result<f64> {
    if obs.dim() != state.amplitudes().len() {
        return Err(Error::Shape {
            op: "expectation",
            left: vec![state.amplitudes().len()],
            right: vec![obs.dim(), obs.dim()],
        });
    }
    let amps = state.amplitudes();
    let value = match obs {
        Observable::Pauli(ops) => {
            let mut acc = Complex64::new(0.0, 0.0);
            for (col, a) in amps.iter().enumerate() {
                let (row, phase) = pauli_action(ops, col);
                acc += amps[row].conj() * phase * a;
            }
            acc
        }
        Observable::Dense { dim, entries } => {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..*dim {
                let row = &entries[i * dim..(i + 1) * dim];
                let mut oi = Complex64::new(0.0, 0.0);
                for (o, a) in row.iter().zip(amps) {
                    oi += o * a;
                }
                acc += amps[i].conj() * oi;
            }
            acc
        }
    };
    if value.im.abs() >= IMAG_RESIDUE_TOL {
        return Err(Error::NotHermitian {
            residue: value.im.abs(),
        });
    }
    Ok(value.re)
}

/// Serialized observable: a Pauli word such as `"ZII"` or a dense matrix
/// split into row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    Pauli(String),
    Dense { re: Vec<f64>, im: Vec<f64> },
}

impl ObservableSpec {
    pub fn build(&self) -> Result<Observable> {
        match self {
            ObservableSpec::Pauli(word) => Observable::pauli(word),
            ObservableSpec::Dense { re, im } => {
                if re.len() != im.len() {
                    return Err(Error::Parse("dense observable re/im lengths differ".into()));
                }
                let dim = (re.len() as f64).sqrt().round() as usize;
                let entries = re
                    .iter()
                    .zip(im)
                    .map(|(&r, &i)| Complex64::new(r, i))
                    .collect();
                Observable::dense(dim, entries)
            }
        }
    }
}

//! Statevector simulation of rotation-encoded circuits and the frequency
//! spectra they can express.

mod circuit;
mod gate;
mod observable;
mod spectrum;
mod state;

pub use circuit::{drqc_eval, theoretical_qrun, Drqc, DrqcLayout, DrqcSpec};
pub use gate::{rot, ry, rz, Gate2};
pub use observable::{
    expectation, Observable, ObservableSpec, Pauli, HERMITIAN_TOL, IMAG_RESIDUE_TOL,
    MAX_DENSE_QUBITS,
};
pub use spectrum::{
    empirical_spectrum, fourier_fit, predicted_spectrum, spectrum_1d, EmpiricalSpectrum,
    FourierFit, FrequencySet, PeriodGrid, DEFAULT_TAU, MAX_CONDITION, SUPPORT_THRESHOLD,
};
pub use state::{StateVector, MAX_QUBITS};

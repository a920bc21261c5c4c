use std::io::Write;

use qrun_core::quantum::{
    fourier_fit, predicted_spectrum, spectrum_1d, theoretical_qrun, FourierFit, FrequencySet,
    Observable,
};
use qrun_core::rng::SplitMix64;
use qrun_core::tasks::fmt17;

use crate::exit::{CliError, CONTRACT, DEGENERATE, OK};

/// Largest accepted `n·d`.
pub const MAX_SPECTRUM_QUBITS: usize = 8;

/// Largest `n·d` for which the companion fit runs: beyond it the dense
/// complex design matrix (`3^{nd}` columns) outgrows memory.
pub const MAX_FIT_QUBITS: usize = 6;

/// A fit this good certifies that the predicted set carries the whole signal.
pub const FIT_RESIDUAL_TOL: f64 = 1e-8;

pub struct SpectrumReport {
    pub cardinality: usize,
    pub bound: u128,
    pub fit: Option<FourierFit>,
    pub code: u8,
}

/// Samples the exact layer under a seeded random Hermitian observable and
/// fits it on the predicted frequencies.
fn companion_fit(
    w: &[f64],
    d: usize,
    tau: f64,
    seed: u64,
    omega: &FrequencySet,
) -> Result<FourierFit, CliError> {
    let mut rng = SplitMix64::new(seed);
    let obs = Observable::random_hermitian(w.len() * d, &mut rng)?;
    // Half-width chosen so the closest pair of distinct frequencies
    // completes at least one relative period across the sample box.
    let axis = spectrum_1d(w, tau)?;
    let gap = axis
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(f64::INFINITY, f64::min);
    let half = if gap.is_finite() {
        (std::f64::consts::PI / gap).clamp(std::f64::consts::PI, 1e4)
    } else {
        std::f64::consts::PI
    };
    let samples = (4 * omega.len()).max(1024);
    let xs: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..d).map(|_| rng.uniform_range(-half, half)).collect())
        .collect();
    let ys = xs
        .iter()
        .map(|x| theoretical_qrun(w, d, &obs, x))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(fourier_fit(&xs, &ys, omega)?)
}

pub fn run(
    w: &[f64],
    n: usize,
    d: usize,
    tau: f64,
    seed: u64,
    out: &mut impl Write,
    err: &mut impl Write,
) -> Result<SpectrumReport, CliError> {
    if n * d > MAX_SPECTRUM_QUBITS {
        return Err(CliError::contract(format!(
            "n·d = {} exceeds {MAX_SPECTRUM_QUBITS}",
            n * d
        )));
    }
    let omega = predicted_spectrum(w, n, d, tau)?;
    let bound = 3u128.pow((n * d) as u32);
    let cardinality = omega.len();
    let fit = if n * d <= MAX_FIT_QUBITS {
        Some(companion_fit(w, d, tau, seed, &omega)?)
    } else {
        None
    };

    writeln!(out, "# n: {n}")?;
    writeln!(out, "# d: {d}")?;
    writeln!(
        out,
        "# w: {}",
        w.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(out, "# tau: {tau:e}")?;
    writeln!(out, "# cardinality: {cardinality}")?;
    writeln!(out, "# bound: {bound}")?;
    match &fit {
        Some(f) => {
            writeln!(out, "# observable_seed: {seed}")?;
            writeln!(out, "# fit_rms_residual: {:e}", f.rms_residual)?;
            writeln!(out, "# fit_condition: {:e}", f.condition)?;
        }
        None => writeln!(out, "# fit: skipped (n·d > {MAX_FIT_QUBITS})")?,
    }
    let mut header: Vec<String> = (0..d).map(|k| format!("omega{k}")).collect();
    header.push("magnitude".into());
    writeln!(out, "{}", header.join(","))?;
    for (i, f) in omega.frequencies().iter().enumerate() {
        let mut cells: Vec<String> = f.iter().map(|v| v.to_string()).collect();
        cells.push(
            fit.as_ref()
                .map(|fit| fmt17(fit.coefficients[i].norm()))
                .unwrap_or_default(),
        );
        writeln!(out, "{}", cells.join(","))?;
    }

    let mut code = OK;
    if let Some(f) = &fit {
        if f.rms_residual >= FIT_RESIDUAL_TOL {
            writeln!(
                err,
                "error: fit residual {:e} exceeds {FIT_RESIDUAL_TOL:e}",
                f.rms_residual
            )?;
            code = CONTRACT;
        }
    }
    if (cardinality as u128) > bound {
        writeln!(
            err,
            "error: {cardinality} frequencies exceed the bound 3^{} = {bound}",
            n * d
        )?;
        code = CONTRACT;
    } else if code == OK && (cardinality as u128) < bound {
        writeln!(
            err,
            "warning: degenerate weights: {cardinality} distinct frequencies < 3^{} = {bound}",
            n * d
        )?;
        code = DEGENERATE;
    }
    Ok(SpectrumReport {
        cardinality,
        bound,
        fit,
        code,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn go(w: &[f64], n: usize, d: usize) -> (SpectrumReport, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let r = run(w, n, d, 1e-9, 0, &mut out, &mut err).unwrap();
        (r, String::from_utf8(out).unwrap())
    }

    fn data_rows(text: &str) -> Vec<&str> {
        text.lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .collect()
    }

    #[test]
    fn single_weight_gives_three_frequencies() {
        let (r, text) = go(&[1.0], 1, 1);
        assert_eq!((r.cardinality, r.bound, r.code), (3, 3, OK));
        let rows = data_rows(&text);
        let freqs: Vec<&str> = rows.iter().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(freqs, ["-1", "0", "1"]);
        assert!(r.fit.unwrap().rms_residual < FIT_RESIDUAL_TOL);
    }

    #[test]
    fn generic_and_degenerate_pairs() {
        let (r, text) = go(&[1.0, 3.0], 2, 1);
        assert_eq!((r.cardinality, r.code), (9, OK));
        assert_eq!(data_rows(&text).len(), 9);
        let (r, text) = go(&[1.0, 1.0], 2, 1);
        assert_eq!((r.cardinality, r.code), (5, DEGENERATE));
        assert_eq!(data_rows(&text).len(), 5);
    }

    #[test]
    fn two_dimensional_and_unfitted() {
        let (r, text) = go(&[1.0], 1, 2);
        assert_eq!((r.cardinality, r.code), (9, OK));
        assert!(text.lines().any(|l| l == "omega0,omega1,magnitude"));
        let (r, text) = go(&[1.0, 3.0, 9.0, 27.0, 81.0, 243.0, 729.0], 7, 1);
        assert!(r.fit.is_none());
        assert_eq!((r.cardinality, r.code), (2187, OK));
        assert!(text.contains("# fit: skipped"));
        let w9: Vec<f64> = (0..9).map(|k| 3f64.powi(k)).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert!(run(&w9, 9, 1, 1e-9, 0, &mut out, &mut err).is_err());
    }

    #[test]
    fn contract_violations() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert!(run(&[1.0, 2.0], 3, 1, 1e-9, 0, &mut out, &mut err).is_err());
        assert!(run(&[1.0], 1, 0, 1e-9, 0, &mut out, &mut err).is_err());
        assert!(run(&[1.0], 1, 1, 0.0, 0, &mut out, &mut err).is_err());
    }
}

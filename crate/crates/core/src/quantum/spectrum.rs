use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Default deduplication tolerance for predicted frequencies.
pub const DEFAULT_TAU: f64 = 1e-9;
/// Design matrices with a larger singular-value ratio are rejected.
pub const MAX_CONDITION: f64 = 1e10;
/// DFT bins below this fraction of the peak are outside the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

/// Sorted, deduplicated set of `d`-dimensional frequency vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySet {
    dim: usize,
    tau: f64,
    frequencies: Vec<Vec<f64>>,
}

impl FrequencySet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn frequencies(&self) -> &[Vec<f64>] {
        &self.frequencies
    }

    /// Whether some member lies within `tol` of `omega` in the ∞-norm.
    pub fn contains(&self, omega: &[f64], tol: f64) -> bool {
        self.frequencies.iter().any(|f| {
            f.len() == omega.len() && f.iter().zip(omega).all(|(a, b)| (a - b).abs() <= tol)
        })
    }

    /// Copy without the frequencies of largest ∞-norm (both signs).
    pub fn without_largest(&self) -> FrequencySet {
        let norm = |f: &Vec<f64>| f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let top = self.frequencies.iter().map(norm).fold(0.0, f64::max);
        FrequencySet {
            dim: self.dim,
            tau: self.tau,
            frequencies: self
                .frequencies
                .iter()
                .filter(|f| norm(f) < top - self.tau)
                .cloned()
                .collect(),
        }
    }
}

fn dedup_sorted(values: &mut Vec<f64>, tau: f64) {
    values.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values.iter() {
        match out.last() {
            Some(&last) if v - last <= tau => {}
            _ => out.push(v),
        }
    }
    *values = out;
}

/// One-dimensional spectrum `Ω⁽ⁿ⁾` reached by the ±w recursion.
pub fn spectrum_1d(w: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::contract(format!(
            "dedup tolerance must be positive, got {tau}"
        )));
    }
    if w.is_empty() || w.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract(
            "weights must be a non-empty list of finite values",
        ));
    }
    let mut omega = vec![0.0];
    for &wk in w {
        let mut next = Vec::with_capacity(omega.len() * 3);
        for &o in &omega {
            next.extend([o - wk, o, o + wk]);
        }
        dedup_sorted(&mut next, tau);
        omega = next;
    }
    Ok(omega)
}

/// Frequencies expressible by the theoretical layer with weights `w` on
/// `d`-dimensional inputs: the Cartesian power of the 1-D recursion.
pub fn predicted_spectrum(w: &[f64], n: usize, d: usize, tau: f64) -> Result<FrequencySet> {
    if w.len() != n {
        return Err(Error::contract(format!(
            "{} weights given for n = {n}",
            w.len()
        )));
    }
    if d == 0 {
        return Err(Error::contract("input dimension must be positive"));
    }
    let axis = spectrum_1d(w, tau)?;
    let total = axis
        .len()
        .checked_pow(d as u32)
        .filter(|&t| t <= 1 << 24)
        .ok_or_else(|| {
            Error::contract(format!(
                "{}^{d} frequencies is too many to enumerate",
                axis.len()
            ))
        })?;
    let mut frequencies = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut f = vec![0.0; d];
        for slot in f.iter_mut().rev() {
            *slot = axis[idx % axis.len()];
            idx /= axis.len();
        }
        frequencies.push(f);
    }
    Ok(FrequencySet {
        dim: d,
        tau,
        frequencies,
    })
}

/// Least-squares Fourier coefficients over a fixed frequency set.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierFit {
    /// `c_ω`, aligned with the set's frequency order.
    pub coefficients: Vec<Complex64>,
    pub rms_residual: f64,
    pub condition: f64,
    /// `max |c_{−ω} − conj(c_ω)|` over pairs present in the set; zero for
    /// an exactly real fit.
    pub symmetry_error: f64,
}

/// Fits `f(x) ≈ Σ c_ω exp(i ω·x)` through an SVD of the design matrix.
pub fn fourier_fit(xs: &[Vec<f64>], ys: &[f64], omega: &FrequencySet) -> Result<FourierFit> {
    let (rows, cols) = (xs.len(), omega.len());
    if ys.len() != rows {
        return Err(Error::Shape {
            op: "fourier_fit",
            left: vec![rows],
            right: vec![ys.len()],
        });
    }
    if cols == 0 || rows < 2 * cols {
        return Err(Error::contract(format!(
            "{rows} samples cannot determine {cols} coefficients (need ≥ {})",
            2 * cols
        )));
    }
    if xs.iter().any(|x| x.len() != omega.dim()) {
        return Err(Error::contract(
            "sample dimension differs from the frequency dimension",
        ));
    }
    let mut sorted: Vec<&Vec<f64>> = xs.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if sorted.windows(2).any(|p| p[0] == p[1]) {
        return Err(Error::contract("sample points must be distinct"));
    }

    let design = DMatrix::from_fn(rows, cols, |r, c| {
        let phase: f64 = omega.frequencies[c]
            .iter()
            .zip(&xs[r])
            .map(|(w, x)| w * x)
            .sum();
        Complex64::from_polar(1.0, phase)
    });
    let target = DVector::from_iterator(rows, ys.iter().map(|&y| Complex64::new(y, 0.0)));
    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (hi, lo) = (sv.max(), sv.min());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::Conditioning { condition });
    }
    let coeffs = svd
        .solve(&target, 0.0)
        .map_err(|e| Error::contract(format!("least-squares solve failed: {e}")))?;
    let fitted = &design * &coeffs;
    let sse: f64 = fitted.iter().zip(ys).map(|(f, y)| (f - y).norm_sqr()).sum();
    let coefficients: Vec<Complex64> = coeffs.iter().copied().collect();

    let mut symmetry_error: f64 = 0.0;
    for (i, f) in omega.frequencies.iter().enumerate() {
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        if let Some(j) = omega
            .frequencies
            .iter()
            .position(|g| g.iter().zip(&neg).all(|(a, b)| (a - b).abs() <= omega.tau))
        {
            symmetry_error = symmetry_error.max((coefficients[j] - coefficients[i].conj()).norm());
        }
    }
    Ok(FourierFit {
        coefficients,
        rms_residual: (sse / rows as f64).sqrt(),
        condition,
        symmetry_error,
    })
}

/// Uniform sampling of one period `[start, start + period)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodGrid {
    pub start: f64,
    pub period: f64,
    pub points: usize,
}

impl PeriodGrid {
    pub fn new(start: f64, period: f64, points: usize) -> Result<Self> {
        if !(period > 0.0 && period.is_finite() && start.is_finite()) || points < 2 {
            return Err(Error::contract(
                "grid needs a positive finite period and ≥ 2 points",
            ));
        }
        Ok(Self {
            start,
            period,
            points,
        })
    }

    pub fn x(&self, k: usize) -> f64 {
        self.start + self.period * k as f64 / self.points as f64
    }

    /// Angular frequency of one DFT bin.
    pub fn bin_width(&self) -> f64 {
        TAU / self.period
    }
}

/// Normalized DFT magnitudes of a sampled periodic function.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSpectrum {
    pub grid: PeriodGrid,
    /// `|X_k| / N` for `k = 0..N`, in FFT order.
    pub magnitudes: Vec<f64>,
}

impl EmpiricalSpectrum {
    /// Signed angular frequencies of bins above `SUPPORT_THRESHOLD · max`.
    pub fn support(&self) -> Vec<f64> {
        let peak = self.magnitudes.iter().cloned().fold(0.0, f64::max);
        let n = self.magnitudes.len();
        let mut out: Vec<f64> = self
            .magnitudes
            .iter()
            .enumerate()
            .filter(|(_, &m)| peak > 0.0 && m > SUPPORT_THRESHOLD * peak)
            .map(|(k, _)| {
                let signed = if k <= n / 2 {
                    k as f64
                } else {
                    k as f64 - n as f64
                };
                signed * self.grid.bin_width()
            })
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

/// DFT of `f` over one period. `max_frequency` is the largest angular
/// frequency expected in `f`; the grid must resolve at least four samples per
/// bin of it.
pub fn empirical_spectrum(
    f: impl Fn(f64) -> Result<f64>,
    grid: PeriodGrid,
    max_frequency: f64,
) -> Result<EmpiricalSpectrum> {
    let max_bin = (max_frequency.abs() / grid.bin_width()).ceil().max(1.0);
    if (grid.points as f64) < 4.0 * max_bin {
        return Err(Error::contract(format!(
            "{} points under-resolve frequency {max_frequency} (bin {max_bin}); need ≥ {}",
            grid.points,
            4.0 * max_bin
        )));
    }
    let mut buf = (0..grid.points)
        .map(|k| f(grid.x(k)).map(|v| Complex64::new(v, 0.0)))
        .collect::<Result<Vec<_>>>()?;
    FftPlanner::new()
        .plan_fft_forward(grid.points)
        .process(&mut buf);
    let scale = 1.0 / grid.points as f64;
    Ok(EmpiricalSpectrum {
        grid,
        magnitudes: buf.iter().map(|z| z.norm() * scale).collect(),
    })
}

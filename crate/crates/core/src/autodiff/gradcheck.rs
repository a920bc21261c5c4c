//! Central-difference gradient checking.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so that entries whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_error)
            .fold(0.0, f64::max)
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.blocks {
            writeln!(
                f,
                "{:<24} rel {:.3e}  abs {:.3e}",
                b.name, b.max_rel_error, b.max_abs_error
            )?;
        }
        write!(
            f,
            "{} (tol {:e})",
            if self.passed { "pass" } else { "fail" },
            self.tol
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares reverse-mode gradients of `forward` with central differences.
///
/// `forward` receives the tape and one [`Var`] per named block and must
/// return a scalar. It is re-run once per perturbed scalar, so it has to be
/// deterministic.
pub fn grad_check<F>(
    forward: F,
    blocks: &[(String, Tensor)],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::contract(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = blocks.iter().map(|(_, t)| tape.param(t.clone())).collect();
    let loss = forward(&mut tape, &vars)?;
    if !tape.value(loss).all_finite() {
        return Err(Error::NonFinite {
            block: "<loss>".into(),
        });
    }
    let grads = tape.backward(loss)?;

    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = values.iter().map(|v| t.constant(v.clone())).collect();
        let out = forward(&mut t, &vs)?;
        Ok(t.value(out).item())
    };

    let mut values: Vec<Tensor> = blocks.iter().map(|(_, t)| t.clone()).collect();
    let mut reports = Vec::with_capacity(blocks.len());
    for (bi, (name, _)) in blocks.iter().enumerate() {
        let analytic = grads.wrt(vars[bi]).expect("leaf gradient");
        if !analytic.all_finite() {
            return Err(Error::NonFinite {
                block: name.clone(),
            });
        }
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for i in 0..values[bi].len() {
            let orig = values[bi].data()[i];
            values[bi].data_mut()[i] = orig + h;
            let plus = eval(&values)?;
            values[bi].data_mut()[i] = orig - h;
            let minus = eval(&values)?;
            values[bi].data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite {
                    block: name.clone(),
                });
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[i];
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        reports.push(BlockReport {
            name: name.clone(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    let passed = reports.iter().all(|b| b.max_rel_error < tol);
    Ok(GradCheckReport {
        blocks: reports,
        tol,
        passed,
    })
}

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Single-qubit gate, row-major `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate2(pub [[Complex64; 2]; 2]);

impl Gate2 {
    pub fn identity() -> Self {
        Gate2([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn dagger(&self) -> Self {
        let m = self.0;
        Gate2([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn compose(&self, rhs: &Gate2) -> Gate2 {
        let (a, b) = (self.0, rhs.0);
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Gate2(out)
    }

    /// `max |(G†G − I)ᵢⱼ|`.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.dagger().compose(self);
        let mut err: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { ONE } else { ZERO };
                err = err.max((p.0[i][j] - target).norm());
            }
        }
        err
    }
}

fn check_angle(theta: f64) -> Result<()> {
    if theta.is_finite() {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "rotation angle must be finite, got {theta}"
        )))
    }
}

/// `Ry(θ) = [[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]`.
pub fn ry(theta: f64) -> Result<Gate2> {
    check_angle(theta)?;
    let (s, c) = (theta / 2.0).sin_cos();
    Ok(Gate2([
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]))
}

/// `Rz(θ) = diag(e^{−iθ/2}, e^{iθ/2})`.
pub fn rz(theta: f64) -> Result<Gate2> {
    check_angle(theta)?;
    let half = theta / 2.0;
    Ok(Gate2([
        [Complex64::from_polar(1.0, -half), ZERO],
        [ZERO, Complex64::from_polar(1.0, half)],
    ]))
}

/// General rotation `Rz(ω)·Ry(θ)·Rz(φ)` used for variational blocks.
pub fn rot(phi: f64, theta: f64, omega: f64) -> Result<Gate2> {
    Ok(rz(omega)?.compose(&ry(theta)?).compose(&rz(phi)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn ry_zero_is_identity() {
        assert_eq!(ry(0.0).unwrap(), Gate2::identity());
    }

    #[test]
    fn ry_entries_are_real() {
        let g = ry(1.234).unwrap();
        assert!(g.0.iter().flatten().all(|z| z.im == 0.0));
    }

    #[test]
    fn non_finite_angle_rejected() {
        assert!(ry(f64::NAN).is_err());
        assert!(rz(f64::INFINITY).is_err());
    }

    #[test]
    fn rotations_are_unitary() {
        let mut rng = SplitMix64::new(1);
        for _ in 0..200 {
            let a = rng.uniform_range(-50.0, 50.0);
            let b = rng.uniform_range(-50.0, 50.0);
            let c = rng.uniform_range(-50.0, 50.0);
            assert!(ry(a).unwrap().unitarity_error() < 1e-12);
            assert!(rz(a).unwrap().unitarity_error() < 1e-12);
            assert!(rot(a, b, c).unwrap().unitarity_error() < 1e-12);
        }
    }
}

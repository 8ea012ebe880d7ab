use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Two-branch state `c_L|L⟩ + c_R|R⟩` stored as natural-log magnitudes and phases.
///
/// The log representation keeps a suppressed branch strictly positive long after
/// its raw amplitude would have underflowed. A magnitude of `-∞` is allowed for
/// an exact eigenstate, but not on both branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStateVector {
    pub log_mag_l: f64,
    pub log_mag_r: f64,
    pub phase_l: f64,
    pub phase_r: f64,
}

impl TwoStateVector {
    pub fn new(log_mag_l: f64, log_mag_r: f64, phase_l: f64, phase_r: f64) -> Result<Self> {
        let ok = |v: f64| !v.is_nan() && v != f64::INFINITY;
        if !ok(log_mag_l) || !ok(log_mag_r) {
            return Err(invalid("log_mag", "magnitudes must be finite or -inf"));
        }
        if log_mag_l == f64::NEG_INFINITY && log_mag_r == f64::NEG_INFINITY {
            return Err(invalid("log_mag", "both branches vanish"));
        }
        if !phase_l.is_finite() || !phase_r.is_finite() {
            return Err(invalid("phase", "phases must be finite"));
        }
        Ok(Self {
            log_mag_l,
            log_mag_r,
            phase_l,
            phase_r,
        })
    }

    /// Normalized state with `|c_L|² = x` and real non-negative amplitudes.
    pub fn from_fraction(x: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) {
            return Err(invalid("x0", format!("must lie in [0, 1], got {x}")));
        }
        Self::new(0.5 * x.ln(), 0.5 * (1.0 - x).ln(), 0.0, 0.0)
    }

    pub fn from_amplitudes(c_l: Complex64, c_r: Complex64) -> Result<Self> {
        Self::new(c_l.norm().ln(), c_r.norm().ln(), c_l.arg(), c_r.arg())
    }

    /// `ln(|c_L|² + |c_R|²)`.
    pub fn ln_norm_sq(&self) -> f64 {
        log_add_exp(2.0 * self.log_mag_l, 2.0 * self.log_mag_r)
    }

    /// Normalized fraction `x = |c_L|² / (|c_L|² + |c_R|²)`.
    pub fn fraction_left(&self) -> f64 {
        1.0 / (1.0 + (2.0 * (self.log_mag_r - self.log_mag_l)).exp())
    }

    pub fn ln_fraction_left(&self) -> f64 {
        -softplus(2.0 * (self.log_mag_r - self.log_mag_l))
    }

    pub fn ln_fraction_right(&self) -> f64 {
        -softplus(2.0 * (self.log_mag_l - self.log_mag_r))
    }

    /// `ln min(x, 1 - x)`: finite exactly when both branches survive.
    pub fn ln_tail(&self) -> f64 {
        self.ln_fraction_left().min(self.ln_fraction_right())
    }

    /// Log-odds `ln(x / (1 - x))`.
    pub fn log_odds(&self) -> f64 {
        2.0 * (self.log_mag_l - self.log_mag_r)
    }

    pub fn normalized(&self) -> Self {
        let shift = 0.5 * self.ln_norm_sq();
        Self {
            log_mag_l: self.log_mag_l - shift,
            log_mag_r: self.log_mag_r - shift,
            ..*self
        }
    }

    /// Multiplies the branch amplitudes by `e^{d_l}` and `e^{d_r}`.
    pub fn scaled(&self, d_l: f64, d_r: f64) -> Self {
        Self {
            log_mag_l: self.log_mag_l + d_l,
            log_mag_r: self.log_mag_r + d_r,
            ..*self
        }
    }

    /// Normalized complex amplitudes (may underflow for deep tails).
    pub fn amplitudes(&self) -> (Complex64, Complex64) {
        let n = self.normalized();
        (
            Complex64::from_polar(n.log_mag_l.exp(), n.phase_l),
            Complex64::from_polar(n.log_mag_r.exp(), n.phase_r),
        )
    }

    /// Off-diagonal element `c_L c_R*` of the normalized state.
    pub fn coherence(&self) -> Complex64 {
        let m = (self.log_mag_l + self.log_mag_r - self.ln_norm_sq()).exp();
        Complex64::from_polar(m, self.phase_l - self.phase_r)
    }
}

/// `ln(e^a + e^b)` without overflow; `-∞` inputs are absorbed.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(1 + e^z)`.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_roundtrip() {
        for &x in &[0.0, 1e-300, 0.3, 0.5, 0.7, 1.0] {
            let s = TwoStateVector::from_fraction(x).unwrap();
            assert!((s.fraction_left() - x).abs() < 1e-15, "{x}");
            assert!((s.ln_norm_sq()).abs() < 1e-15);
        }
        assert!(TwoStateVector::from_fraction(1.2).is_err());
        assert!(TwoStateVector::from_fraction(-0.1).is_err());
    }

    #[test]
    fn tails_beyond_underflow_stay_positive() {
        let s = TwoStateVector::new(0.0, -1e4, 0.0, 0.0).unwrap();
        assert_eq!(s.fraction_left(), 1.0);
        assert!((s.ln_fraction_right() + 2e4).abs() < 1e-9);
        assert!(s.ln_tail().is_finite());
        let (_, cr) = s.amplitudes();
        assert_eq!(cr.norm(), 0.0); // raw amplitude underflows, the log does not
    }

    #[test]
    fn eigenstate_has_no_tail() {
        let s = TwoStateVector::from_fraction(1.0).unwrap();
        assert_eq!(s.ln_tail(), f64::NEG_INFINITY);
        assert!(TwoStateVector::new(f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, 0.0).is_err());
        assert!(TwoStateVector::new(f64::NAN, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn coherence_matches_amplitudes() {
        let s = TwoStateVector::from_amplitudes(Complex64::new(0.3, 0.4), Complex64::new(-1.0, 0.2)).unwrap();
        let (cl, cr) = s.amplitudes();
        assert!((s.coherence() - cl * cr.conj()).norm() < 1e-15);
        assert!((cl.norm_sqr() + cr.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_helpers() {
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }
}

//! Real-coefficient rational transfer functions `num(s) / den(s)`.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("denominator must have a nonzero leading coefficient")]
    ZeroLeadingDenominator,
    #[error("numerator degree {num} exceeds denominator degree {den}")]
    Improper { num: usize, den: usize },
    #[error("coefficients must be finite")]
    NonFinite,
    #[error("evaluation at pole (s = {re} + {im}j)")]
    EvaluationAtPole { re: f64, im: f64 },
}

/// Transfer function with coefficients stored in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

/// Evaluate a real polynomial (ascending coefficients) at a complex point.
pub fn polyval(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

fn degree(coeffs: &[f64]) -> usize {
    coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0)
}

impl RationalTransferFunction {
    /// Build `num / den`. Trailing zero high-order coefficients of `den` are
    /// rejected rather than trimmed so the stored degree is unambiguous.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, TransferError> {
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(TransferError::NonFinite);
        }
        match den.last() {
            Some(&c) if c != 0.0 => {}
            _ => return Err(TransferError::ZeroLeadingDenominator),
        }
        let (dn, dd) = (degree(&num), den.len() - 1);
        if dn > dd {
            return Err(TransferError::Improper { num: dn, den: dd });
        }
        Ok(Self { num, den })
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    /// Numerator polynomial `N(s)`.
    pub fn num_at(&self, s: Complex64) -> Complex64 {
        polyval(&self.num, s)
    }

    /// Denominator polynomial `D(s)`.
    pub fn den_at(&self, s: Complex64) -> Complex64 {
        polyval(&self.den, s)
    }

    /// Evaluate at an arbitrary complex point.
    pub fn eval(&self, s: Complex64) -> Result<Complex64, TransferError> {
        let d = self.den_at(s);
        // Scale of the terms summed in D(s); a result at round-off level of
        // that scale means s sits on a pole.
        let r = s.norm();
        let scale: f64 = self
            .den
            .iter()
            .enumerate()
            .map(|(i, c)| c.abs() * r.powi(i as i32))
            .sum();
        if d.norm() <= 4.0 * f64::EPSILON * scale {
            return Err(TransferError::EvaluationAtPole { re: s.re, im: s.im });
        }
        Ok(self.num_at(s) / d)
    }

    /// Frequency response at `s = j*omega`.
    pub fn freq_response(&self, omega: f64) -> Result<Complex64, TransferError> {
        self.eval(Complex64::new(0.0, omega))
    }

    /// Poles (roots of the denominator); only first- and second-order
    /// denominators are supported, which covers every plant built here.
    pub fn poles(&self) -> Option<Vec<Complex64>> {
        match self.den.len() {
            2 => Some(vec![Complex64::new(-self.den[0] / self.den[1], 0.0)]),
            3 => {
                let (c, b, a) = (self.den[0], self.den[1], self.den[2]);
                let disc = Complex64::new(b * b - 4.0 * a * c, 0.0).sqrt();
                Some(vec![(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)])
            }
            _ => None,
        }
    }
}

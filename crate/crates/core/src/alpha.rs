//! The twist amplitude α, kept in exact form where possible.
//!
//! The values that matter most are α = 1/ln q for rational q, which make
//! μ = exp(1/α) = q exactly. Storing the form rather than a rounded decimal
//! lets μ-dependent branches see the exact rational.

use std::fmt;

use serde::Serialize;

use crate::error::{MapError, Result};
use crate::numeric::DoubleDouble;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Alpha {
    Decimal {
        value: f64,
    },
    /// `num / den`
    Rational {
        num: i64,
        den: u64,
    },
    /// `1 / ln(num / den)`
    InverseLog {
        num: u64,
        den: u64,
    },
}

impl Alpha {
    pub fn decimal(value: f64) -> Self {
        Alpha::Decimal { value }
    }

    pub fn rational(num: i64, den: u64) -> Self {
        Alpha::Rational { num, den }
    }

    /// α = 1/ln(q) with integer q.
    pub fn inverse_log(q: u64) -> Self {
        Alpha::InverseLog { num: q, den: 1 }
    }

    pub fn inverse_log_ratio(num: u64, den: u64) -> Self {
        Alpha::InverseLog { num, den }
    }

    /// α = 1/ln(2m), the escape-orbit family.
    pub fn escape(m: u64) -> Self {
        Self::inverse_log(2 * m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Alpha::Decimal { value } => {
                if !(value.is_finite() && value > 0.0) {
                    return Err(MapError::invalid(format!(
                        "alpha must be positive and finite, got {value}"
                    )));
                }
            }
            Alpha::Rational { num, den } => {
                if den == 0 || num <= 0 {
                    return Err(MapError::invalid(format!(
                        "alpha = {num}/{den} is not a positive rational"
                    )));
                }
            }
            Alpha::InverseLog { num, den } => {
                if den == 0 || num <= den {
                    return Err(MapError::invalid(format!(
                        "alpha = 1/ln({num}/{den}) needs an argument greater than 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Value rounded to binary64.
    pub fn value(&self) -> f64 {
        match *self {
            Alpha::Decimal { value } => value,
            _ => self.value_dd().to_f64(),
        }
    }

    pub fn value_dd(&self) -> DoubleDouble {
        match *self {
            Alpha::Decimal { value } => DoubleDouble::from_f64(value),
            Alpha::Rational { num, den } => DoubleDouble::from_f64(num as f64).div_f64(den as f64),
            Alpha::InverseLog { num, den } => {
                let q = DoubleDouble::from_f64(num as f64).div_f64(den as f64);
                q.ln().recip()
            }
        }
    }

    /// μ = exp(1/α); exact for the inverse-log form.
    pub fn mu(&self) -> f64 {
        match *self {
            Alpha::InverseLog { num, den } => num as f64 / den as f64,
            _ => (1.0 / self.value()).exp(),
        }
    }

    /// μ as an exact fraction when the form allows it.
    pub fn mu_exact(&self) -> Option<(u64, u64)> {
        match *self {
            Alpha::InverseLog { num, den } => Some((num, den)),
            _ => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, Alpha::Decimal { .. })
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Alpha::Decimal { value } => write!(f, "{value}"),
            Alpha::Rational { num, den: 1 } => write!(f, "{num}"),
            Alpha::Rational { num, den } => write!(f, "{num}/{den}"),
            Alpha::InverseLog { num, den: 1 } => write!(f, "1/ln({num})"),
            Alpha::InverseLog { num, den } => write!(f, "1/ln({num}/{den})"),
        }
    }
}

impl From<f64> for Alpha {
    fn from(value: f64) -> Self {
        Alpha::decimal(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_log_gives_exact_mu() {
        assert_eq!(Alpha::inverse_log(2).mu(), 2.0);
        assert_eq!(Alpha::inverse_log_ratio(5, 2).mu(), 2.5);
        assert_eq!(Alpha::escape(2).mu_exact(), Some((4, 1)));
    }

    #[test]
    fn inverse_log_value_matches_libm() {
        let a = Alpha::inverse_log(2);
        assert!((a.value() - 1.0 / std::f64::consts::LN_2).abs() < 1e-15);
        // 1/ln 2 * ln 2 == 1 to double-double accuracy
        let back = a.value_dd() * crate::numeric::LN_2;
        assert!((back.to_f64() - 1.0).abs() < 1e-30);
    }

    #[test]
    fn decimal_mu_is_exp_of_reciprocal() {
        assert!((Alpha::decimal(1.0).mu() - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_degenerate_forms() {
        assert!(Alpha::decimal(0.0).validate().is_err());
        assert!(Alpha::decimal(f64::NAN).validate().is_err());
        assert!(Alpha::rational(1, 0).validate().is_err());
        assert!(Alpha::inverse_log(1).validate().is_err());
        assert!(Alpha::inverse_log(3).validate().is_ok());
    }

    #[test]
    fn display_round_trips_the_form() {
        assert_eq!(Alpha::inverse_log(2).to_string(), "1/ln(2)");
        assert_eq!(Alpha::inverse_log_ratio(5, 2).to_string(), "1/ln(5/2)");
        assert_eq!(Alpha::rational(1, 2).to_string(), "1/2");
    }
}

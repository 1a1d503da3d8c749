//! Test functions of the terminal state or of the whole path. Every payoff reads
//! the first state coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayoffSpec {
    /// `y`
    Identity,
    /// `y^2`
    Square,
    /// `sin(y)`
    Sin,
    /// `max(y - strike, 0)`
    Call { strike: f64 },
    /// `max(e^y - strike, 0)`
    ExpCall { strike: f64 },
    /// `|y - center|^beta`
    AbsPower { center: f64, beta: f64 },
    /// `value`
    Constant { value: f64 },
    /// Time average `(1/(T - t0)) int y_t dt` (trapezoid on the grid).
    Average,
    /// `max(average - strike, 0)`
    AverageCall { strike: f64 },
}

impl PayoffSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PayoffSpec::AbsPower { center, beta } => {
                if !(*beta > 0.0 && *beta <= 1.0) || !center.is_finite() {
                    return invalid(format!("abs_power needs beta in (0, 1], got {beta}"));
                }
            }
            PayoffSpec::Call { strike }
            | PayoffSpec::ExpCall { strike }
            | PayoffSpec::AverageCall { strike } => {
                if !strike.is_finite() {
                    return invalid("strike must be finite");
                }
            }
            PayoffSpec::Constant { value } if !value.is_finite() => {
                return invalid("constant payoff must be finite");
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_state(&self) -> bool {
        !matches!(self, PayoffSpec::Average | PayoffSpec::AverageCall { .. })
    }

    /// Declared Hoelder exponent.
    pub fn holder_beta(&self) -> f64 {
        match self {
            PayoffSpec::AbsPower { beta, .. } => *beta,
            _ => 1.0,
        }
    }

    /// `phi(y)` for a state payoff.
    pub fn eval_state(&self, y: f64) -> f64 {
        match self {
            PayoffSpec::Identity => y,
            PayoffSpec::Square => y * y,
            PayoffSpec::Sin => y.sin(),
            PayoffSpec::Call { strike } => (y - strike).max(0.0),
            PayoffSpec::ExpCall { strike } => (y.exp() - strike).max(0.0),
            PayoffSpec::AbsPower { center, beta } => (y - center).abs().powf(*beta),
            PayoffSpec::Constant { value } => *value,
            PayoffSpec::Average | PayoffSpec::AverageCall { .. } => f64::NAN,
        }
    }

    /// `phi'(y)` where the payoff has an analytic gradient.
    pub fn gradient_state(&self, y: f64) -> Option<f64> {
        Some(match self {
            PayoffSpec::Identity => 1.0,
            PayoffSpec::Square => 2.0 * y,
            PayoffSpec::Sin => y.cos(),
            PayoffSpec::Call { strike } => f64::from(u8::from(y > *strike)),
            PayoffSpec::ExpCall { strike } => {
                let e = y.exp();
                if e > *strike {
                    e
                } else {
                    0.0
                }
            }
            PayoffSpec::Constant { .. } => 0.0,
            PayoffSpec::AbsPower { .. } | PayoffSpec::Average | PayoffSpec::AverageCall { .. } => {
                return None
            }
        })
    }

    pub fn has_gradient(&self) -> bool {
        match self {
            PayoffSpec::Average | PayoffSpec::AverageCall { .. } => true,
            other => other.gradient_state(0.0).is_some(),
        }
    }

    /// `phi` on a path given by its first-coordinate values at the grid nodes.
    pub fn eval_path(&self, path: &[f64]) -> f64 {
        match self {
            PayoffSpec::Average => trapezoid_mean(path),
            PayoffSpec::AverageCall { strike } => (trapezoid_mean(path) - strike).max(0.0),
            state => state.eval_state(*path.last().expect("non-empty path")),
        }
    }

    /// `D phi(path)(dir)`.
    pub fn derivative_path(&self, path: &[f64], dir: &[f64]) -> Option<f64> {
        match self {
            PayoffSpec::Average => Some(trapezoid_mean(dir)),
            PayoffSpec::AverageCall { strike } => {
                let on = trapezoid_mean(path) > *strike;
                Some(if on { trapezoid_mean(dir) } else { 0.0 })
            }
            state => state
                .gradient_state(*path.last()?)
                .map(|g| g * dir.last().copied().unwrap_or(0.0)),
        }
    }
}

fn trapezoid_mean(v: &[f64]) -> f64 {
    let n = v.len() - 1;
    let inner: f64 = v[1..n].iter().sum();
    (0.5 * (v[0] + v[n]) + inner) / n as f64
}

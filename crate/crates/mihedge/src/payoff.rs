//! Convex claim payoffs with analytic derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Payoff function `g` of a traded European claim. All variants are convex;
/// derivatives are one-sided at kinks (left derivative, matching the
/// convention for call-price slopes).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexPayoff {
    Call { strike: f64 },
    Put { strike: f64 },
    /// `g(x) = -2 ln x`, the log contract behind model-free implied variance.
    NegTwoLog,
    Square,
    Power { exponent: f64 },
    /// Softplus-smoothed call: `g(x) = w softplus((x - k)/w)`, C^2 for w > 0.
    SmoothedCall { strike: f64, width: f64 },
}

impl ConvexPayoff {
    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexPayoff::Call { strike } | ConvexPayoff::Put { strike } => {
                if !(*strike > 0.0) {
                    return Err(Error::InvalidParameter("payoff strike must be > 0".into()));
                }
            }
            ConvexPayoff::Power { exponent } => {
                if *exponent * (*exponent - 1.0) < 0.0 {
                    return Err(Error::InvalidParameter(
                        "power payoff needs exponent outside (0, 1) for convexity".into(),
                    ));
                }
            }
            ConvexPayoff::SmoothedCall { strike, width } => {
                if !(*strike > 0.0) || !(*width > 0.0) {
                    return Err(Error::InvalidParameter(
                        "smoothed call needs strike > 0 and width > 0".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            ConvexPayoff::Call { strike } => (x - strike).max(0.0),
            ConvexPayoff::Put { strike } => (strike - x).max(0.0),
            ConvexPayoff::NegTwoLog => -2.0 * x.ln(),
            ConvexPayoff::Square => x * x,
            ConvexPayoff::Power { exponent } => x.powf(*exponent),
            ConvexPayoff::SmoothedCall { strike, width } => {
                let u = (x - strike) / width;
                if u > 30.0 {
                    x - strike
                } else {
                    width * (1.0 + u.exp()).ln()
                }
            }
        }
    }

    /// Left derivative g'.
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            ConvexPayoff::Call { strike } => {
                if x > *strike {
                    1.0
                } else {
                    0.0
                }
            }
            ConvexPayoff::Put { strike } => {
                if x > *strike {
                    0.0
                } else {
                    -1.0
                }
            }
            ConvexPayoff::NegTwoLog => -2.0 / x,
            ConvexPayoff::Square => 2.0 * x,
            ConvexPayoff::Power { exponent } => exponent * x.powf(exponent - 1.0),
            ConvexPayoff::SmoothedCall { strike, width } => {
                let u = (x - strike) / width;
                1.0 / (1.0 + (-u).exp())
            }
        }
    }

    /// Second derivative g'' (zero at and away from kinks for piecewise
    /// linear payoffs).
    pub fn second(&self, x: f64) -> f64 {
        match self {
            ConvexPayoff::Call { .. } | ConvexPayoff::Put { .. } => 0.0,
            ConvexPayoff::NegTwoLog => 2.0 / (x * x),
            ConvexPayoff::Square => 2.0,
            ConvexPayoff::Power { exponent } => {
                exponent * (exponent - 1.0) * x.powf(exponent - 2.0)
            }
            ConvexPayoff::SmoothedCall { strike, width } => {
                let u = (x - strike) / width;
                let s = 1.0 / (1.0 + (-u).exp());
                s * (1.0 - s) / width
            }
        }
    }
}

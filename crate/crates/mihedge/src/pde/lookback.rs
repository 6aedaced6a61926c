//! Stochastic solution of the running-maximum boundary problem.
//!
//! For a payoff `f(s, m)` and clock budget `q`, the field
//!
//! ```text
//! F(x1, x2, x3) = E f(x1 + W_{q-x3}, x2 v (x1 + M_{q-x3}))
//! ```
//!
//! is evaluated by deterministic tensor quadrature against the
//! reflection-principle joint density of a Brownian motion and its running
//! maximum. The mixed boundary condition `dF/dx2 = 0` on `{x1 = x2}` holds
//! exactly in the differentiated quadrature because the indicator region
//! `{M < x2 - x1}` is empty there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DomainBox, ScalarField};
use crate::numerics::gauss_legendre;

/// Payoffs on terminal value and running maximum, with analytic partials.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LookbackPayoff {
    /// `f(s, m) = s`.
    Asset,
    /// `f(s, m) = m`.
    Max,
    Const { value: f64 },
    /// `f(s, m) = max(m - strike, 0)`, smooth in `m` away from the kink.
    CallOnMax { strike: f64 },
    /// `f(s, m) = m - s`, the terminal drawdown.
    Drawdown,
}

impl LookbackPayoff {
    pub fn value(&self, s: f64, m: f64) -> f64 {
        match self {
            LookbackPayoff::Asset => s,
            LookbackPayoff::Max => m,
            LookbackPayoff::Const { value } => *value,
            LookbackPayoff::CallOnMax { strike } => (m - strike).max(0.0),
            LookbackPayoff::Drawdown => m - s,
        }
    }

    fn ds(&self, _s: f64, _m: f64) -> f64 {
        match self {
            LookbackPayoff::Asset => 1.0,
            LookbackPayoff::Drawdown => -1.0,
            _ => 0.0,
        }
    }

    fn dm(&self, _s: f64, m: f64) -> f64 {
        match self {
            LookbackPayoff::Max | LookbackPayoff::Drawdown => 1.0,
            LookbackPayoff::CallOnMax { strike } => {
                if m > *strike {
                    1.0
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }
}

/// Quadrature nodes in the unit square with weights, reused across
/// evaluations.
struct TensorRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Field on `{0 <= x1 <= x2, 0 <= x3 <= q}` given by the stochastic
/// representation above.
pub struct LookbackField {
    payoff: LookbackPayoff,
    q: f64,
    rule: TensorRule,
    /// Scale multiplier for the tanh-stretched integration range, in
    /// standard deviations of the remaining clock.
    stretch: f64,
    domain: DomainBox,
}

/// Joint density of `(W_t, M_t)` at `(w, m)` for `m >= max(w, 0)`.
fn wm_density(w: f64, m: f64, t: f64) -> f64 {
    let r = 2.0 * m - w;
    2.0 * r / ((2.0 * std::f64::consts::PI).sqrt() * t.powf(1.5)) * (-r * r / (2.0 * t)).exp()
}

impl LookbackField {
    /// Builds the field; `n` is the per-axis quadrature resolution.
    pub fn new(payoff: LookbackPayoff, q: f64, n: usize) -> Result<Self> {
        if !(q > 0.0) {
            return Err(Error::InvalidParameter("lookback clock budget q must be > 0".into()));
        }
        let (nodes, weights) = gauss_legendre(n.max(16));
        // Map from [-1, 1] to (0, 1).
        let nodes = nodes.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let weights = weights.iter().map(|w| 0.5 * w).collect();
        // Hull generous in price; the payoff-relevant region is near the
        // starting level.
        let big = 16.0 * (1.0 + q.sqrt());
        let domain = DomainBox::new(vec![0.0, 0.0, 0.0], vec![big, big, q])?;
        Ok(LookbackField {
            payoff,
            q,
            rule: TensorRule { nodes, weights },
            stretch: 1.2,
            domain,
        })
    }

    fn check_point(&self, x: &[f64]) -> Result<f64> {
        if x.len() != 3 {
            return Err(Error::Domain("lookback field expects (s, m, clock)".into()));
        }
        if x[2] > self.q * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "clock coordinate {} exceeds the budget {}",
                x[2], self.q
            )));
        }
        if x[0] > x[1] + 1e-12 {
            return Err(Error::Domain(format!(
                "running maximum below price: ({}, {})",
                x[0], x[1]
            )));
        }
        Ok((self.q - x[2]).max(0.0))
    }

    /// Inner integral over the terminal value `w in (-inf, m]` at a fixed
    /// maximum level `m`, of `g(x1 + w) * density`.
    fn inner_w<G: Fn(f64) -> f64>(&self, x1: f64, m: f64, t: f64, scale: f64, g: G) -> f64 {
        let mut total = 0.0;
        for (j, &v) in self.rule.nodes.iter().enumerate() {
            let w = m - scale * v.atanh();
            let jw = scale / (1.0 - v * v);
            let dens = wm_density(w, m, t);
            if dens > 0.0 {
                total += self.rule.weights[j] * jw * dens * g(x1 + w);
            }
        }
        total
    }

    /// Integrates `h(s_end, m_end)` against the joint law of the terminal
    /// value and maximum started at `(x1, x2)` with remaining clock `t`.
    ///
    /// The maximum axis is split at the switching level `x2 - x1` where the
    /// running maximum takes over from the initial one, so every integrand
    /// the gradient needs is smooth on each region and the quadrature
    /// responds smoothly to the evaluation point.
    fn integrate<H: Fn(f64, f64) -> f64>(&self, x: &[f64], t: f64, h: H) -> f64 {
        if t < 1e-14 {
            return h(x[0], x[1].max(x[0]));
        }
        let scale = self.stretch * t.sqrt();
        let a = (x[1] - x[0]).max(0.0);
        let mut total = 0.0;
        // Region with m below the switching level: the maximum stays x2.
        if a > 0.0 {
            let hi = a.min(16.0 * t.sqrt());
            for (i, &u) in self.rule.nodes.iter().enumerate() {
                let m = hi * u;
                let wm = self.rule.weights[i] * hi;
                total += wm * self.inner_w(x[0], m, t, scale, |s| h(s, x[1]));
            }
        }
        // Region with m above the switching level: the maximum is x1 + m.
        for (i, &u) in self.rule.nodes.iter().enumerate() {
            let m = a + scale * u.atanh();
            let jm = scale / (1.0 - u * u);
            let wm = self.rule.weights[i] * jm;
            total += wm * self.inner_w(x[0], m, t, scale, |s| h(s, x[0] + m));
        }
        total
    }
}

impl ScalarField for LookbackField {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let t = self.check_point(x)?;
        let payoff = &self.payoff;
        Ok(self.integrate(x, t, |s, m| payoff.value(s, m)))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = self.check_point(x)?;
        let payoff = &self.payoff;
        if t < 1e-14 {
            return Ok(vec![
                payoff.ds(x[0], x[1]),
                payoff.dm(x[0], x[1]),
                0.0,
            ]);
        }
        // Differentiated quadrature: the maximum argument follows x1 + M on
        // {x1 + M > x2} and x2 otherwise, so each partial carries the
        // matching indicator.
        let x2 = x[1];
        let d1 = self.integrate(x, t, |s, m| {
            payoff.ds(s, m) + if m > x2 { payoff.dm(s, m) } else { 0.0 }
        });
        let d2 = self.integrate(x, t, |s, m| {
            if m <= x2 {
                payoff.dm(s, m)
            } else {
                0.0
            }
        });
        // Clock derivative by central differencing of the value itself;
        // the quadrature error is smooth in x3, so the difference stays
        // accurate.
        let h = 1e-4 * self.q.max(1.0);
        let d3 = if x[2] + h <= self.q && x[2] >= h {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[2] = x[2] + h;
            xm[2] = x[2] - h;
            (self.value(&xp)? - self.value(&xm)?) / (2.0 * h)
        } else {
            let h1 = h.min(0.45 * t.max(1e-8));
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[2] = (x[2] + h1).min(self.q);
            xm[2] = (x[2] - h1).max(0.0);
            (self.value(&xp)? - self.value(&xm)?) / (xp[2] - xm[2])
        };
        Ok(vec![d1, d2, d3])
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }
}

/// Builds the stochastic lookback solution for a payoff on (price, maximum)
/// with unit clock weight; `n_quad` defaults to 200 nodes per axis.
pub fn lookback_field(
    payoff: LookbackPayoff,
    q: f64,
    n_quad: Option<usize>,
) -> Result<LookbackField> {
    LookbackField::new(payoff, q, n_quad.unwrap_or(200))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn density_normalises() {
        let field = lookback_field(LookbackPayoff::Const { value: 1.0 }, 1.0, Some(200)).unwrap();
        let v = field.value(&[0.3, 0.5, 0.2]).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn martingale_component_is_the_price() {
        let field = lookback_field(LookbackPayoff::Asset, 1.0, Some(200)).unwrap();
        for &(x1, x2, x3) in &[(0.2, 0.4, 0.0), (0.5, 0.5, 0.3), (1.0, 1.5, 0.9)] {
            let v = field.value(&[x1, x2, x3]).unwrap();
            assert_relative_eq!(v, x1, epsilon = 1e-9);
        }
    }

    #[test]
    fn expected_maximum_at_origin() {
        // E M_1 = sqrt(2 / pi) by the reflection principle.
        let field = lookback_field(LookbackPayoff::Max, 1.0, Some(200)).unwrap();
        let v = field.value(&[0.0, 0.0, 0.0]).unwrap();
        let exact = (2.0 / std::f64::consts::PI).sqrt();
        assert!((v - exact).abs() < 1e-4, "E M_1 = {v} vs {exact}");
    }

    #[test]
    fn mixed_boundary_condition_vanishes_on_diagonal() {
        let field = lookback_field(LookbackPayoff::Max, 1.0, Some(120)).unwrap();
        for &(x, q) in &[(0.3, 0.1), (0.8, 0.5), (1.4, 0.9)] {
            let g = field.gradient(&[x, x, q]).unwrap();
            assert!(
                g[1].abs() < 1e-6,
                "dF/dm = {} on the diagonal at ({x}, {x}, {q})",
                g[1]
            );
        }
    }

    #[test]
    fn heat_equation_residual_small_at_interior_points() {
        let field = lookback_field(LookbackPayoff::Max, 1.0, Some(160)).unwrap();
        for i in 0..10 {
            let u = crate::numerics::halton(i, 3);
            let x1 = 0.2 + 0.8 * u[0];
            let x2 = x1 + 0.1 + 0.6 * u[1];
            let x3 = 0.1 + 0.7 * u[2];
            let x = [x1, x2, x3];
            // d2F/dx1^2 from the analytic first derivative.
            let h = 5e-4;
            let gp = field.gradient(&[x1 + h, x2, x3]).unwrap()[0];
            let gm = field.gradient(&[x1 - h, x2, x3]).unwrap()[0];
            let d11 = (gp - gm) / (2.0 * h);
            let d3 = field.gradient(&x).unwrap()[2];
            let resid = d3 + 0.5 * d11;
            assert!(
                resid.abs() < 1e-5,
                "heat residual {resid} at {x:?}"
            );
        }
    }

    #[test]
    fn clock_beyond_budget_is_domain_error() {
        let field = lookback_field(LookbackPayoff::Max, 0.5, Some(32)).unwrap();
        assert!(field.value(&[0.1, 0.2, 0.6]).is_err());
    }
}

//! Crank-Nicolson solvers for the clock-parabolic boundary-value problems
//! and grid-field interpolation.
//!
//! The common equation is `2 w(x1) dF/dx2 + d2F/dx1^2 = 0` with the clock
//! `x2` playing the role of time. Timer problems march the clock down from
//! the budget `q`; corridor problems march the exit-clock survival function
//! upward and integrate it against the payoff slope.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DomainBox, ScalarField};
use crate::numerics::solve_tridiagonal;

/// Terminal payoff for one-dimensional boundary data.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff1D {
    Identity,
    Square,
    Call { strike: f64 },
    Put { strike: f64 },
    Const { value: f64 },
    /// Triangle payoff vanishing outside `(center - width, center + width)`;
    /// convenient knockout data for barrier-timer problems.
    Butterfly { center: f64, width: f64 },
}

impl Payoff1D {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Payoff1D::Identity => x,
            Payoff1D::Square => x * x,
            Payoff1D::Call { strike } => (x - strike).max(0.0),
            Payoff1D::Put { strike } => (strike - x).max(0.0),
            Payoff1D::Const { value } => *value,
            Payoff1D::Butterfly { center, width } => {
                (1.0 - (x - center).abs() / width).max(0.0)
            }
        }
    }

    /// Left derivative; used by the corridor quadrature.
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Payoff1D::Identity => 1.0,
            Payoff1D::Square => 2.0 * x,
            Payoff1D::Call { strike } => {
                if x > *strike {
                    1.0
                } else {
                    0.0
                }
            }
            Payoff1D::Put { strike } => {
                if x > *strike {
                    0.0
                } else {
                    -1.0
                }
            }
            Payoff1D::Const { .. } => 0.0,
            Payoff1D::Butterfly { center, width } => {
                if x <= center - width || x > center + width {
                    0.0
                } else if x <= *center {
                    1.0 / width
                } else {
                    -1.0 / width
                }
            }
        }
    }
}

/// Clock weight `w(x1) = x1^exponent`; `exponent = -2` is the realised
/// log-variance clock and gets the constant-coefficient log-space scheme.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ClockWeight {
    pub exponent: f64,
}

impl ClockWeight {
    pub fn one() -> Self {
        ClockWeight { exponent: 0.0 }
    }

    pub fn inverse_square() -> Self {
        ClockWeight { exponent: -2.0 }
    }

    pub fn eval(&self, s: f64) -> f64 {
        s.powf(self.exponent)
    }
}

/// Space/clock resolution of a solve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SolveParams {
    /// Space nodes (odd keeps the anchor on a node in log space).
    pub n_space: usize,
    /// Clock steps.
    pub n_clock: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            n_space: 801,
            n_clock: 256,
        }
    }
}

/// Boundary-value problem kinds for the clock equation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryProblem {
    /// `F(x1, q) = f(x1)`; spatial domain truncated to `[anchor/8, 8 anchor]`
    /// with zero-curvature (asymptotically linear) edges.
    Timer {
        payoff: Payoff1D,
        weight: ClockWeight,
        q: f64,
        anchor: f64,
        #[serde(default)]
        params: SolveParams,
    },
    /// `F(l, x2) = F(u, x2) = f(x2)`: claims on the exit clock; solved via
    /// the survival function of the exit clock marched upward in `x2`.
    Corridor {
        payoff: Payoff1D,
        weight: ClockWeight,
        lower: f64,
        upper: f64,
        /// Clock extent of the returned field.
        q_max: f64,
        #[serde(default)]
        params: SolveParams,
    },
    /// Knockout timer claim: `F(x1, q) = f(x1)` with `F(l, .) = F(u, .) = 0`;
    /// requires `f(l) = f(u) = 0`.
    BarrierTimer {
        payoff: Payoff1D,
        weight: ClockWeight,
        q: f64,
        lower: f64,
        upper: f64,
        #[serde(default)]
        params: SolveParams,
    },
}

/// Nodal values of a solved field on a rectangular (space, clock) grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridField {
    /// Space axis in solver coordinates (log-price when `log_space`).
    pub x1_axis: Vec<f64>,
    /// Clock axis, ascending.
    pub x2_axis: Vec<f64>,
    /// `values[i][j]` at `(x1_axis[i], x2_axis[j])`.
    pub values: Vec<Vec<f64>>,
    /// 1 = bilinear, 3 = bicubic.
    pub order: usize,
    /// Whether the space axis stores log prices.
    pub log_space: bool,
    domain: DomainBox,
}

impl GridField {
    fn new(
        x1_axis: Vec<f64>,
        x2_axis: Vec<f64>,
        values: Vec<Vec<f64>>,
        order: usize,
        log_space: bool,
    ) -> Result<Self> {
        if values.len() != x1_axis.len() || values.iter().any(|r| r.len() != x2_axis.len()) {
            return Err(Error::InvalidParameter("grid field shape mismatch".into()));
        }
        if values
            .iter()
            .any(|row| row.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "grid field contains non-finite nodal values".into(),
            ));
        }
        let lo1 = if log_space {
            x1_axis[0].exp()
        } else {
            x1_axis[0]
        };
        let hi1 = if log_space {
            x1_axis[x1_axis.len() - 1].exp()
        } else {
            x1_axis[x1_axis.len() - 1]
        };
        let domain = DomainBox::new(vec![lo1, x2_axis[0]], vec![hi1, *x2_axis.last().unwrap()])?;
        Ok(GridField {
            x1_axis,
            x2_axis,
            values,
            order,
            log_space,
            domain,
        })
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    /// Nearest grid point, for out-of-hull diagnostics.
    fn nearest(&self, x: &[f64]) -> (f64, f64) {
        let s = x[0].clamp(self.domain.lo[0], self.domain.hi[0]);
        let q = x[1].clamp(self.domain.lo[1], self.domain.hi[1]);
        (s, q)
    }

    fn solver_coord(&self, s: f64) -> f64 {
        if self.log_space {
            s.ln()
        } else {
            s
        }
    }

    /// Value and gradient (in original coordinates) by tensor interpolation.
    pub fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if !self.domain.contains(x) {
            let near = self.nearest(x);
            return Err(Error::Domain(format!(
                "point ({}, {}) outside the grid hull; nearest in-hull point is ({}, {})",
                x[0], x[1], near.0, near.1
            )));
        }
        let u = self.solver_coord(x[0]);
        let (val, du, dq) = interp2(&self.x1_axis, &self.x2_axis, &self.values, u, x[1], self.order);
        let ds = if self.log_space { du / x[0] } else { du };
        Ok((val, vec![ds, dq]))
    }
}

impl ScalarField for GridField {
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval(x)?.0)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval(x)?.1)
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }
}

/// Interpolates `value, d/dx, d/dy` on a uniform tensor grid.
fn interp2(
    xs: &[f64],
    ys: &[f64],
    values: &[Vec<f64>],
    x: f64,
    y: f64,
    order: usize,
) -> (f64, f64, f64) {
    let hx = xs[1] - xs[0];
    let hy = ys[1] - ys[0];
    let fx = ((x - xs[0]) / hx).clamp(0.0, (xs.len() - 1) as f64);
    let fy = ((y - ys[0]) / hy).clamp(0.0, (ys.len() - 1) as f64);
    if order >= 3 && xs.len() >= 4 && ys.len() >= 4 {
        // Four-point Lagrange cubic in each axis.
        let ix = (fx.floor() as usize).clamp(1, xs.len() - 3);
        let iy = (fy.floor() as usize).clamp(1, ys.len() - 3);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let (wx, dwx) = cubic_weights(tx);
        let (wy, dwy) = cubic_weights(ty);
        let mut v = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let node = values[ix - 1 + a][iy - 1 + b];
                v += wx[a] * wy[b] * node;
                dx += dwx[a] * wy[b] * node;
                dy += wx[a] * dwy[b] * node;
            }
        }
        (v, dx / hx, dy / hy)
    } else {
        let ix = (fx.floor() as usize).min(xs.len() - 2);
        let iy = (fy.floor() as usize).min(ys.len() - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let f00 = values[ix][iy];
        let f10 = values[ix + 1][iy];
        let f01 = values[ix][iy + 1];
        let f11 = values[ix + 1][iy + 1];
        let v = f00 * (1.0 - tx) * (1.0 - ty)
            + f10 * tx * (1.0 - ty)
            + f01 * (1.0 - tx) * ty
            + f11 * tx * ty;
        let dx = ((f10 - f00) * (1.0 - ty) + (f11 - f01) * ty) / hx;
        let dy = ((f01 - f00) * (1.0 - tx) + (f11 - f10) * tx) / hy;
        (v, dx, dy)
    }
}

/// Lagrange cubic weights and derivatives on nodes {-1, 0, 1, 2} at `t`.
fn cubic_weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let w = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    let dw = [
        -(3.0 * t * t - 6.0 * t + 2.0) / 6.0,
        (3.0 * t * t - 4.0 * t - 1.0) / 2.0,
        -(3.0 * t * t - 2.0 * t - 2.0) / 2.0,
        (3.0 * t * t - 1.0) / 6.0,
    ];
    (w, dw)
}

/// One tridiagonal theta-step of `du/dtau = A u` where `A` has rows
/// `(c_m, c_0, c_p)` on the interior; boundary closures substitute
/// `u_0 = e_a u_1 + e_b u_2` and `u_N = g_a u_{N-1} + g_b u_{N-2}`.
#[allow(clippy::too_many_arguments)]
fn theta_step(
    u: &mut [f64],
    cm: &[f64],
    c0: &[f64],
    cp: &[f64],
    dtau: f64,
    theta: f64,
    closure: Option<((f64, f64), (f64, f64))>,
) {
    let n = u.len();
    let m = n - 2; // interior unknowns 1..=n-2
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];

    // Explicit part (uses current boundary values directly).
    for i in 1..n - 1 {
        let a = cm[i] * u[i - 1] + c0[i] * u[i] + cp[i] * u[i + 1];
        rhs[i - 1] = u[i] + (1.0 - theta) * dtau * a;
    }
    for i in 1..n - 1 {
        lower[i - 1] = -theta * dtau * cm[i];
        diag[i - 1] = 1.0 - theta * dtau * c0[i];
        upper[i - 1] = -theta * dtau * cp[i];
    }
    match closure {
        Some(((ea, eb), (ga, gb))) => {
            // Fold the boundary expressions into the first and last rows.
            diag[0] += -theta * dtau * cm[1] * ea;
            upper[0] += -theta * dtau * cm[1] * eb;
            diag[m - 1] += -theta * dtau * cp[n - 2] * ga;
            lower[m - 1] += -theta * dtau * cp[n - 2] * gb;
            lower[0] = 0.0;
            upper[m - 1] = 0.0;
        }
        None => {
            // Dirichlet zero boundaries: nothing to fold.
            lower[0] = 0.0;
            upper[m - 1] = 0.0;
        }
    }
    solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
    u[1..(m + 1)].copy_from_slice(&rhs[..m]);
    match closure {
        Some(((ea, eb), (ga, gb))) => {
            u[0] = ea * u[1] + eb * u[2];
            u[n - 1] = ga * u[n - 2] + gb * u[n - 3];
        }
        None => {
            u[0] = 0.0;
            u[n - 1] = 0.0;
        }
    }
}

/// Solves a boundary-value problem, returning nodal values with bicubic
/// interpolation enabled.
pub fn solve_parabolic(problem: &BoundaryProblem) -> Result<GridField> {
    match problem {
        BoundaryProblem::Timer {
            payoff,
            weight,
            q,
            anchor,
            params,
        } => solve_timer(payoff, *weight, *q, *anchor, None, *params),
        BoundaryProblem::BarrierTimer {
            payoff,
            weight,
            q,
            lower,
            upper,
            params,
        } => {
            if !(lower < upper) || !(*lower > 0.0) {
                return Err(Error::InvalidParameter(
                    "barrier timer needs 0 < lower < upper".into(),
                ));
            }
            if payoff.value(*lower).abs() > 1e-12 || payoff.value(*upper).abs() > 1e-12 {
                return Err(Error::InvalidParameter(
                    "barrier timer payoff must vanish at both barriers".into(),
                ));
            }
            solve_timer(payoff, *weight, *q, 0.0, Some((*lower, *upper)), *params)
        }
        BoundaryProblem::Corridor {
            payoff,
            weight,
            lower,
            upper,
            q_max,
            params,
        } => solve_corridor(payoff, *weight, *lower, *upper, *q_max, *params),
    }
}

fn solve_timer(
    payoff: &Payoff1D,
    weight: ClockWeight,
    q: f64,
    anchor: f64,
    barriers: Option<(f64, f64)>,
    params: SolveParams,
) -> Result<GridField> {
    if !(q > 0.0) {
        return Err(Error::InvalidParameter("timer clock budget q must be > 0".into()));
    }
    let n = params.n_space.max(5);
    let n_clock = params.n_clock.max(4);

    // Log-space constant-coefficient scheme for the 1/x^2 clock without
    // barriers; otherwise direct price-space with variable coefficients.
    let log_space = barriers.is_none() && (weight.exponent + 2.0).abs() < 1e-14;
    let (axis, cm, c0, cp, closure): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, _) = if log_space {
        if !(anchor > 0.0) {
            return Err(Error::InvalidParameter("timer anchor must be > 0".into()));
        }
        let l = (8.0f64).ln();
        let h = 2.0 * l / (n - 1) as f64;
        let axis: Vec<f64> = (0..n).map(|i| anchor.ln() - l + i as f64 * h).collect();
        // Exponentially fitted stencil for (D_yy - D_y)/2 in log price: it
        // annihilates constants and e^y exactly, so affine payoffs in the
        // price are invariant at machine precision.
        let eh = h.exp();
        let cp_val = 0.5 / (h * (eh - 1.0));
        let cm = vec![cp_val * eh; n];
        let c0 = vec![-cp_val * (1.0 + eh); n];
        let cp = vec![cp_val; n];
        // Linear-in-price closure u_0 = (1-lam) u_1 + lam u_2 expressed with
        // actual price nodes.
        let s: Vec<f64> = axis.iter().map(|y| y.exp()).collect();
        let lam = (s[0] - s[1]) / (s[2] - s[1]);
        let mu = (s[n - 1] - s[n - 2]) / (s[n - 2] - s[n - 3]);
        let closure = Some(((1.0 - lam, lam), (1.0 + mu, -mu)));
        (axis, cm, c0, cp, closure)
    } else {
        let (lo, hi) = match barriers {
            Some((l, u)) => (l, u),
            None => {
                if !(anchor > 0.0) {
                    return Err(Error::InvalidParameter("timer anchor must be > 0".into()));
                }
                (anchor / 8.0, anchor * 8.0)
            }
        };
        let h = (hi - lo) / (n - 1) as f64;
        let axis: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
        let mut cm = vec![0.0; n];
        let mut c0 = vec![0.0; n];
        let mut cp = vec![0.0; n];
        for i in 0..n {
            let w = weight.eval(axis[i]);
            if !(w > 0.0) {
                return Err(Error::InvalidParameter(
                    "clock weight must be strictly positive on the space interval".into(),
                ));
            }
            let a = 1.0 / (2.0 * w * h * h);
            cm[i] = a;
            c0[i] = -2.0 * a;
            cp[i] = a;
        }
        let closure = match barriers {
            Some(_) => None,
            // Uniform price grid: linear extrapolation u_0 = 2u_1 - u_2.
            None => Some(((2.0, -1.0), (2.0, -1.0))),
        };
        (axis, cm, c0, cp, closure)
    };

    let price = |y: f64| if log_space { y.exp() } else { y };
    let mut u: Vec<f64> = axis.iter().map(|&y| payoff.value(price(y))).collect();
    if barriers.is_some() {
        u[0] = 0.0;
        u[n - 1] = 0.0;
    }

    let dq = q / n_clock as f64;
    let mut values = vec![vec![0.0; n_clock + 1]; n];
    for (i, row) in values.iter_mut().enumerate() {
        row[n_clock] = u[i];
    }
    for step in 0..n_clock {
        if step < 2 {
            // Rannacher startup: two implicit half-steps per clock step.
            theta_step(&mut u, &cm, &c0, &cp, 0.5 * dq, 1.0, closure);
            theta_step(&mut u, &cm, &c0, &cp, 0.5 * dq, 1.0, closure);
        } else {
            theta_step(&mut u, &cm, &c0, &cp, dq, 0.5, closure);
        }
        let j = n_clock - 1 - step;
        for (i, row) in values.iter_mut().enumerate() {
            row[j] = u[i];
        }
    }
    let x2_axis: Vec<f64> = (0..=n_clock).map(|j| j as f64 * dq).collect();
    GridField::new(axis, x2_axis, values, 3, log_space)
}

fn solve_corridor(
    payoff: &Payoff1D,
    weight: ClockWeight,
    lower: f64,
    upper: f64,
    q_max: f64,
    params: SolveParams,
) -> Result<GridField> {
    if !(lower < upper) || !(lower > 0.0) {
        return Err(Error::InvalidParameter(
            "corridor needs 0 < lower < upper".into(),
        ));
    }
    if !(q_max > 0.0) {
        return Err(Error::InvalidParameter("corridor q_max must be > 0".into()));
    }
    let n = params.n_space.max(5);
    let h = (upper - lower) / (n - 1) as f64;
    let axis: Vec<f64> = (0..n).map(|i| lower + i as f64 * h).collect();
    let mut cm = vec![0.0; n];
    let mut c0 = vec![0.0; n];
    let mut cp = vec![0.0; n];
    let mut w_max = 0.0f64;
    for i in 0..n {
        let w = weight.eval(axis[i]);
        if !(w > 0.0) {
            return Err(Error::InvalidParameter(
                "clock weight must be strictly positive on the corridor".into(),
            ));
        }
        w_max = w_max.max(w);
        let a = 1.0 / (2.0 * w * h * h);
        cm[i] = a;
        c0[i] = -2.0 * a;
        cp[i] = a;
    }

    // Survival function of the exit clock: 1 inside, 0 at the barriers,
    // marched upward; decays like exp(-rho pi^2 / (2 w (u-l)^2)). The
    // initial data is discontinuous at the barriers, so the march starts
    // with implicit Euler on a geometric step ramp before switching to
    // Crank-Nicolson at the uniform step.
    let lambda_min = std::f64::consts::PI.powi(2) / (2.0 * w_max * (upper - lower).powi(2));
    let rho_max = (30.0 / lambda_min).max(q_max);
    let n_rho = params.n_clock.max(64) * 16;
    let drho_uniform = rho_max / n_rho as f64;

    let n_q = params.n_clock.max(4);
    let dq = q_max / n_q as f64;
    let q_axis: Vec<f64> = (0..=n_q).map(|j| j as f64 * dq).collect();

    let mut survival = vec![1.0; n];
    survival[0] = 0.0;
    survival[n - 1] = 0.0;
    // F(x1, x2) = f(x2) + int_0^inf f'(x2 + rho) survival(x1, rho) drho,
    // accumulated by the trapezoid rule step by step.
    let mut values: Vec<Vec<f64>> = (0..n)
        .map(|_| q_axis.iter().map(|&q| payoff.value(q)).collect())
        .collect();
    let mut rho = 0.0;
    let mut drho = drho_uniform * 1e-9;
    let mut prev = survival.clone();
    let max_steps = 4 * n_rho + 800;
    let mut step_count = 0usize;
    for _ in 0..max_steps {
        let ramp = drho < drho_uniform;
        if step_count < 12 {
            theta_step(&mut survival, &cm, &c0, &cp, drho, 1.0, None);
        } else {
            theta_step(&mut survival, &cm, &c0, &cp, drho, 0.5, None);
        }
        step_count += 1;
        for (i, row) in values.iter_mut().enumerate() {
            let trap = 0.5 * drho * (prev[i] + survival[i]);
            if trap == 0.0 {
                continue;
            }
            for (j, &q) in q_axis.iter().enumerate() {
                // The payoff slope varies slowly over one step; evaluate at
                // the step midpoint.
                row[j] += trap * payoff.deriv(q + rho + 0.5 * drho);
            }
        }
        rho += drho;
        prev.copy_from_slice(&survival);
        if ramp {
            drho = (drho * 1.15).min(drho_uniform);
        }
        if rho >= rho_max {
            break;
        }
        let sup = survival.iter().cloned().fold(0.0, f64::max);
        if sup < 1e-13 {
            break;
        }
    }
    GridField::new(axis, q_axis, values, 3, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_payoff_is_invariant() {
        let field = solve_parabolic(&BoundaryProblem::Timer {
            payoff: Payoff1D::Identity,
            weight: ClockWeight::inverse_square(),
            q: 0.04,
            anchor: 1.0,
            params: SolveParams {
                n_space: 201,
                n_clock: 32,
            },
        })
        .unwrap();
        for (i, &y) in field.x1_axis.iter().enumerate() {
            for j in 0..field.x2_axis.len() {
                assert_relative_eq!(field.values[i][j], y.exp(), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn square_payoff_matches_closed_form() {
        let field = solve_parabolic(&BoundaryProblem::Timer {
            payoff: Payoff1D::Square,
            weight: ClockWeight::inverse_square(),
            q: 0.04,
            anchor: 1.0,
            params: SolveParams {
                n_space: 801,
                n_clock: 128,
            },
        })
        .unwrap();
        let (v, _) = field.eval(&[1.0, 0.0]).unwrap();
        assert!(
            (v - 0.04f64.exp()).abs() < 1e-4,
            "F(1, 0) = {v} vs {}",
            0.04f64.exp()
        );
    }

    #[test]
    fn atm_timer_call_matches_black_scholes() {
        let field = solve_parabolic(&BoundaryProblem::Timer {
            payoff: Payoff1D::Call { strike: 1.0 },
            weight: ClockWeight::inverse_square(),
            q: 0.04,
            anchor: 1.0,
            params: SolveParams {
                n_space: 801,
                n_clock: 128,
            },
        })
        .unwrap();
        let (v, _) = field.eval(&[1.0, 0.0]).unwrap();
        let bs = crate::market::bs_call(1.0, 1.0, 1.0, 0.2);
        assert!((v - bs).abs() < 5e-4, "F(1,0) = {v} vs BS {bs}");
    }

    #[test]
    fn grid_refinement_reduces_square_error_by_at_least_three() {
        let error_for = |n_space: usize, n_clock: usize| -> f64 {
            let field = solve_parabolic(&BoundaryProblem::Timer {
                payoff: Payoff1D::Square,
                weight: ClockWeight::inverse_square(),
                q: 0.04,
                anchor: 1.0,
                params: SolveParams { n_space, n_clock },
            })
            .unwrap();
            // Max nodal error on the central half of the domain at x2 = 0.
            let mut worst = 0.0f64;
            for (i, &y) in field.x1_axis.iter().enumerate() {
                let s = y.exp();
                if s < 0.5 || s > 2.0 {
                    continue;
                }
                let exact = s * s * 0.04f64.exp();
                worst = worst.max((field.values[i][0] - exact).abs());
            }
            worst
        };
        let coarse = error_for(201, 32);
        let fine = error_for(401, 64);
        assert!(
            coarse / fine >= 3.0,
            "refinement factor {} below second-order expectation",
            coarse / fine
        );
    }

    #[test]
    fn discrete_maximum_principle_for_nonnegative_data() {
        let field = solve_parabolic(&BoundaryProblem::Timer {
            payoff: Payoff1D::Call { strike: 1.0 },
            weight: ClockWeight::inverse_square(),
            q: 0.04,
            anchor: 1.0,
            params: SolveParams {
                n_space: 401,
                n_clock: 64,
            },
        })
        .unwrap();
        let min = field
            .values
            .iter()
            .flat_map(|r| r.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-12, "negative value {min} under nonnegative data");
    }

    #[test]
    fn barrier_timer_vanishes_on_barriers() {
        let field = solve_parabolic(&BoundaryProblem::BarrierTimer {
            payoff: Payoff1D::Butterfly {
                center: 1.0,
                width: 0.4,
            },
            weight: ClockWeight::inverse_square(),
            q: 0.04,
            lower: 0.5,
            upper: 1.5,
            params: SolveParams {
                n_space: 201,
                n_clock: 64,
            },
        })
        .unwrap();
        for j in 0..field.x2_axis.len() {
            assert_eq!(field.values[0][j], 0.0);
            assert_eq!(field.values[200][j], 0.0);
        }
        // Interior values stay within the payoff range.
        let max = field
            .values
            .iter()
            .flat_map(|r| r.iter())
            .cloned()
            .fold(0.0, f64::max);
        assert!(max <= 1.0 + 1e-9);
    }

    #[test]
    fn barrier_timer_requires_vanishing_payoff() {
        let res = solve_parabolic(&BoundaryProblem::BarrierTimer {
            payoff: Payoff1D::Identity,
            weight: ClockWeight::one(),
            q: 0.04,
            lower: 0.5,
            upper: 1.5,
            params: SolveParams::default(),
        });
        assert!(res.is_err());
    }

    #[test]
    fn corridor_identity_payoff_matches_closed_form() {
        // For f(q) = q and w = 1 the solution is x2 + (x1 - l)(u - x1).
        let field = solve_parabolic(&BoundaryProblem::Corridor {
            payoff: Payoff1D::Identity,
            weight: ClockWeight::one(),
            lower: 0.5,
            upper: 2.0,
            q_max: 0.5,
            params: SolveParams {
                n_space: 201,
                n_clock: 64,
            },
        })
        .unwrap();
        for &s in &[0.7, 1.0, 1.3, 1.8] {
            for &q in &[0.0, 0.2, 0.4] {
                let (v, _) = field.eval(&[s, q]).unwrap();
                let exact = q + (s - 0.5) * (2.0 - s);
                assert!(
                    (v - exact).abs() < 2e-3,
                    "corridor F({s}, {q}) = {v} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(solve_parabolic(&BoundaryProblem::Timer {
            payoff: Payoff1D::Identity,
            weight: ClockWeight::inverse_square(),
            q: -0.1,
            anchor: 1.0,
            params: SolveParams::default(),
        })
        .is_err());
        assert!(solve_parabolic(&BoundaryProblem::Corridor {
            payoff: Payoff1D::Identity,
            weight: ClockWeight::one(),
            lower: 2.0,
            upper: 0.5,
            q_max: 1.0,
            params: SolveParams::default(),
        })
        .is_err());
    }

    #[test]
    fn nodal_points_are_reproduced_exactly_and_linears_everywhere() {
        // A linear field sampled on a grid is reproduced exactly by both
        // interpolation orders.
        let xs: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = (0..9).map(|j| j as f64 * 0.25).collect();
        let values: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| ys.iter().map(|&y| 2.0 * x - 3.0 * y + 1.0).collect())
            .collect();
        for order in [1, 3] {
            let field =
                GridField::new(xs.clone(), ys.clone(), values.clone(), order, false).unwrap();
            for &x in &[0.05, 0.42, 0.97] {
                for &y in &[0.1, 1.11, 1.9] {
                    let (v, g) = field.eval(&[x, y]).unwrap();
                    assert_relative_eq!(v, 2.0 * x - 3.0 * y + 1.0, epsilon = 1e-12);
                    assert_relative_eq!(g[0], 2.0, epsilon = 1e-9);
                    assert_relative_eq!(g[1], -3.0, epsilon = 1e-9);
                }
            }
            let (v, _) = field.eval(&[xs[3], ys[4]]).unwrap();
            assert_relative_eq!(v, values[3][4], epsilon = 1e-12);
        }
    }

    #[test]
    fn bicubic_relative_error_on_smooth_field() {
        // F = x1^2 exp(q - x2) sampled on a 400 x 400 grid.
        let q = 0.04;
        let n = 400;
        let xs: Vec<f64> = (0..n).map(|i| 0.5 + 1.5 * i as f64 / (n - 1) as f64).collect();
        let ys: Vec<f64> = (0..n).map(|j| q * j as f64 / (n - 1) as f64).collect();
        let values: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| ys.iter().map(|&y| x * x * (q - y).exp()).collect())
            .collect();
        let field = GridField::new(xs, ys, values, 3, false).unwrap();
        for i in 0..50 {
            let u = crate::numerics::halton(i, 2);
            let x = 0.55 + 1.4 * u[0];
            let y = 0.002 + 0.036 * u[1];
            let (v, _) = field.eval(&[x, y]).unwrap();
            let exact = x * x * (q - y).exp();
            assert!(
                ((v - exact) / exact).abs() < 1e-5,
                "relative error {} at ({x}, {y})",
                ((v - exact) / exact).abs()
            );
        }
    }

    #[test]
    fn out_of_hull_reports_nearest_point() {
        let field = solve_parabolic(&BoundaryProblem::Timer {
            payoff: Payoff1D::Identity,
            weight: ClockWeight::inverse_square(),
            q: 0.04,
            anchor: 1.0,
            params: SolveParams {
                n_space: 101,
                n_clock: 16,
            },
        })
        .unwrap();
        match field.eval(&[20.0, 0.01]) {
            Err(Error::Domain(msg)) => assert!(msg.contains("nearest")),
            other => panic!("expected domain error, got {other:?}"),
        }
    }
}

//! Static market tooling: Black-Scholes pricing of convex claims, call-strip
//! no-arbitrage checks, local-volatility calibration from a single-maturity
//! strip, Monte Carlo repricing, and full-support diagnostics.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::numerics::{adaptive_simpson, normal_cdf, normal_pdf, path_seed, sup_where};
use crate::payoff::ConvexPayoff;

/// Black-Scholes price of a convex claim `g(S_T)` under zero rates, as a
/// function of spot and total variance `sigma^2 t`. Call, put, log and power
/// payoffs dispatch to closed forms; anything else is integrated against the
/// lognormal density.
pub fn bs_convex(g: &ConvexPayoff, s: f64, total_var: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter("bs_convex needs s > 0".into()));
    }
    if !(total_var >= 0.0) || !total_var.is_finite() {
        return Err(Error::InvalidParameter(
            "bs_convex needs finite total_var >= 0".into(),
        ));
    }
    if total_var == 0.0 {
        return Ok(g.value(s));
    }
    let sq = total_var.sqrt();
    let price = match g {
        ConvexPayoff::Call { strike } => {
            let d1 = ((s / strike).ln() + 0.5 * total_var) / sq;
            s * normal_cdf(d1) - strike * normal_cdf(d1 - sq)
        }
        ConvexPayoff::Put { strike } => {
            let d1 = ((s / strike).ln() + 0.5 * total_var) / sq;
            strike * normal_cdf(sq - d1) - s * normal_cdf(-d1)
        }
        ConvexPayoff::NegTwoLog => -2.0 * s.ln() + total_var,
        ConvexPayoff::Square => s * s * total_var.exp(),
        ConvexPayoff::Power { exponent } => {
            s.powf(*exponent) * (0.5 * exponent * (exponent - 1.0) * total_var).exp()
        }
        ConvexPayoff::SmoothedCall { .. } => {
            let f = |z: f64| g.value(s * (sq * z - 0.5 * total_var).exp()) * normal_pdf(z);
            adaptive_simpson(&f, -12.0, 12.0, 1e-12)
        }
    };
    if !price.is_finite() {
        return Err(Error::Domain("divergent integrand in bs_convex".into()));
    }
    Ok(price)
}

/// Black-Scholes call price and its strike/calendar derivatives under zero
/// rates; `t` is the option maturity.
pub fn bs_call(s0: f64, k: f64, t: f64, sigma: f64) -> f64 {
    bs_convex(&ConvexPayoff::Call { strike: k }, s0, sigma * sigma * t).unwrap()
}

pub fn bs_call_dk(s0: f64, k: f64, t: f64, sigma: f64) -> f64 {
    let v = sigma * sigma * t;
    if v <= 0.0 {
        return if s0 > k { -1.0 } else { 0.0 };
    }
    let d2 = ((s0 / k).ln() - 0.5 * v) / v.sqrt();
    -normal_cdf(d2)
}

pub fn bs_call_dkk(s0: f64, k: f64, t: f64, sigma: f64) -> f64 {
    let v = sigma * sigma * t;
    if v <= 0.0 {
        return 0.0;
    }
    let d2 = ((s0 / k).ln() - 0.5 * v) / v.sqrt();
    normal_pdf(d2) / (k * v.sqrt())
}

pub fn bs_call_dt(s0: f64, k: f64, t: f64, sigma: f64) -> f64 {
    if t <= 0.0 || sigma <= 0.0 {
        return 0.0;
    }
    let v = sigma * sigma * t;
    let d2 = ((s0 / k).ln() - 0.5 * v) / v.sqrt();
    k * normal_pdf(d2) * sigma / (2.0 * t.sqrt())
}

/// A single-maturity strip of call prices on increasing strikes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CallStrip {
    pub s0: f64,
    pub strikes: Vec<f64>,
    pub prices: Vec<f64>,
}

/// The discrete no-arbitrage quantities of a strip, with the zero-strike
/// call `C^1 = s0` at `k_1 = 0` prepended by convention.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArbReport {
    pub v_min: f64,
    pub delta_min: f64,
    pub d2: f64,
    pub dd: f64,
    pub pass: bool,
    pub violated: Vec<String>,
}

impl CallStrip {
    pub fn validate(&self) -> Result<()> {
        if self.strikes.len() < 2 {
            return Err(Error::InvalidParameter(
                "a strip needs at least two strikes; single claims belong to the convex-claim market".into(),
            ));
        }
        if self.strikes.len() != self.prices.len() {
            return Err(Error::InvalidParameter(
                "strikes and prices must have equal length".into(),
            ));
        }
        if !(self.s0 > 0.0) {
            return Err(Error::InvalidParameter("strip needs s0 > 0".into()));
        }
        if self.strikes[0] <= 0.0 {
            return Err(Error::InvalidParameter("strikes must be positive".into()));
        }
        for w in self.strikes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter(
                    "strikes must be strictly increasing".into(),
                ));
            }
        }
        if self.prices.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter(
                "prices must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Left-hand slopes `D^i` of the linear price interpolation, including
    /// the conventional segment from `(0, s0)` to the first strike.
    pub fn slopes(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.strikes.len());
        d.push((self.prices[0] - self.s0) / self.strikes[0]);
        for i in 1..self.strikes.len() {
            d.push((self.prices[i] - self.prices[i - 1]) / (self.strikes[i] - self.strikes[i - 1]));
        }
        d
    }

    pub fn time_values(&self) -> Vec<f64> {
        self.strikes
            .iter()
            .zip(&self.prices)
            .map(|(k, c)| c - (self.s0 - k).max(0.0))
            .collect()
    }

    /// Generates a strip from Black-Scholes prices at a flat volatility.
    pub fn black_scholes(s0: f64, strikes: &[f64], sigma: f64, t: f64) -> Self {
        CallStrip {
            s0,
            strikes: strikes.to_vec(),
            prices: strikes.iter().map(|&k| bs_call(s0, k, t, sigma)).collect(),
        }
    }
}

/// Evaluates the four discrete model-existence conditions of a call strip.
pub fn check_strip(strip: &CallStrip) -> Result<ArbReport> {
    strip.validate()?;
    let v = strip.time_values();
    let d = strip.slopes();
    let v_min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let delta_min = d
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let d2 = d[0];
    let dd = *d.last().unwrap();
    let mut violated = Vec::new();
    if !(v_min > 0.0) {
        violated.push("v_min".to_string());
    }
    if !(delta_min > 0.0) {
        violated.push("delta_min".to_string());
    }
    if !(d2 > -1.0) {
        violated.push("d2".to_string());
    }
    if !(dd < 0.0) {
        violated.push("dd".to_string());
    }
    Ok(ArbReport {
        v_min,
        delta_min,
        d2,
        dd,
        pass: violated.is_empty(),
        violated,
    })
}

/// Piecewise-quadratic C^1 convex interpolant (Schumaker construction):
/// each data interval gets one interior knot so the quadratic pieces match
/// values and knot slopes while keeping curvature nonnegative.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConvexSpline {
    /// Segment starts (ascending) with value, slope and half-curvature:
    /// on `[x_i, x_{i+1})` the spline is `z + s (x - x_i) + c (x - x_i)^2`.
    pub segments: Vec<(f64, f64, f64, f64)>,
    pub x_end: f64,
}

impl ConvexSpline {
    /// Fits the spline through `(x_i, y_i)` with prescribed end slopes.
    /// Interior knot slopes are the length-weighted secant averages. Fails
    /// with the offending interval when convex interpolation is impossible.
    pub fn fit(x: &[f64], y: &[f64], slope_left: f64, slope_right: f64) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidParameter(
                "spline needs matching x/y with at least two points".into(),
            ));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        if h.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidParameter("spline abscissae must increase".into()));
        }
        let secant: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        for i in 1..secant.len() {
            if secant[i] < secant[i - 1] {
                return Err(Error::Calibration(format!(
                    "interpolation data not convex on [{}, {}]",
                    x[i], x[i + 1]
                )));
            }
        }
        let mut s = vec![0.0; n];
        s[0] = slope_left;
        s[n - 1] = slope_right;
        for i in 1..n - 1 {
            s[i] = (h[i] * secant[i - 1] + h[i - 1] * secant[i]) / (h[i - 1] + h[i]);
        }
        let mut segments = Vec::new();
        for i in 0..n - 1 {
            let (s1, s2, delta) = (s[i], s[i + 1], secant[i]);
            let tol = 1e-12 * (1.0 + delta.abs());
            if s1 > delta + tol || s2 < delta - tol {
                return Err(Error::Calibration(format!(
                    "convex interpolation fails on [{}, {}]: slopes ({s1}, {s2}) vs secant {delta}",
                    x[i],
                    x[i + 1]
                )));
            }
            if (s2 - s1).abs() <= tol {
                // Straight piece.
                segments.push((x[i], y[i], delta, 0.0));
                continue;
            }
            // Interior knot placed so the junction slope equals the secant.
            let alpha = (h[i] * (s2 - delta) / (s2 - s1)).clamp(0.0, h[i]);
            let xi = x[i] + alpha;
            if alpha > 1e-14 * h[i] {
                let c1 = (delta - s1) / (2.0 * alpha);
                segments.push((x[i], y[i], s1, c1));
            }
            let beta = h[i] - alpha;
            if beta > 1e-14 * h[i] {
                // Value at the interior knot; the first piece ends there
                // with slope equal to the secant.
                let y_xi = y[i] + 0.5 * alpha * (s1 + delta);
                let c2 = (s2 - delta) / (2.0 * beta);
                segments.push((xi, y_xi, delta, c2));
            }
        }
        Ok(ConvexSpline {
            segments,
            x_end: x[n - 1],
        })
    }

    fn locate(&self, x: f64) -> usize {
        match self
            .segments
            .binary_search_by(|seg| seg.0.partial_cmp(&x).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let (x0, z, s, c) = self.segments[self.locate(x)];
        let u = x - x0;
        z + s * u + c * u * u
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let (x0, _, s, c) = self.segments[self.locate(x)];
        s + 2.0 * c * (x - x0)
    }

    pub fn second(&self, x: f64) -> f64 {
        let (_, _, _, c) = self.segments[self.locate(x)];
        2.0 * c
    }
}

/// Local-volatility surface produced by the blended single-strip calibration.
/// The volatility equals `sigma0` outside the patch `[a1, a2] x [T/2, T]`;
/// inside, it is the Dupire ratio of the blended price surface.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LocalVolSurface {
    pub s0: f64,
    pub sigma0: f64,
    pub maturity: f64,
    pub a1: f64,
    pub a2: f64,
    /// Convex price interpolant at the terminal maturity.
    pub interpolant: ConvexSpline,
    /// Volatility bounds observed on the sampled grid.
    pub bounds: [f64; 2],
    /// Strike-convexity level below which the Dupire ratio is treated as
    /// 0/0-degenerate and the base level is used instead.
    pub degenerate_curvature: f64,
    pub grid_strikes: Vec<f64>,
    pub grid_times: Vec<f64>,
    /// `values[i][j]` is sigma at `(grid_strikes[i], grid_times[j])`.
    pub values: Vec<Vec<f64>>,
}

/// Floor applied to the strike-convexity denominator of the Dupire ratio.
const DUPIRE_DENOM_FLOOR_SCALE: f64 = 1e-10;

impl LocalVolSurface {
    /// Time-blend weight: 0 before T/2, quadratic to 1 at T.
    fn blend(&self, t: f64) -> f64 {
        let half = 0.5 * self.maturity;
        if t <= half {
            0.0
        } else {
            let th = ((t - half) / half).min(1.0);
            th * th
        }
    }

    fn blend_dt(&self, t: f64) -> f64 {
        let half = 0.5 * self.maturity;
        if t <= half || t > self.maturity {
            0.0
        } else {
            2.0 * ((t - half) / half) / half
        }
    }

    /// Raw Dupire volatility at `(k, t)`, before clamping to the reported
    /// bounds; exactly `sigma0` outside the patch.
    pub fn sigma_raw(&self, k: f64, t: f64) -> f64 {
        if k <= self.a1 || k >= self.a2 || t <= 0.5 * self.maturity {
            return self.sigma0;
        }
        let t_eff = t.min(self.maturity);
        let psi = self.interpolant.value(k) - bs_call(self.s0, k, self.maturity, self.sigma0);
        let psi_kk =
            self.interpolant.second(k) - bs_call_dkk(self.s0, k, self.maturity, self.sigma0);
        let num = bs_call_dt(self.s0, k, t_eff, self.sigma0) + self.blend_dt(t) * psi;
        let den = bs_call_dkk(self.s0, k, t_eff, self.sigma0) + self.blend(t) * psi_kk;
        // Where the patch carries no strike convexity the ratio is a 0/0
        // corner; the price surface is insensitive to the volatility there
        // and the base level is the continuous extension.
        if den < self.degenerate_curvature || num <= 0.0 {
            return self.sigma0;
        }
        let den = den.max(DUPIRE_DENOM_FLOOR_SCALE / self.s0);
        (2.0 * num / den).sqrt() / k
    }

    /// Volatility lookup used in simulation: Dupire ratio clamped to the
    /// reported bounds.
    pub fn sigma(&self, k: f64, t: f64) -> f64 {
        self.sigma_raw(k, t).clamp(self.bounds[0], self.bounds[1])
    }
}

/// Calibrates a bounded local-volatility surface matching the strip at its
/// maturity: base level from the two tangency thresholds, a convex
/// interpolant through the anchor prices, a quadratic time blend on
/// `[T/2, T]`, and the Dupire ratio inside the patch.
pub fn dupire_calibrate(strip: &CallStrip, maturity: f64) -> Result<LocalVolSurface> {
    let report = check_strip(strip)?;
    if !report.pass {
        return Err(Error::Calibration(format!(
            "strip fails no-arbitrage conditions: {:?}",
            report.violated
        )));
    }
    if !(maturity > 0.0) {
        return Err(Error::InvalidParameter("maturity must be positive".into()));
    }
    let s0 = strip.s0;
    let k2 = strip.strikes[0];
    let kd = *strip.strikes.last().unwrap();
    let c2 = strip.prices[0];
    let cd = *strip.prices.last().unwrap();
    let dd = *strip.slopes().last().unwrap();

    let a1 = 0.5 * (s0 - c2);
    let a2 = kd - cd / dd;

    // Tangency thresholds. sigma_1 keeps the tangent of the flat surface at
    // a2, evaluated back at the top strike, under half the top price;
    // sigma_2 keeps the slope at a1 under the chord towards the first
    // strike. Both guarantee room for convex interpolation.
    let sigma1 = sup_where(1e-6, 10.0, 1e-12, |sig| {
        bs_call(s0, a2, maturity, sig) - bs_call_dk(s0, a2, maturity, sig) * (a2 - kd)
            <= 0.5 * cd
    });
    let sigma2 = sup_where(1e-6, 10.0, 1e-12, |sig| {
        bs_call_dk(s0, a1, maturity, sig)
            <= (c2 - bs_call(s0, a1, maturity, sig)) / (k2 - a1)
    });
    let sigma0 = sigma1.min(sigma2);

    // Anchor set: flat-surface values (with slopes) at a1 and a2, the
    // flat-surface value at k2/2, and the strip prices at the strikes.
    let mut xs = vec![a1];
    let mut ys = vec![bs_call(s0, a1, maturity, sigma0)];
    // The k2/2 anchor degenerates onto a1 for deep in-the-money strips.
    if k2 / 2.0 > a1 + 1e-3 * s0 {
        xs.push(k2 / 2.0);
        ys.push(bs_call(s0, k2 / 2.0, maturity, sigma0));
    }
    xs.extend_from_slice(&strip.strikes);
    ys.extend_from_slice(&strip.prices);
    xs.push(a2);
    ys.push(bs_call(s0, a2, maturity, sigma0));
    let interpolant = ConvexSpline::fit(
        &xs,
        &ys,
        bs_call_dk(s0, a1, maturity, sigma0),
        bs_call_dk(s0, a2, maturity, sigma0),
    )?;

    let mut surface = LocalVolSurface {
        s0,
        sigma0,
        maturity,
        a1,
        a2,
        interpolant,
        bounds: [sigma0, sigma0],
        degenerate_curvature: 1e-3 * bs_call_dkk(s0, s0, maturity, sigma0),
        grid_strikes: Vec::new(),
        grid_times: Vec::new(),
        values: Vec::new(),
    };

    // Sample the patch (plus a margin) and record the observed extrema.
    let nk = 81;
    let nt = 41;
    let k_lo = (0.8 * a1).max(1e-3 * s0);
    let k_hi = 1.2 * a2;
    surface.grid_strikes = (0..nk)
        .map(|i| k_lo + (k_hi - k_lo) * i as f64 / (nk - 1) as f64)
        .collect();
    surface.grid_times = (0..nt)
        .map(|j| maturity * (j + 1) as f64 / nt as f64)
        .collect();
    let (mut lo, mut hi) = (sigma0, sigma0);
    let mut values = Vec::with_capacity(nk);
    for &k in &surface.grid_strikes {
        let mut row = Vec::with_capacity(nt);
        for &t in &surface.grid_times {
            let v = surface.sigma_raw(k, t);
            lo = lo.min(v);
            hi = hi.max(v);
            row.push(v);
        }
        values.push(row);
    }
    surface.values = values;
    surface.bounds = [lo, hi];
    if !(lo > 0.0) || !hi.is_finite() {
        return Err(Error::Calibration(format!(
            "calibrated volatility escaped (0, inf): bounds [{lo}, {hi}]"
        )));
    }
    Ok(surface)
}

/// Monte Carlo prices of the strip's strikes under a calibrated surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepriceReport {
    pub strikes: Vec<f64>,
    pub prices: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub targets: Vec<f64>,
    pub rel_errors: Vec<f64>,
    pub max_rel_error: f64,
}

/// Reprices every strike of the strip by simulating the local-volatility
/// model implied by the surface.
pub fn reprice(
    surface: &LocalVolSurface,
    strip: &CallStrip,
    n_paths: usize,
    grid: &Arc<TimeGrid>,
    seed: u64,
) -> Result<RepriceReport> {
    strip.validate()?;
    let model = crate::models::ModelSpec::LocalVol {
        s0: strip.s0,
        sigma: crate::models::LocalVolFn::Surface {
            surface: surface.clone(),
        },
        bounds: surface.bounds,
    };
    let terminal: Vec<f64> = crate::exec::map_indexed(n_paths, |i| {
        let ps = crate::models::simulate(&model, grid, path_seed(seed, i as u64))
            .expect("local vol simulation");
        *ps.component("S").unwrap().last().unwrap()
    });
    let nf = n_paths as f64;
    let mut prices = Vec::new();
    let mut ses = Vec::new();
    let mut rels = Vec::new();
    for (k, target) in strip.strikes.iter().zip(&strip.prices) {
        let payoffs: Vec<f64> = terminal.iter().map(|s| (s - k).max(0.0)).collect();
        let mean = payoffs.iter().sum::<f64>() / nf;
        let var = payoffs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        prices.push(mean);
        ses.push((var / nf).sqrt());
        rels.push((mean - target).abs() / target.max(1e-300));
    }
    let max_rel_error = rels.iter().cloned().fold(0.0, f64::max);
    Ok(RepriceReport {
        strikes: strip.strikes.clone(),
        prices,
        standard_errors: ses,
        targets: strip.prices.clone(),
        rel_errors: rels,
        max_rel_error,
    })
}

/// Result of the empirical full-support diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportReport {
    /// Empirical probability of landing in the open interval.
    pub probability: f64,
    pub standard_error: f64,
    /// Discrete call-slope estimates at the interval endpoints.
    pub slope_a: f64,
    pub slope_b: f64,
    /// Whether the slopes differ by more than three standard errors.
    pub strict: bool,
}

/// Estimates `P(S_t in (a, b))` and the discrete call slopes at the
/// endpoints from one simulated sample.
pub fn support_diagnostic(
    model: &crate::models::ModelSpec,
    t: f64,
    interval: (f64, f64),
    n_paths: usize,
    seed: u64,
) -> Result<SupportReport> {
    let (a, b) = interval;
    if !(0.0 < a && a < b) {
        return Err(Error::InvalidParameter(
            "support diagnostic needs 0 < a < b".into(),
        ));
    }
    let grid = Arc::new(TimeGrid::uniform(t, 512)?);
    let terminal: Vec<f64> = crate::exec::map_indexed(n_paths, |i| {
        let ps = crate::models::simulate(model, &grid, path_seed(seed, i as u64))
            .expect("simulation in support diagnostic");
        *ps.component("S").unwrap().last().unwrap()
    });
    let nf = n_paths as f64;
    let inside = terminal.iter().filter(|&&s| s > a && s < b).count() as f64 / nf;
    let ge_a = terminal.iter().filter(|&&s| s >= a).count() as f64 / nf;
    let ge_b = terminal.iter().filter(|&&s| s >= b).count() as f64 / nf;
    let band = ge_a - ge_b;
    let se = (band.max(inside) * (1.0 - band.max(inside)).max(0.0) / nf).sqrt();
    Ok(SupportReport {
        probability: inside,
        standard_error: se,
        slope_a: -ge_a,
        slope_b: -ge_b,
        strict: band > 3.0 * se && band > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bs_convex_degenerate_variance_returns_payoff() {
        let g = ConvexPayoff::Call { strike: 1.3 };
        assert_eq!(bs_convex(&g, 2.0, 0.0).unwrap(), 0.7);
    }

    #[test]
    fn bs_convex_atm_call_reference_value() {
        let g = ConvexPayoff::Call { strike: 1.0 };
        let price = bs_convex(&g, 1.0, 0.04).unwrap();
        assert_relative_eq!(price, 0.07965567455405798, epsilon = 1e-12);
        assert!((price - 0.0797).abs() < 1e-4);
    }

    #[test]
    fn bs_convex_square_is_lognormal_second_moment() {
        for &q in &[0.01, 0.04, 0.3] {
            let p = bs_convex(&ConvexPayoff::Square, 1.0, q).unwrap();
            assert_relative_eq!(p, q.exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn bs_convex_quadrature_agrees_with_closed_form() {
        // A smoothed call with tiny width integrates to nearly the kinked one.
        let g = ConvexPayoff::SmoothedCall {
            strike: 1.0,
            width: 1e-5,
        };
        let p = bs_convex(&g, 1.0, 0.04).unwrap();
        assert!((p - 0.07965567455405798).abs() < 1e-4);
    }

    #[test]
    fn bs_convex_increasing_in_variance() {
        let g = ConvexPayoff::NegTwoLog;
        let mut prev = bs_convex(&g, 1.3, 0.0).unwrap();
        for i in 1..100 {
            let v = i as f64 * 0.01;
            let p = bs_convex(&g, 1.3, v).unwrap();
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn bs_call_derivatives_match_finite_differences() {
        let (s0, t, sigma) = (1.0, 1.0, 0.25);
        for &k in &[0.7, 1.0, 1.4] {
            let h = 1e-5;
            let fd_k = (bs_call(s0, k + h, t, sigma) - bs_call(s0, k - h, t, sigma)) / (2.0 * h);
            let fd_kk = (bs_call(s0, k + h, t, sigma) - 2.0 * bs_call(s0, k, t, sigma)
                + bs_call(s0, k - h, t, sigma))
                / (h * h);
            let fd_t = (bs_call(s0, k, t + h, sigma) - bs_call(s0, k, t - h, sigma)) / (2.0 * h);
            assert_relative_eq!(fd_k, bs_call_dk(s0, k, t, sigma), epsilon = 1e-7);
            assert_relative_eq!(fd_kk, bs_call_dkk(s0, k, t, sigma), max_relative = 1e-4);
            assert_relative_eq!(fd_t, bs_call_dt(s0, k, t, sigma), max_relative = 1e-6);
        }
    }

    fn bs_strip() -> CallStrip {
        CallStrip::black_scholes(1.0, &[0.9, 1.0, 1.1], 0.2, 1.0)
    }

    #[test]
    fn black_scholes_strip_passes() {
        let report = check_strip(&bs_strip()).unwrap();
        assert!(report.pass, "violations: {:?}", report.violated);
    }

    #[test]
    fn chord_average_middle_price_fails_delta_min() {
        // Binary-exact strikes and prices keep the constructed degeneracy an
        // exact zero through the slope arithmetic.
        let strip = CallStrip {
            s0: 1.0,
            strikes: vec![0.75, 1.0, 1.25],
            prices: vec![0.28125, 0.5 * (0.28125 + 0.03125), 0.03125],
        };
        let report = check_strip(&strip).unwrap();
        assert!(!report.pass);
        assert_eq!(report.violated, vec!["delta_min".to_string()]);
        assert_eq!(report.delta_min, 0.0);
    }

    #[test]
    fn zero_top_price_fails_v_min() {
        let mut strip = bs_strip();
        strip.prices[2] = 0.0;
        let report = check_strip(&strip).unwrap();
        assert!(!report.pass);
        assert!(report.violated.contains(&"v_min".to_string()));
    }

    #[test]
    fn single_strike_is_an_argument_error() {
        let strip = CallStrip {
            s0: 1.0,
            strikes: vec![1.0],
            prices: vec![0.08],
        };
        assert!(check_strip(&strip).is_err());
    }

    #[test]
    fn verdict_invariant_under_scaling() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
        let base = bs_strip();
        let verdict = check_strip(&base).unwrap().pass;
        for _ in 0..20 {
            let lambda: f64 = rng.gen_range(0.1..10.0);
            let scaled = CallStrip {
                s0: base.s0 * lambda,
                strikes: base.strikes.iter().map(|k| k * lambda).collect(),
                prices: base.prices.iter().map(|p| p * lambda).collect(),
            };
            assert_eq!(check_strip(&scaled).unwrap().pass, verdict);
        }
    }

    #[test]
    fn convex_spline_interpolates_and_stays_convex() {
        // Quadratic data with matching end slopes reproduces convexity.
        let xs: Vec<f64> = (0..6).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let spl = ConvexSpline::fit(&xs, &ys, 0.0, 5.0).unwrap();
        for &x in &xs {
            assert_relative_eq!(spl.value(x), x * x, epsilon = 1e-12);
        }
        let mut prev_slope = f64::NEG_INFINITY;
        for i in 0..=100 {
            let x = 2.5 * i as f64 / 100.0;
            let s = spl.deriv(x);
            assert!(s >= prev_slope - 1e-12, "slope decreased at {x}");
            assert!(spl.second(x) >= -1e-12);
            prev_slope = s;
        }
    }

    #[test]
    fn calibration_outside_patch_is_exactly_sigma0() {
        let strip = CallStrip::black_scholes(1.0, &[0.9, 1.0, 1.1], 0.25, 1.0);
        let surf = dupire_calibrate(&strip, 1.0).unwrap();
        assert_eq!(surf.sigma_raw(surf.a1 * 0.9, 1.0), surf.sigma0);
        assert_eq!(surf.sigma_raw(1.0, 0.3), surf.sigma0);
        assert_eq!(surf.sigma_raw(surf.a2 * 1.1, 0.9), surf.sigma0);
    }

    #[test]
    fn deep_itm_pinch_still_calibrates() {
        // A sigma = 0.05 strip pushes the slope d2 towards the degenerate
        // -1 corner (a1 well below the strikes); calibration must still
        // return bounded vols.
        let strip = CallStrip::black_scholes(1.0, &[0.75, 0.85, 0.95], 0.05, 1.0);
        assert!(check_strip(&strip).unwrap().pass);
        assert!(check_strip(&strip).unwrap().d2 < -0.99);
        let surf = dupire_calibrate(&strip, 1.0).unwrap();
        assert!(surf.bounds[0] > 0.0);
        assert!(surf.bounds[1].is_finite());
    }
}

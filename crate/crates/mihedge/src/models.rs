//! Market model simulation.
//!
//! Generates discretised sample paths of continuous-semimartingale models:
//! geometric Brownian motion (exact in log space), local volatility and
//! Heston (log-space Euler, full truncation of negative variance), the
//! vanishing bubble component, joint asset+claim markets with a convex
//! traded claim, and spliced models whose covariance is replaced by a
//! constant matrix after a trigger.
//!
//! Determinism: a simulation is a pure function of `(model, grid, seed)`.
//! Callers running many paths derive one seed per path index, so parallel
//! generation is order-independent.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::FunctionalSpec;
use crate::grid::{Path, PathSet, TimeGrid};
use crate::market::{bs_convex, LocalVolSurface};
use crate::numerics::path_seed;
use crate::payoff::ConvexPayoff;
use crate::stopping::StoppingSet;

/// Relative clamp on the bubble's log time change near the horizon.
const BUBBLE_CLAMP: f64 = 1e-9;

/// Price bisection tolerance and volatility domain for the implied-level
/// search in convex claim markets.
const SIGMA0_PRICE_TOL: f64 = 1e-10;
const SIGMA0_DOMAIN: (f64, f64) = (1e-6, 10.0);

/// Parametric local-volatility functions `(price, time) -> vol`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalVolFn {
    Flat { sigma: f64 },
    /// Log-moneyness smile: `base + skew ln(s/ref) + curvature ln^2(s/ref)`.
    Smile {
        base: f64,
        skew: f64,
        curvature: f64,
        ref_price: f64,
    },
    /// Calibrated surface from the call-strip pipeline.
    Surface { surface: LocalVolSurface },
}

impl LocalVolFn {
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        match self {
            LocalVolFn::Flat { sigma } => *sigma,
            LocalVolFn::Smile {
                base,
                skew,
                curvature,
                ref_price,
            } => {
                let m = (s / ref_price).ln();
                base + skew * m + curvature * m * m
            }
            LocalVolFn::Surface { surface } => surface.sigma(s, t),
        }
    }
}

/// Tagged union of market models.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Gbm {
        s0: f64,
        sigma: f64,
    },
    LocalVol {
        s0: f64,
        sigma: LocalVolFn,
        bounds: [f64; 2],
    },
    Heston {
        s0: f64,
        v0: f64,
        kappa: f64,
        theta: f64,
        xi: f64,
        rho: f64,
    },
    /// Strict local martingale vanishing at the horizon; component "Y".
    Bubble {
        horizon: f64,
    },
    /// GBM-like dynamics absorbed (volatility zero) at and below a floor.
    /// Deliberately lacks full support; used as the negative control for
    /// support diagnostics.
    Absorbed {
        s0: f64,
        floor: f64,
        sigma: f64,
    },
    /// Joint market of an asset "S" and a traded convex claim "C" maturing
    /// at `maturity` with payoff `g(S_T)` and initial price `c0 > g(s0)`.
    ConvexClaimMarket {
        base: Box<ModelSpec>,
        payoff: ConvexPayoff,
        c0: f64,
        maturity: f64,
    },
    /// Base dynamics until `trigger` fires on the tracked state, then
    /// arithmetic Brownian motion with covariance `cov` until `exit` fires
    /// or the midpoint `(T + tau)/2` is reached.
    Spliced {
        base: Box<ModelSpec>,
        trigger: StoppingSet,
        /// Functional whose state drives `trigger` and `exit`; identity on
        /// the traded vector when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trigger_functional: Option<FunctionalSpec>,
        cov: Vec<Vec<f64>>,
        exit: StoppingSet,
    },
}

impl ModelSpec {
    pub fn s0(&self) -> f64 {
        match self {
            ModelSpec::Gbm { s0, .. }
            | ModelSpec::LocalVol { s0, .. }
            | ModelSpec::Heston { s0, .. }
            | ModelSpec::Absorbed { s0, .. } => *s0,
            ModelSpec::Bubble { .. } => 1.0,
            ModelSpec::ConvexClaimMarket { base, .. } | ModelSpec::Spliced { base, .. } => {
                base.s0()
            }
        }
    }

    /// Labels of the traded components this model produces, in order.
    pub fn traded_labels(&self) -> Vec<String> {
        match self {
            ModelSpec::Bubble { .. } => vec!["Y".to_string()],
            ModelSpec::ConvexClaimMarket { .. } => vec!["S".to_string(), "C".to_string()],
            ModelSpec::Spliced { base, .. } => base.traded_labels(),
            _ => vec!["S".to_string()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Gbm { s0, sigma } => {
                if !(*s0 > 0.0) {
                    return Err(Error::InvalidParameter("GBM needs s0 > 0".into()));
                }
                if !(*sigma >= 0.0) {
                    return Err(Error::InvalidParameter("GBM needs sigma >= 0".into()));
                }
            }
            ModelSpec::LocalVol { s0, bounds, .. } => {
                if !(*s0 > 0.0) {
                    return Err(Error::InvalidParameter("local vol needs s0 > 0".into()));
                }
                if !(bounds[0] > 0.0 && bounds[0] <= bounds[1] && bounds[1].is_finite()) {
                    return Err(Error::InvalidParameter(
                        "local vol bounds must satisfy 0 < l <= u < inf".into(),
                    ));
                }
            }
            ModelSpec::Heston {
                s0,
                v0,
                kappa,
                theta,
                xi,
                rho,
            } => {
                if !(*s0 > 0.0) {
                    return Err(Error::InvalidParameter("Heston needs s0 > 0".into()));
                }
                if !(*v0 >= 0.0 && *theta >= 0.0 && *xi >= 0.0 && *kappa >= 0.0) {
                    return Err(Error::InvalidParameter(
                        "Heston variance parameters must be nonnegative".into(),
                    ));
                }
                if !(-1.0..=1.0).contains(rho) {
                    return Err(Error::InvalidParameter("Heston needs |rho| <= 1".into()));
                }
            }
            ModelSpec::Bubble { horizon } => {
                if !(*horizon > 0.0) {
                    return Err(Error::InvalidParameter("bubble needs horizon > 0".into()));
                }
            }
            ModelSpec::Absorbed { s0, floor, sigma } => {
                if !(*s0 > 0.0 && *floor > 0.0 && *sigma >= 0.0) {
                    return Err(Error::InvalidParameter(
                        "absorbed model needs s0 > 0, floor > 0, sigma >= 0".into(),
                    ));
                }
            }
            ModelSpec::ConvexClaimMarket {
                base,
                payoff,
                c0,
                maturity,
            } => {
                base.validate()?;
                payoff.validate()?;
                if !(*maturity > 0.0) {
                    return Err(Error::InvalidParameter("claim maturity must be > 0".into()));
                }
                let g0 = payoff.value(base.s0());
                if !(*c0 > g0) {
                    return Err(Error::InfeasibleMarket(format!(
                        "a model exists iff c0 > g(s0); got c0 = {c0}, g(s0) = {g0}"
                    )));
                }
            }
            ModelSpec::Spliced { base, cov, .. } => {
                base.validate()?;
                let d = base.traded_labels().len();
                if cov.len() != d || cov.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidParameter(format!(
                        "splice covariance must be {d}x{d} to match the base model"
                    )));
                }
                splice_transport(cov)?;
            }
        }
        Ok(())
    }
}

/// Cholesky factor of the splice covariance; fails on non-SPD input.
fn splice_transport(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = cov.len();
    let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    if (&m - m.transpose()).amax() > 1e-12 {
        return Err(Error::InvalidParameter(
            "splice covariance must be symmetric".into(),
        ));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("splice covariance is not positive definite".into()))?;
    Ok(chol.l())
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn draw(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Simulates one labelled path set; a deterministic function of
/// `(model, grid, seed)`.
pub fn simulate(model: &ModelSpec, grid: &Arc<TimeGrid>, seed: u64) -> Result<PathSet> {
    model.validate()?;
    let mut rng = rng_for(seed);
    let times = grid.times();
    let n = grid.len();
    let mut out = PathSet::new(grid.clone(), seed);

    match model {
        ModelSpec::Gbm { s0, sigma } => {
            let mut s = vec![0.0; n];
            s[0] = *s0;
            for k in 1..n {
                let dt = times[k] - times[k - 1];
                let z: f64 = draw(&mut rng);
                s[k] = s[k - 1] * (sigma * dt.sqrt() * z - 0.5 * sigma * sigma * dt).exp();
            }
            out.insert("S", s)?;
        }
        ModelSpec::LocalVol { s0, sigma, bounds } => {
            let mut s = vec![0.0; n];
            s[0] = *s0;
            for k in 1..n {
                let dt = times[k] - times[k - 1];
                let z: f64 = draw(&mut rng);
                let vol = sigma.eval(s[k - 1], times[k - 1]).clamp(bounds[0], bounds[1]);
                s[k] = s[k - 1] * (vol * dt.sqrt() * z - 0.5 * vol * vol * dt).exp();
            }
            out.insert("S", s)?;
        }
        ModelSpec::Heston {
            s0,
            v0,
            kappa,
            theta,
            xi,
            rho,
        } => {
            let mut s = vec![0.0; n];
            let mut v = vec![0.0; n];
            s[0] = *s0;
            v[0] = *v0;
            let rho_perp = (1.0 - rho * rho).sqrt();
            for k in 1..n {
                let dt = times[k] - times[k - 1];
                let zv: f64 = draw(&mut rng);
                let zp: f64 = draw(&mut rng);
                let zs = rho * zv + rho_perp * zp;
                let vp = v[k - 1].max(0.0);
                v[k] = v[k - 1] + kappa * (theta - vp) * dt + xi * vp.sqrt() * dt.sqrt() * zv;
                s[k] = s[k - 1] * (vp.sqrt() * dt.sqrt() * zs - 0.5 * vp * dt).exp();
            }
            out.insert("S", s)?;
            out.insert("v", v)?;
        }
        ModelSpec::Bubble { horizon } => {
            let y = bubble_path(*horizon, grid, seed)?;
            out.insert("Y", y.values)?;
        }
        ModelSpec::Absorbed { s0, floor, sigma } => {
            let mut s = vec![0.0; n];
            s[0] = *s0;
            for k in 1..n {
                let dt = times[k] - times[k - 1];
                let z: f64 = draw(&mut rng);
                if s[k - 1] <= *floor {
                    s[k] = s[k - 1];
                } else {
                    s[k] = s[k - 1] * (sigma * dt.sqrt() * z - 0.5 * sigma * sigma * dt).exp();
                }
            }
            out.insert("S", s)?;
        }
        ModelSpec::ConvexClaimMarket { .. } => {
            return market_paths_convex(model, grid, seed);
        }
        ModelSpec::Spliced { .. } => {
            return splice(model, grid, seed);
        }
    }

    check_positive_prices(&out)?;
    Ok(out)
}

fn check_positive_prices(paths: &PathSet) -> Result<()> {
    for (label, values) in &paths.components {
        if label == "S" || label.starts_with('C') {
            if values.iter().any(|&v| !(v > 0.0) && label == "S") {
                return Err(Error::InvalidParameter(format!(
                    "asset component {label} lost strict positivity"
                )));
            }
        }
    }
    Ok(())
}

/// The vanishing local martingale `Y_t = sqrt((T-t)/T) exp(W_{log(T/(T-t))})`
/// with `Y_0 = 1` and `Y_T = 0` exactly at the final grid point.
pub fn bubble_path(horizon: f64, grid: &Arc<TimeGrid>, seed: u64) -> Result<Path> {
    if grid.t_max() > horizon * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "bubble grid extends to {} beyond the horizon {horizon}",
            grid.t_max()
        )));
    }
    let mut rng = rng_for(seed);
    let times = grid.times();
    let n = grid.len();
    let t_clamp = horizon * (1.0 - BUBBLE_CLAMP);
    let mut y = vec![0.0; n];
    y[0] = 1.0;
    let mut w = 0.0;
    let mut u_prev = 0.0;
    for k in 1..n {
        let t = times[k].min(t_clamp);
        let u = (horizon / (horizon - t)).ln();
        let du = (u - u_prev).max(0.0);
        let z: f64 = draw(&mut rng);
        w += du.sqrt() * z;
        u_prev = u;
        y[k] = ((horizon - t) / horizon).sqrt() * w.exp();
        if times[k] >= horizon {
            y[k] = 0.0;
        }
    }
    if (grid.t_max() - horizon).abs() <= horizon * 1e-12 {
        y[n - 1] = 0.0;
    }
    Path::new(grid.clone(), y)
}

/// Expected remaining integrated variance of a CIR process:
/// `E int_t^T v_s ds = (v - theta)(1 - e^{-kappa tau})/kappa + theta tau`.
pub fn cir_integrated_variance(v: f64, kappa: f64, theta: f64, tau: f64) -> f64 {
    if kappa.abs() < 1e-14 {
        return v * tau;
    }
    (v - theta) * (1.0 - (-kappa * tau).exp()) / kappa + theta * tau
}

/// Builds a joint (asset, claim) market with `C_T = g(S_T)` exactly.
///
/// For a GBM base the construction follows the bubble decomposition: the
/// asset volatility is the level `sigma_0` implied by the initial claim
/// price, the fair part is the Black-Scholes claim value, and the excess
/// `c0 - F_BS` rides the vanishing local martingale `Y`. For a Heston base
/// (log-contract payoff only) the fair part is the conditional expectation
/// under CIR integrated variance.
pub fn market_paths_convex(model: &ModelSpec, grid: &Arc<TimeGrid>, seed: u64) -> Result<PathSet> {
    let ModelSpec::ConvexClaimMarket {
        base,
        payoff,
        c0,
        maturity,
    } = model
    else {
        return Err(Error::InvalidParameter(
            "market_paths_convex requires a ConvexClaimMarket spec".into(),
        ));
    };
    model.validate()?;
    if (grid.t_max() - maturity).abs() > 1e-12 * maturity.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "grid must end at the claim maturity {maturity}; got {}",
            grid.t_max()
        )));
    }
    let times = grid.times();
    let n = grid.len();
    let tt = *maturity;

    let bubble = bubble_path(tt, grid, path_seed(seed, 0x42_55_42))?;

    match base.as_ref() {
        ModelSpec::Gbm { s0, .. } => {
            let v0 = c0 - payoff.value(*s0);
            // sigma_0 = sup { sigma : F_BS(s0, T; sigma) - g(s0) < V_0 }.
            let price_gap = |sig: f64| bs_convex(payoff, *s0, sig * sig * tt).unwrap_or(f64::INFINITY) - payoff.value(*s0);
            let (mut lo, mut hi) = SIGMA0_DOMAIN;
            if price_gap(hi) < v0 {
                lo = hi;
            } else {
                while price_gap(hi) - price_gap(lo) > SIGMA0_PRICE_TOL {
                    let mid = 0.5 * (lo + hi);
                    if price_gap(mid) < v0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            }
            let sigma0 = lo;
            let asset = ModelSpec::Gbm {
                s0: *s0,
                sigma: sigma0,
            };
            let base_paths = simulate(&asset, grid, seed)?;
            let s = base_paths.component("S")?.to_vec();
            let fair0 = bs_convex(payoff, *s0, sigma0 * sigma0 * tt)?;
            let weight = (c0 - fair0).max(0.0);
            let mut c = vec![0.0; n];
            for k in 0..n {
                let tau = (tt - times[k]).max(0.0);
                c[k] = bs_convex(payoff, s[k], sigma0 * sigma0 * tau)? + weight * bubble.values[k];
            }
            c[n - 1] = payoff.value(s[n - 1]);
            let mut out = PathSet::new(grid.clone(), seed);
            out.insert("S", s)?;
            out.insert("C", c)?;
            check_positive_prices(&out)?;
            Ok(out)
        }
        ModelSpec::Heston {
            v0: hv0,
            kappa,
            theta,
            ..
        } => {
            if *payoff != ConvexPayoff::NegTwoLog {
                return Err(Error::InvalidParameter(
                    "Heston convex claim markets support only the log contract".into(),
                ));
            }
            let base_paths = simulate(base, grid, seed)?;
            let s = base_paths.component("S")?.to_vec();
            let v = base_paths.component("v")?.to_vec();
            let fair0 = payoff.value(base.s0()) + cir_integrated_variance(*hv0, *kappa, *theta, tt);
            let weight = c0 - fair0;
            if weight < -1e-12 {
                return Err(Error::InfeasibleMarket(format!(
                    "c0 = {c0} is below the fair claim value {fair0}; the bubble weight would be negative"
                )));
            }
            let weight = weight.max(0.0);
            let mut c = vec![0.0; n];
            for k in 0..n {
                let tau = (tt - times[k]).max(0.0);
                c[k] = payoff.value(s[k])
                    + cir_integrated_variance(v[k].max(0.0), *kappa, *theta, tau)
                    + weight * bubble.values[k];
            }
            c[n - 1] = payoff.value(s[n - 1]);
            let mut out = PathSet::new(grid.clone(), seed);
            out.insert("S", s)?;
            out.insert("C", c)?;
            out.insert("v", v)?;
            check_positive_prices(&out)?;
            Ok(out)
        }
        _ => Err(Error::InvalidParameter(
            "convex claim markets support GBM and Heston bases".into(),
        )),
    }
}

/// Runs the base model until `trigger` fires on the tracked state, then
/// replaces the traded components by correlated arithmetic Brownian motion
/// with covariance `cov`. The replacement window closes at the first of the
/// exit set firing or the midpoint `(T + tau)/2`; the window is recorded on
/// the returned path set. If the trigger never fires the base paths are
/// returned tagged "unspliced".
pub fn splice(model: &ModelSpec, grid: &Arc<TimeGrid>, seed: u64) -> Result<PathSet> {
    let ModelSpec::Spliced {
        base,
        trigger,
        trigger_functional,
        cov,
        exit,
    } = model
    else {
        return Err(Error::InvalidParameter("splice requires a Spliced spec".into()));
    };
    model.validate()?;
    let transport = splice_transport(cov)?;
    let labels = base.traded_labels();
    let d = labels.len();

    let base_paths = simulate(base, grid, seed)?;
    let spec = match trigger_functional {
        Some(f) => f.clone(),
        None => FunctionalSpec {
            assets: labels.clone(),
            components: labels
                .iter()
                .map(|l| crate::functionals::Component::Asset { label: l.clone() })
                .collect(),
        },
    };

    let tracked = spec.track(&base_paths)?;
    let trigger_idx = tracked
        .states
        .iter()
        .position(|x| trigger.contains(x));

    let Some(k_trig) = trigger_idx else {
        let mut out = base_paths;
        out.tags.push("unspliced".to_string());
        return Ok(out);
    };

    let times = grid.times();
    let n = grid.len();
    let tau = times[k_trig];
    let t_mid = 0.5 * (grid.t_max() + tau);

    // Replacement dynamics from the trigger onwards, driven by a dedicated
    // stream so the pre-trigger segment matches the base simulation exactly.
    let mut rng = rng_for(path_seed(seed, 0x53_50_4C));
    let mut comps: Vec<Vec<f64>> = labels
        .iter()
        .map(|l| base_paths.component(l).map(|v| v.to_vec()))
        .collect::<Result<_>>()?;
    for k in (k_trig + 1)..n {
        let dt = times[k] - times[k - 1];
        let z: Vec<f64> = (0..d).map(|_| draw(&mut rng)).collect();
        for (i, comp) in comps.iter_mut().enumerate() {
            let mut incr = 0.0;
            for j in 0..d {
                incr += transport[(i, j)] * z[j];
            }
            comp[k] = comp[k - 1] + incr * dt.sqrt();
        }
    }

    let mut out = PathSet::new(grid.clone(), seed);
    for (label, values) in labels.iter().zip(comps) {
        out.insert(label, values)?;
    }
    // Non-traded diagnostics are frozen at their trigger value.
    for (label, values) in &base_paths.components {
        if !labels.contains(label) {
            let mut frozen = values.clone();
            for k in (k_trig + 1)..n {
                frozen[k] = frozen[k_trig];
            }
            out.insert(label, frozen)?;
        }
    }

    // Close the window at the exit set or the horizon midpoint rule.
    let tracked_new = spec.track(&out)?;
    let mut k_end = n - 1;
    for k in (k_trig + 1)..n {
        if times[k] >= t_mid || exit.contains(&tracked_new.states[k]) {
            k_end = k;
            break;
        }
    }
    out.splice_window = Some((k_trig, k_end));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::map_indexed;
    use crate::functionals::{quadratic_covariation, WeightFn};
    use crate::stopping::Approach;
    use approx::assert_relative_eq;

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn zero_vol_gbm_is_constant_one() {
        let grid = Arc::new(TimeGrid::uniform(1.0, 64).unwrap());
        let model = ModelSpec::Gbm { s0: 1.0, sigma: 0.0 };
        let ps = simulate(&model, &grid, 7).unwrap();
        assert!(ps.component("S").unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn simulation_is_deterministic() {
        let grid = Arc::new(TimeGrid::uniform(1.0, 256).unwrap());
        let model = ModelSpec::Heston {
            s0: 1.0,
            v0: 0.04,
            kappa: 1.5,
            theta: 0.04,
            xi: 0.3,
            rho: -0.7,
        };
        let a = simulate(&model, &grid, 99).unwrap();
        let b = simulate(&model, &grid, 99).unwrap();
        assert_eq!(a.component("S").unwrap(), b.component("S").unwrap());
        assert_eq!(a.component("v").unwrap(), b.component("v").unwrap());
    }

    #[test]
    fn gbm_terminal_mean_matches_martingale_property() {
        let grid = Arc::new(TimeGrid::uniform(1.0, 64).unwrap());
        let model = ModelSpec::Gbm { s0: 1.0, sigma: 0.2 };
        let terminal: Vec<f64> = map_indexed(20_000, |i| {
            let ps = simulate(&model, &grid, path_seed(11, i as u64)).unwrap();
            *ps.component("S").unwrap().last().unwrap()
        });
        let (mean, se) = mean_se(&terminal);
        assert!(
            (mean - 1.0).abs() <= 3.0 * se,
            "mean {mean} deviates more than 3 SE {se}"
        );
    }

    #[test]
    fn heston_integrated_variance_matches_cir_mean() {
        // With v0 = theta the expected realized integrated variance is
        // theta * T exactly.
        let grid = Arc::new(TimeGrid::uniform(1.0, 512).unwrap());
        let model = ModelSpec::Heston {
            s0: 1.0,
            v0: 0.04,
            kappa: 1.5,
            theta: 0.04,
            xi: 0.3,
            rho: -0.7,
        };
        let dt = 1.0 / 512.0;
        let realized: Vec<f64> = map_indexed(20_000, |i| {
            let ps = simulate(&model, &grid, path_seed(23, i as u64)).unwrap();
            let v = ps.component("v").unwrap();
            v[..v.len() - 1].iter().map(|x| x.max(0.0) * dt).sum()
        });
        let (mean, se) = mean_se(&realized);
        assert!(
            (mean - 0.04).abs() <= 3.0 * se.max(1e-5),
            "mean {mean} vs 0.04, se {se}"
        );
    }

    #[test]
    fn bubble_endpoints_and_midpoint_mean() {
        let grid = Arc::new(TimeGrid::uniform(1.0, 128).unwrap());
        let y0: Vec<f64> = map_indexed(20_000, |i| {
            let p = bubble_path(1.0, &grid, path_seed(3, i as u64)).unwrap();
            assert_eq!(p.values[0], 1.0);
            assert_eq!(*p.values.last().unwrap(), 0.0);
            p.values[64]
        });
        let (mean, se) = mean_se(&y0);
        assert!(
            (mean - 1.0).abs() <= 3.0 * se,
            "bubble midpoint mean {mean}, se {se}"
        );
    }

    #[test]
    fn bubble_rejects_grid_beyond_horizon() {
        let grid = Arc::new(TimeGrid::uniform(2.0, 16).unwrap());
        assert!(bubble_path(1.0, &grid, 1).is_err());
    }

    #[test]
    fn convex_market_atm_call_sigma0_and_terminal_payoff() {
        let grid = Arc::new(TimeGrid::uniform(1.0, 256).unwrap());
        let model = ModelSpec::ConvexClaimMarket {
            base: Box::new(ModelSpec::Gbm { s0: 1.0, sigma: 0.2 }),
            payoff: ConvexPayoff::Call { strike: 1.0 },
            c0: 0.0797,
            maturity: 1.0,
        };
        let ps = market_paths_convex(&model, &grid, 5).unwrap();
        let s = ps.component("S").unwrap();
        let c = ps.component("C").unwrap();
        // sigma_0 from bisection is close to 0.2 (c0 chosen as the BS price),
        // so the realized log-variance over [0, 1] is close to 0.04.
        let sp = Path::new(grid.clone(), s.iter().map(|x| x.ln()).collect()).unwrap();
        let qv = quadratic_covariation(&sp, &sp, None).unwrap();
        assert!(
            (qv.values.last().unwrap() - 0.04).abs() < 0.004,
            "implied level should be near 0.2"
        );
        // Terminal payoff enforced exactly.
        let gap = (c.last().unwrap() - (s.last().unwrap() - 1.0).max(0.0)).abs();
        assert!(gap < 1e-12);
        // Time value positive at interior points.
        for k in 1..grid.len() - 1 {
            assert!(c[k] - (s[k] - 1.0).max(0.0) > 0.0, "V_t <= 0 at index {k}");
        }
    }

    #[test]
    fn convex_market_requires_positive_time_value() {
        let model = ModelSpec::ConvexClaimMarket {
            base: Box::new(ModelSpec::Gbm { s0: 1.0, sigma: 0.2 }),
            payoff: ConvexPayoff::Call { strike: 1.0 },
            c0: 0.0,
            maturity: 1.0,
        };
        let grid = Arc::new(TimeGrid::uniform(1.0, 16).unwrap());
        match market_paths_convex(&model, &grid, 1) {
            Err(Error::InfeasibleMarket(msg)) => assert!(msg.contains("c0 > g(s0)")),
            other => panic!("expected infeasible market, got {other:?}"),
        }
    }

    #[test]
    fn immediate_splice_is_brownian_from_zero() {
        let grid = Arc::new(TimeGrid::uniform(2.0, 1 << 14).unwrap());
        let model = ModelSpec::Spliced {
            base: Box::new(ModelSpec::Gbm { s0: 1.0, sigma: 0.2 }),
            trigger: StoppingSet::Immediate,
            trigger_functional: None,
            cov: vec![vec![4.0]],
            exit: StoppingSet::Never,
        };
        let ps = splice(&model, &grid, 17).unwrap();
        let (k0, k1) = ps.splice_window.unwrap();
        assert_eq!(k0, 0);
        // Window closes at (T + 0)/2 = 1.
        assert_relative_eq!(grid.times()[k1], 1.0, epsilon = 1e-9);
        // Realized QV over the spliced segment concentrates at cov * length.
        let s = ps.component("S").unwrap();
        let qv: f64 = (k0 + 1..=k1)
            .map(|k| (s[k] - s[k - 1]).powi(2))
            .sum();
        assert!((qv - 4.0).abs() < 0.08, "qv {qv} not within 2% of 4.0");
    }

    #[test]
    fn unreachable_trigger_flags_unspliced() {
        let grid = Arc::new(TimeGrid::uniform(0.01, 64).unwrap());
        let model = ModelSpec::Spliced {
            base: Box::new(ModelSpec::Gbm { s0: 1.0, sigma: 0.2 }),
            trigger: StoppingSet::LevelSet {
                index: 0,
                value: 2.0,
                approach: Approach::FromBelow,
            },
            trigger_functional: None,
            cov: vec![vec![1.0]],
            exit: StoppingSet::Never,
        };
        for i in 0..50 {
            let ps = splice(&model, &grid, path_seed(1234, i)).unwrap();
            assert!(ps.has_tag("unspliced"), "barrier at 2.0 hit over T=0.01");
        }
    }

    #[test]
    fn splice_preserves_pre_trigger_segment() {
        let grid = Arc::new(TimeGrid::uniform(1.0, 512).unwrap());
        let base = ModelSpec::Gbm { s0: 1.0, sigma: 0.2 };
        let spec = FunctionalSpec::price_and_clock("S", WeightFn::one());
        let model = ModelSpec::Spliced {
            base: Box::new(base.clone()),
            trigger: StoppingSet::LevelSet {
                index: 1,
                value: 0.01,
                approach: Approach::FromBelow,
            },
            trigger_functional: Some(spec),
            cov: vec![vec![1.0]],
            exit: StoppingSet::Never,
        };
        let spliced = splice(&model, &grid, 71).unwrap();
        let plain = simulate(&base, &grid, 71).unwrap();
        let (k0, _) = spliced.splice_window.unwrap();
        assert!(k0 > 0);
        let a = spliced.component("S").unwrap();
        let b = plain.component("S").unwrap();
        assert_eq!(&a[..=k0], &b[..=k0]);
        assert_ne!(a[k0 + 1], b[k0 + 1]);
    }

    #[test]
    fn bad_covariance_is_rejected() {
        let model = ModelSpec::Spliced {
            base: Box::new(ModelSpec::Gbm { s0: 1.0, sigma: 0.2 }),
            trigger: StoppingSet::Immediate,
            trigger_functional: None,
            cov: vec![vec![-1.0]],
            exit: StoppingSet::Never,
        };
        assert!(model.validate().is_err());
    }

    #[test]
    fn model_spec_round_trips_through_json_with_kind_tag() {
        let model = ModelSpec::ConvexClaimMarket {
            base: Box::new(ModelSpec::Heston {
                s0: 1.0,
                v0: 0.04,
                kappa: 1.5,
                theta: 0.04,
                xi: 0.3,
                rho: -0.7,
            }),
            payoff: ConvexPayoff::NegTwoLog,
            c0: 0.05,
            maturity: 1.0,
        };
        let text = serde_json::to_string(&model).unwrap();
        assert!(text.contains("\"kind\":\"convex_claim_market\""));
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, model);
    }
}

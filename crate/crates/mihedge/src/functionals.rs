//! Non-anticipative functionals of the traded vector.
//!
//! A [`FunctionalSpec`] declares the components of the tracked state
//! `X = (X^1, ..., X^n)` together with the traded labels forming the asset
//! vector `A`. Components built from stochastic integrals expose their
//! coefficient triple `(alpha, beta, gamma)` so differential operators can
//! be assembled; running extrema are tracked exactly from the discrete path
//! and are flagged as outside that class.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Path, PathSet, TimeGrid};
use crate::payoff::ConvexPayoff;
use crate::stopping::StoppingSet;

/// State-dependent scalar weight, evaluated on the full state vector.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFn {
    Const { value: f64 },
    /// `w(x) = x_of ^ exponent`; `exponent = -2` gives the realised
    /// log-variance clock when `of` is the asset component.
    Power { of: usize, exponent: f64 },
}

impl WeightFn {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let w = match self {
            WeightFn::Const { value } => *value,
            WeightFn::Power { of, exponent } => x[*of].powf(*exponent),
        };
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Domain(format!(
                "weight function must be strictly positive and finite, got {w} at {x:?}"
            )));
        }
        Ok(w)
    }

    pub fn one() -> Self {
        WeightFn::Const { value: 1.0 }
    }
}

/// Reference to the series a quadratic-variation component accrues against:
/// either a traded label or a previously declared component.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Label(String),
    Component(usize),
}

/// Which running extremum a squared drawdown measures against.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    Max,
    Min,
}

/// One component of the tracked functional.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Component {
    /// The traded component itself.
    Asset { label: String },
    /// Calendar time.
    Time,
    /// `int x_of dt`, left-endpoint accumulation.
    TimeIntegral { of: usize },
    /// `int w(X) d<target>`, realised (weighted) quadratic variation.
    WeightedQv { of: Target, weight: WeightFn },
    /// `int w(X) d<a, b>`, realised weighted cross variation.
    CrossVar { a: Target, b: Target, weight: WeightFn },
    /// Time value of a traded claim: `C - g(S)`.
    TimeValue {
        asset: String,
        claim: String,
        payoff: ConvexPayoff,
    },
    /// Exact discrete running maximum of component `of`. Not in the
    /// integral class.
    RunningMax { of: usize },
    /// Exact discrete running minimum of component `of`. Not in the
    /// integral class.
    RunningMin { of: usize },
    /// Squared drawdown `(M - S)^2` (or drawup `(S - m)^2`) of the asset
    /// component `of`; the extremum is tracked internally and exactly.
    DrawdownSq { of: usize, extremum: Extremum },
}

/// Declaration of the functional `X` and of the traded vector it reads.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FunctionalSpec {
    /// Traded labels forming `A`, in order; `d = assets.len()`.
    pub assets: Vec<String>,
    /// State components, in order; `n = components.len()`.
    pub components: Vec<Component>,
}

impl FunctionalSpec {
    pub fn new(assets: Vec<&str>, components: Vec<Component>) -> Result<Self> {
        let spec = Self {
            assets: assets.into_iter().map(String::from).collect(),
            components,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn asset_dim(&self) -> usize {
        self.assets.len()
    }

    fn asset_pos(&self, label: &str) -> Result<usize> {
        self.assets
            .iter()
            .position(|a| a == label)
            .ok_or_else(|| Error::Spec(format!("label {label:?} is not a declared asset")))
    }

    /// Index of the state component carrying a given asset label.
    fn state_index_of_asset(&self, label: &str) -> Result<usize> {
        self.components
            .iter()
            .position(|c| matches!(c, Component::Asset { label: l } if l == label))
            .ok_or_else(|| {
                Error::Spec(format!(
                    "no Asset component tracks label {label:?}; it is needed as a coefficient input"
                ))
            })
    }

    pub fn validate(&self) -> Result<()> {
        if self.assets.is_empty() {
            return Err(Error::Spec("at least one traded asset label required".into()));
        }
        for (i, comp) in self.components.iter().enumerate() {
            let check_ref = |j: usize, what: &str| -> Result<()> {
                if j >= i {
                    return Err(Error::Spec(format!(
                        "component {i} references {what} {j}, which must be declared earlier"
                    )));
                }
                Ok(())
            };
            match comp {
                Component::Asset { label } => {
                    self.asset_pos(label)?;
                }
                // Accumulates from the previous grid row, so forward
                // references are fine.
                Component::TimeIntegral { of } => {
                    if *of == i || *of >= self.components.len() {
                        return Err(Error::Spec(format!(
                            "component {i}: TimeIntegral target {of} out of range"
                        )));
                    }
                }
                Component::RunningMax { of } | Component::RunningMin { of } => {
                    check_ref(*of, "component")?
                }
                Component::DrawdownSq { of, .. } => {
                    check_ref(*of, "component")?;
                    if matches!(
                        self.components[*of],
                        Component::RunningMax { .. } | Component::RunningMin { .. }
                    ) {
                        return Err(Error::Spec(
                            "DrawdownSq must reference an integral-class component".into(),
                        ));
                    }
                }
                Component::WeightedQv { of, .. } => {
                    if let Target::Component(j) = of {
                        check_ref(*j, "component")?;
                    }
                }
                Component::CrossVar { a, b, .. } => {
                    for t in [a, b] {
                        if let Target::Component(j) = t {
                            check_ref(*j, "component")?;
                        }
                    }
                }
                Component::TimeValue { asset, claim, .. } => {
                    self.asset_pos(asset)?;
                    self.asset_pos(claim)?;
                }
                Component::Time => {}
            }
        }
        Ok(())
    }

    /// Whether every component belongs to the integral class (exposes a
    /// coefficient triple).
    pub fn is_integral_class(&self) -> bool {
        !self
            .components
            .iter()
            .any(|c| matches!(c, Component::RunningMax { .. } | Component::RunningMin { .. }))
    }

    /// Coefficient vector of the series behind a QV/cross-variation target.
    fn target_alpha(&self, target: &Target, x: &[f64]) -> Result<DVector<f64>> {
        match target {
            Target::Label(l) => {
                let mut a = DVector::zeros(self.asset_dim());
                a[self.asset_pos(l)?] = 1.0;
                Ok(a)
            }
            Target::Component(j) => self.alpha(*j, x),
        }
    }

    /// `alpha^i(x)`: loading of component `i` on `dA`.
    pub fn alpha(&self, i: usize, x: &[f64]) -> Result<DVector<f64>> {
        let d = self.asset_dim();
        match &self.components[i] {
            Component::Asset { label } => {
                let mut a = DVector::zeros(d);
                a[self.asset_pos(label)?] = 1.0;
                Ok(a)
            }
            Component::Time
            | Component::TimeIntegral { .. }
            | Component::WeightedQv { .. }
            | Component::CrossVar { .. } => Ok(DVector::zeros(d)),
            Component::TimeValue { asset, claim, payoff } => {
                let s = x[self.state_index_of_asset(asset)?];
                let mut a = DVector::zeros(d);
                a[self.asset_pos(asset)?] = -payoff.deriv(s);
                a[self.asset_pos(claim)?] = 1.0;
                Ok(a)
            }
            Component::DrawdownSq { of, extremum } => {
                let sign = match extremum {
                    Extremum::Max => -1.0,
                    Extremum::Min => 1.0,
                };
                let root = x[i].max(0.0).sqrt();
                Ok(self.target_alpha(&Target::Component(*of), x)? * (2.0 * sign * root))
            }
            Component::RunningMax { .. } | Component::RunningMin { .. } => Err(Error::Spec(
                "running extrema are not integral-class components".into(),
            )),
        }
    }

    /// `beta^i(x)`: loading of component `i` on `d<A>`.
    pub fn beta(&self, i: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.asset_dim();
        match &self.components[i] {
            Component::Asset { .. } | Component::Time | Component::TimeIntegral { .. } => {
                Ok(DMatrix::zeros(d, d))
            }
            Component::WeightedQv { of, weight } => {
                let a = self.target_alpha(of, x)?;
                let w = weight.eval(x)?;
                Ok(&a * a.transpose() * w)
            }
            Component::CrossVar { a, b, weight } => {
                let va = self.target_alpha(a, x)?;
                let vb = self.target_alpha(b, x)?;
                let w = weight.eval(x)?;
                Ok((&va * vb.transpose() + &vb * va.transpose()) * (0.5 * w))
            }
            Component::TimeValue { asset, payoff, .. } => {
                let s_idx = self.state_index_of_asset(asset)?;
                let j = self.asset_pos(asset)?;
                let mut b = DMatrix::zeros(d, d);
                b[(j, j)] = -0.5 * payoff.second(x[s_idx]);
                Ok(b)
            }
            Component::DrawdownSq { of, .. } => {
                let a = self.target_alpha(&Target::Component(*of), x)?;
                Ok(&a * a.transpose())
            }
            Component::RunningMax { .. } | Component::RunningMin { .. } => Err(Error::Spec(
                "running extrema are not integral-class components".into(),
            )),
        }
    }

    /// `gamma^i(x)`: loading of component `i` on `dt`.
    pub fn gamma(&self, i: usize, x: &[f64]) -> Result<f64> {
        match &self.components[i] {
            Component::Time => Ok(1.0),
            Component::TimeIntegral { of } => Ok(x[*of]),
            Component::RunningMax { .. } | Component::RunningMin { .. } => Err(Error::Spec(
                "running extrema are not integral-class components".into(),
            )),
            _ => Ok(0.0),
        }
    }

    /// Whether component `i` is nondecreasing along every path (usable as a
    /// monotone clock for hit refinement).
    fn is_monotone_clock(&self, i: usize) -> bool {
        matches!(
            self.components[i],
            Component::Time | Component::WeightedQv { .. }
        )
    }

    /// Evaluates the functional along a path set.
    pub fn track(&self, paths: &PathSet) -> Result<TrackedPath> {
        self.validate()?;
        let n = self.dim();
        let k_max = paths.grid.len();
        let times = paths.grid.times();

        // Resolve label series up front.
        let mut asset_series: Vec<&[f64]> = Vec::with_capacity(self.assets.len());
        for label in &self.assets {
            asset_series.push(paths.component(label)?);
        }
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(k_max);
        // Internal running extrema for DrawdownSq components.
        let mut dd_extrema: Vec<f64> = vec![0.0; n];

        for k in 0..k_max {
            let mut x = vec![0.0; n];
            for i in 0..n {
                x[i] = match &self.components[i] {
                    Component::Asset { label } => paths.component(label)?[k],
                    Component::Time => times[k],
                    Component::TimeValue { asset, claim, payoff } => {
                        let s = paths.component(asset)?[k];
                        let c = paths.component(claim)?[k];
                        c - payoff.value(s)
                    }
                    Component::TimeIntegral { of } => {
                        if k == 0 {
                            0.0
                        } else {
                            let dt = times[k] - times[k - 1];
                            states[k - 1][i] + states[k - 1][*of] * dt
                        }
                    }
                    Component::WeightedQv { of, weight } => {
                        if k == 0 {
                            0.0
                        } else {
                            let d = match of {
                                Target::Label(l) => {
                                    let s = paths.component(l)?;
                                    s[k] - s[k - 1]
                                }
                                Target::Component(j) => x[*j] - states[k - 1][*j],
                            };
                            let w = weight.eval(&states[k - 1])?;
                            states[k - 1][i] + w * d * d
                        }
                    }
                    Component::CrossVar { a, b, weight } => {
                        if k == 0 {
                            0.0
                        } else {
                            let da = match a {
                                Target::Label(l) => {
                                    let s = paths.component(l)?;
                                    s[k] - s[k - 1]
                                }
                                Target::Component(j) => x[*j] - states[k - 1][*j],
                            };
                            let db = match b {
                                Target::Label(l) => {
                                    let s = paths.component(l)?;
                                    s[k] - s[k - 1]
                                }
                                Target::Component(j) => x[*j] - states[k - 1][*j],
                            };
                            let w = weight.eval(&states[k - 1])?;
                            states[k - 1][i] + w * da * db
                        }
                    }
                    Component::RunningMax { of } => {
                        if k == 0 {
                            x[*of]
                        } else {
                            states[k - 1][i].max(x[*of])
                        }
                    }
                    Component::RunningMin { of } => {
                        if k == 0 {
                            x[*of]
                        } else {
                            states[k - 1][i].min(x[*of])
                        }
                    }
                    Component::DrawdownSq { of, extremum } => {
                        let v = x[*of];
                        if k == 0 {
                            dd_extrema[i] = v;
                        } else {
                            dd_extrema[i] = match extremum {
                                Extremum::Max => dd_extrema[i].max(v),
                                Extremum::Min => dd_extrema[i].min(v),
                            };
                        }
                        let gap = dd_extrema[i] - v;
                        gap * gap
                    }
                };
            }
            states.push(x);
        }

        Ok(TrackedPath {
            grid: paths.grid.clone(),
            states,
            monotone: (0..n).map(|i| self.is_monotone_clock(i)).collect(),
            hit: None,
        })
    }

    /// Initial state from a path set (state at the first grid point).
    pub fn initial_state(&self, paths: &PathSet) -> Result<Vec<f64>> {
        Ok(self.track_first(paths)?)
    }

    fn track_first(&self, paths: &PathSet) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[i] = match &self.components[i] {
                Component::Asset { label } => paths.component(label)?[0],
                Component::Time => 0.0,
                Component::TimeValue { asset, claim, payoff } => {
                    paths.component(claim)?[0] - payoff.value(paths.component(asset)?[0])
                }
                Component::RunningMax { of } | Component::RunningMin { of } => x[*of],
                _ => 0.0,
            };
        }
        Ok(x)
    }
}

/// First hit of a stopping set along a tracked path.
#[derive(Debug, Clone, PartialEq)]
pub struct HitResult {
    /// First grid index at which the predicate holds.
    pub index: usize,
    /// State at the hit, snapped onto the set when the driving component is
    /// a monotone clock.
    pub state: Vec<f64>,
    /// Hit time; refined between grid points for monotone clocks.
    pub time: f64,
}

/// The functional evaluated along one path.
#[derive(Debug, Clone)]
pub struct TrackedPath {
    pub grid: Arc<TimeGrid>,
    /// One state vector per grid point.
    pub states: Vec<Vec<f64>>,
    /// Per-component monotone-clock flags (enables hit refinement).
    pub monotone: Vec<bool>,
    pub hit: Option<HitResult>,
}

impl TrackedPath {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k]
    }

    pub fn component_series(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[i]).collect()
    }
}

/// Realised (weighted) quadratic covariation of two paths on a shared grid:
/// value at `t_k` is the sum over `j < k` of `w(a_j) (a_{j+1}-a_j)(b_{j+1}-b_j)`,
/// with the weight at the left endpoint.
pub fn quadratic_covariation(
    a: &Path,
    b: &Path,
    weight: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<Path> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(
            "quadratic_covariation requires a shared grid".into(),
        ));
    }
    let n = a.values.len();
    let mut out = vec![0.0; n];
    for k in 1..n {
        let da = a.values[k] - a.values[k - 1];
        let db = b.values[k] - b.values[k - 1];
        let w = weight.map_or(1.0, |w| w(a.values[k - 1]));
        out[k] = out[k - 1] + w * da * db;
    }
    Path::new(a.grid.clone(), out)
}

/// First hitting of `B` by the tracked state. Returns `None` when the path
/// never enters the set. For single level sets driven by a monotone clock the
/// hit state is refined by linear interpolation between the bracketing grid
/// points and snapped exactly onto the level.
pub fn hitting(tracked: &TrackedPath, set: &StoppingSet) -> Option<HitResult> {
    let times = tracked.grid.times();
    for (k, x) in tracked.states.iter().enumerate() {
        if set.contains(x) {
            if k == 0 {
                return Some(HitResult {
                    index: 0,
                    state: x.clone(),
                    time: times[0],
                });
            }
            if let Some((idx, value)) = set.level_coordinate() {
                if tracked.monotone[idx] {
                    let prev = &tracked.states[k - 1];
                    let denom = x[idx] - prev[idx];
                    let theta = if denom.abs() > 0.0 {
                        ((value - prev[idx]) / denom).clamp(0.0, 1.0)
                    } else {
                        1.0
                    };
                    let mut state: Vec<f64> = prev
                        .iter()
                        .zip(x.iter())
                        .map(|(p, c)| p + theta * (c - p))
                        .collect();
                    state[idx] = value;
                    let time = times[k - 1] + theta * (times[k] - times[k - 1]);
                    return Some(HitResult {
                        index: k,
                        state,
                        time,
                    });
                }
            }
            return Some(HitResult {
                index: k,
                state: x.clone(),
                time: times[k],
            });
        }
    }
    None
}

/// Convenience constructors for the specs used throughout.
impl FunctionalSpec {
    /// `X = (S, Q^w)` on a single asset: price plus weighted realised variance.
    pub fn price_and_clock(label: &str, weight: WeightFn) -> Self {
        FunctionalSpec {
            assets: vec![label.to_string()],
            components: vec![
                Component::Asset {
                    label: label.to_string(),
                },
                Component::WeightedQv {
                    of: Target::Label(label.to_string()),
                    weight,
                },
            ],
        }
    }

    /// `X = (t, V, S)` for fixed-maturity time-dependent claims.
    pub fn time_average_price(label: &str) -> Self {
        FunctionalSpec {
            assets: vec![label.to_string()],
            components: vec![
                Component::Time,
                Component::TimeIntegral { of: 2 },
                Component::Asset {
                    label: label.to_string(),
                },
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn path_from(values: Vec<f64>, t_max: f64) -> Path {
        let grid = Arc::new(TimeGrid::uniform(t_max, values.len() - 1).unwrap());
        Path::new(grid, values).unwrap()
    }

    fn single_asset_paths(values: Vec<f64>, t_max: f64) -> PathSet {
        let grid = Arc::new(TimeGrid::uniform(t_max, values.len() - 1).unwrap());
        let mut ps = PathSet::new(grid, 0);
        ps.insert("S", values).unwrap();
        ps
    }

    #[test]
    fn qv_of_constant_path_is_zero() {
        let a = path_from(vec![2.0; 8], 1.0);
        let q = quadratic_covariation(&a, &a, None).unwrap();
        assert!(q.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn qv_forced_arithmetic() {
        // values (1, 2, 4): squared increments 1 and 4, cumulative (0, 1, 5).
        let a = path_from(vec![1.0, 2.0, 4.0], 1.0);
        let q = quadratic_covariation(&a, &a, None).unwrap();
        assert_eq!(q.values, vec![0.0, 1.0, 5.0]);
    }

    #[test]
    fn qv_rejects_mismatched_grids() {
        let a = path_from(vec![1.0, 2.0], 1.0);
        let b = path_from(vec![1.0, 2.0, 3.0], 1.0);
        assert!(quadratic_covariation(&a, &b, None).is_err());
    }

    #[test]
    fn track_constant_path() {
        // spec = (S, <S>) on a constant path: X = (s0, 0) at all times.
        let ps = single_asset_paths(vec![1.5; 16], 1.0);
        let spec = FunctionalSpec::price_and_clock("S", WeightFn::one());
        let tracked = spec.track(&ps).unwrap();
        for x in &tracked.states {
            assert_eq!(x[0], 1.5);
            assert_eq!(x[1], 0.0);
        }
    }

    #[test]
    fn track_extrema_and_drawdown_forced_values() {
        // values (1, 2, 1.5): M = (1, 2, 2), D^M = (0, 0, 0.25).
        let ps = single_asset_paths(vec![1.0, 2.0, 1.5], 1.0);
        let spec = FunctionalSpec {
            assets: vec!["S".into()],
            components: vec![
                Component::Asset { label: "S".into() },
                Component::RunningMax { of: 0 },
                Component::DrawdownSq {
                    of: 0,
                    extremum: Extremum::Max,
                },
            ],
        };
        let tracked = spec.track(&ps).unwrap();
        assert_eq!(tracked.component_series(1), vec![1.0, 2.0, 2.0]);
        assert_eq!(tracked.component_series(2), vec![0.0, 0.0, 0.25]);
    }

    #[test]
    fn missing_label_is_spec_error() {
        let ps = single_asset_paths(vec![1.0, 1.1], 1.0);
        let spec = FunctionalSpec::price_and_clock("Z", WeightFn::one());
        assert!(spec.track(&ps).is_err());
    }

    #[test]
    fn hitting_on_boundary_at_start() {
        let ps = single_asset_paths(vec![1.0, 1.2, 1.4], 1.0);
        let spec = FunctionalSpec::price_and_clock("S", WeightFn::one());
        let tracked = spec.track(&ps).unwrap();
        let b = StoppingSet::LevelSet {
            index: 0,
            value: 1.0,
            approach: crate::stopping::Approach::FromAbove,
        };
        let hit = hitting(&tracked, &b).unwrap();
        assert_eq!(hit.index, 0);
    }

    #[test]
    fn hitting_never_on_constant_path_in_corridor() {
        let ps = single_asset_paths(vec![1.0; 8], 1.0);
        let spec = FunctionalSpec::price_and_clock("S", WeightFn::one());
        let tracked = spec.track(&ps).unwrap();
        let b = StoppingSet::CorridorExit {
            index: 0,
            lower: 0.5,
            upper: 2.0,
        };
        assert!(hitting(&tracked, &b).is_none());
    }

    #[test]
    fn clock_hit_is_snapped_onto_level() {
        // Clock increments of 0.03 per step cross q = 0.04 between indices.
        let ps = single_asset_paths(vec![1.0, 1.0 + 0.03f64.sqrt(), 1.0, 1.0 - 0.03f64.sqrt()], 1.0);
        let spec = FunctionalSpec::price_and_clock("S", WeightFn::one());
        let tracked = spec.track(&ps).unwrap();
        let b = StoppingSet::LevelSet {
            index: 1,
            value: 0.04,
            approach: crate::stopping::Approach::FromBelow,
        };
        let hit = hitting(&tracked, &b).unwrap();
        assert_eq!(hit.index, 2);
        assert_relative_eq!(hit.state[1], 0.04);
        assert!(hit.time > tracked.grid.times()[1] && hit.time < tracked.grid.times()[2]);
    }

    #[test]
    fn time_value_coefficients_match_differential() {
        // X = (S, V) with claim payoff g: alpha^V = (-g'(S), 1),
        // beta^V has only the SS entry -g''(S)/2.
        let g = ConvexPayoff::NegTwoLog;
        let spec = FunctionalSpec {
            assets: vec!["S".into(), "C".into()],
            components: vec![
                Component::Asset { label: "S".into() },
                Component::TimeValue {
                    asset: "S".into(),
                    claim: "C".into(),
                    payoff: g,
                },
            ],
        };
        let x = vec![2.0, 0.3];
        let a = spec.alpha(1, &x).unwrap();
        assert_relative_eq!(a[0], 1.0);
        assert_relative_eq!(a[1], 1.0);
        let b = spec.beta(1, &x).unwrap();
        assert_relative_eq!(b[(0, 0)], -0.25);
        assert_eq!(b[(1, 1)], 0.0);
    }

    #[test]
    fn drawdown_coefficients() {
        let spec = FunctionalSpec {
            assets: vec!["S".into()],
            components: vec![
                Component::Asset { label: "S".into() },
                Component::DrawdownSq {
                    of: 0,
                    extremum: Extremum::Max,
                },
            ],
        };
        let x = vec![1.0, 0.09];
        let a = spec.alpha(1, &x).unwrap();
        assert_relative_eq!(a[0], -0.6); // -2 sqrt(0.09)
        let b = spec.beta(1, &x).unwrap();
        assert_relative_eq!(b[(0, 0)], 1.0);
    }

    #[test]
    fn extrema_are_not_integral_class() {
        let spec = FunctionalSpec {
            assets: vec!["S".into()],
            components: vec![
                Component::Asset { label: "S".into() },
                Component::RunningMax { of: 0 },
            ],
        };
        assert!(!spec.is_integral_class());
        assert!(spec.alpha(1, &[1.0, 1.0]).is_err());
    }
}

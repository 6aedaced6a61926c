//! Pathwise execution of the self-financing replication strategies and the
//! drift-detection experiment that probes the converse direction of the
//! characterisation: a candidate function outside the solution set produces
//! a detectable drift under a spliced model that amplifies the offending
//! operator component.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::field::ScalarField;
use crate::functionals::{hitting, FunctionalSpec};
use crate::grid::{PathSet, TimeGrid};
use crate::models::{simulate, ModelSpec};
use crate::numerics::path_seed;
use crate::pde::operators;
use crate::stopping::StoppingSet;

/// Hedge ratio `L^alpha F(x)`: the holdings of the replicating strategy.
pub fn hedge_ratio(
    field: &dyn ScalarField,
    spec: &FunctionalSpec,
    x: &[f64],
) -> Result<DVector<f64>> {
    let grad = field.gradient(x)?;
    let mut h = DVector::zeros(spec.asset_dim());
    for k in 0..spec.dim() {
        h += spec.alpha(k, x)? * grad[k];
    }
    Ok(h)
}

/// Projects a state onto the stopping set it has just entered, so the
/// boundary payoff `f = F|_B` is evaluated exactly on the set.
fn project_onto(set: &StoppingSet, state: &[f64]) -> Vec<f64> {
    let mut x = state.to_vec();
    match set {
        StoppingSet::LevelSet { index, value, .. } => {
            x[*index] = *value;
        }
        StoppingSet::CorridorExit {
            index,
            lower,
            upper,
        } => {
            let mid = 0.5 * (lower + upper);
            x[*index] = if x[*index] <= mid { *lower } else { *upper };
        }
        StoppingSet::Union { members } => {
            for m in members {
                if m.contains(state) {
                    return project_onto(m, state);
                }
            }
        }
        StoppingSet::Immediate | StoppingSet::Never => {}
    }
    x
}

/// Per-path outcome of a replication backtest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRow {
    pub path: usize,
    pub terminal_wealth: f64,
    pub target: f64,
    /// `terminal_wealth - target`.
    pub error: f64,
    /// Largest pathwise gap between the wealth and `F(X^B_t)`.
    pub max_gap: f64,
    pub hit_index: Option<usize>,
    pub hit_time: Option<f64>,
}

/// Aggregates over the stopped paths of a backtest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregates {
    pub n_paths: usize,
    pub n_stopped: usize,
    pub fraction_unstopped: f64,
    pub mean_error: f64,
    pub mean_abs_error: f64,
    pub rms_error: f64,
    /// Standard error of `mean_error`.
    pub se_mean: f64,
    pub max_abs_error: f64,
    pub mean_max_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HedgeReport {
    pub rows: Vec<PathRow>,
    pub aggregates: Aggregates,
}

impl HedgeReport {
    fn from_rows(rows: Vec<PathRow>) -> Self {
        let aggregates = Self::compute_aggregates(&rows);
        HedgeReport { rows, aggregates }
    }

    /// Recomputes the aggregates from the per-path rows; unstopped paths are
    /// excluded from error statistics and reported as a fraction.
    pub fn compute_aggregates(rows: &[PathRow]) -> Aggregates {
        let n_paths = rows.len();
        let stopped: Vec<&PathRow> = rows.iter().filter(|r| r.hit_index.is_some()).collect();
        let n_stopped = stopped.len();
        let nf = n_stopped as f64;
        let (mut mean, mut mean_abs, mut rms, mut max_abs, mut mean_gap) =
            (0.0, 0.0, 0.0, 0.0f64, 0.0);
        for r in &stopped {
            mean += r.error;
            mean_abs += r.error.abs();
            rms += r.error * r.error;
            max_abs = max_abs.max(r.error.abs());
            mean_gap += r.max_gap;
        }
        if n_stopped > 0 {
            mean /= nf;
            mean_abs /= nf;
            rms = (rms / nf).sqrt();
            mean_gap /= nf;
        }
        let var = if n_stopped > 1 {
            stopped
                .iter()
                .map(|r| (r.error - mean).powi(2))
                .sum::<f64>()
                / (nf - 1.0)
        } else {
            0.0
        };
        Aggregates {
            n_paths,
            n_stopped,
            fraction_unstopped: if n_paths > 0 {
                (n_paths - n_stopped) as f64 / n_paths as f64
            } else {
                0.0
            },
            mean_error: mean,
            mean_abs_error: mean_abs,
            rms_error: rms,
            se_mean: (var / nf.max(1.0)).sqrt(),
            max_abs_error: max_abs,
            mean_max_gap: mean_gap,
        }
    }

    /// t-statistic of the mean terminal error against zero.
    pub fn t_stat(&self) -> f64 {
        t_statistic(self.aggregates.mean_error, self.aggregates.se_mean)
    }
}

fn t_statistic(mean: f64, se: f64) -> f64 {
    if se > 1e-300 {
        mean / se
    } else if mean.abs() < 1e-12 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    }
}

fn asset_increments<'a>(spec: &FunctionalSpec, paths: &'a PathSet) -> Result<Vec<&'a [f64]>> {
    spec.assets
        .iter()
        .map(|label| paths.component(label))
        .collect()
}

/// Runs the stopped replication strategy along one path set: start with
/// capital `F(X_0)`, hold `L^alpha F(X_t)` units of the traded vector until
/// the stopping set fires, then freeze.
pub fn backtest_path(
    field: &dyn ScalarField,
    spec: &FunctionalSpec,
    set: &StoppingSet,
    paths: &PathSet,
    path_index: usize,
) -> Result<PathRow> {
    let tracked = spec.track(paths)?;
    let hit = hitting(&tracked, set);
    let series = asset_increments(spec, paths)?;
    let n = paths.grid.len();
    let stop_index = hit.as_ref().map_or(n - 1, |h| h.index);

    let mut wealth = field.value(tracked.state(0)).map_err(|e| decorate(e, tracked.state(0)))?;
    let mut max_gap = 0.0f64;
    for k in 0..stop_index {
        let x = tracked.state(k);
        let value = field.value(x).map_err(|e| decorate(e, x))?;
        max_gap = max_gap.max((wealth - value).abs());
        let h = hedge_ratio(field, spec, x).map_err(|e| decorate(e, x))?;
        for (j, s) in series.iter().enumerate() {
            wealth += h[j] * (s[k + 1] - s[k]);
        }
    }
    let (target, hit_index, hit_time) = match &hit {
        Some(h) => {
            // Payoff evaluated at the grid state projected onto the set:
            // the discrete wealth lives on grid states, so exact discrete
            // replication (e.g. the identity payoff) is preserved.
            let on_set = project_onto(set, tracked.state(h.index));
            let payoff = field.value(&on_set).map_err(|e| decorate(e, &on_set))?;
            max_gap = max_gap.max((wealth - payoff).abs());
            (payoff, Some(h.index), Some(h.time))
        }
        None => (f64::NAN, None, None),
    };
    Ok(PathRow {
        path: path_index,
        terminal_wealth: wealth,
        target,
        error: wealth - target,
        max_gap,
        hit_index,
        hit_time,
    })
}

fn decorate(e: Error, x: &[f64]) -> Error {
    match e {
        Error::Domain(msg) => Error::Domain(format!("{msg} (worst point {x:?})")),
        other => other,
    }
}

/// Monte Carlo backtest: simulates `n_paths` paths of `model` and runs the
/// stopped strategy on each. Paths are independent across indices and the
/// report is reduced in path-index order.
pub fn backtest(
    field: &dyn ScalarField,
    spec: &FunctionalSpec,
    set: &StoppingSet,
    model: &ModelSpec,
    grid: &Arc<TimeGrid>,
    n_paths: usize,
    seed: u64,
) -> Result<HedgeReport> {
    let rows: Vec<Result<PathRow>> = map_indexed(n_paths, |i| {
        let paths = simulate(model, grid, path_seed(seed, i as u64))?;
        backtest_path(field, spec, set, &paths, i)
    });
    Ok(HedgeReport::from_rows(
        rows.into_iter().collect::<Result<Vec<_>>>()?,
    ))
}

/// Runs the time-weighted strategy replicating the cash flow
/// `int_0^T F(X^B_t) dt`: initial capital `T F(X_0)` and holdings
/// `(T - t) L^alpha F(X_t)` until the stopping set fires.
///
/// The target integral uses the right-endpoint Riemann sum, which is the
/// exact discrete counterpart of the summation-by-parts identity behind the
/// strategy (left-endpoint holdings).
pub fn cashflow_backtest_path(
    field: &dyn ScalarField,
    spec: &FunctionalSpec,
    set: &StoppingSet,
    horizon: f64,
    paths: &PathSet,
    path_index: usize,
) -> Result<PathRow> {
    let grid_t = paths.grid.t_max();
    if (grid_t - horizon).abs() > 1e-12 * horizon.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "cash-flow horizon {horizon} must equal the grid end {grid_t}"
        )));
    }
    let tracked = spec.track(paths)?;
    let hit = hitting(&tracked, set);
    let series = asset_increments(spec, paths)?;
    let times = paths.grid.times();
    let n = paths.grid.len();
    let stop_index = hit.as_ref().map_or(n - 1, |h| h.index);
    let stopped_value = match &hit {
        Some(h) => {
            let on_set = project_onto(set, tracked.state(h.index));
            Some(field.value(&on_set).map_err(|e| decorate(e, &on_set))?)
        }
        None => None,
    };

    let x0 = tracked.state(0);
    let mut wealth = horizon * field.value(x0).map_err(|e| decorate(e, x0))?;
    let mut target = 0.0;
    for k in 0..n - 1 {
        if k < stop_index {
            let x = tracked.state(k);
            let h = hedge_ratio(field, spec, x).map_err(|e| decorate(e, x))?;
            let weight = horizon - times[k];
            for (j, s) in series.iter().enumerate() {
                wealth += weight * h[j] * (s[k + 1] - s[k]);
            }
        }
        // Right-endpoint value of the stopped functional.
        let value = if k + 1 >= stop_index {
            match stopped_value {
                Some(v) => v,
                None => {
                    let x = tracked.state(k + 1);
                    field.value(x).map_err(|e| decorate(e, x))?
                }
            }
        } else {
            let x = tracked.state(k + 1);
            field.value(x).map_err(|e| decorate(e, x))?
        };
        target += value * (times[k + 1] - times[k]);
    }
    Ok(PathRow {
        path: path_index,
        terminal_wealth: wealth,
        target,
        error: wealth - target,
        max_gap: f64::NAN,
        hit_index: hit.as_ref().map(|h| h.index).or(Some(n - 1)),
        hit_time: hit.as_ref().map(|h| h.time),
    })
}

/// Monte Carlo cash-flow backtest across simulated paths.
pub fn cashflow_backtest(
    field: &dyn ScalarField,
    spec: &FunctionalSpec,
    set: &StoppingSet,
    horizon: f64,
    model: &ModelSpec,
    grid: &Arc<TimeGrid>,
    n_paths: usize,
    seed: u64,
) -> Result<HedgeReport> {
    let rows: Vec<Result<PathRow>> = map_indexed(n_paths, |i| {
        let paths = simulate(model, grid, path_seed(seed, i as u64))?;
        cashflow_backtest_path(field, spec, set, horizon, &paths, i)
    });
    Ok(HedgeReport::from_rows(
        rows.into_iter().collect::<Result<Vec<_>>>()?,
    ))
}

/// One model's entry in a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub report: Option<Aggregates>,
    pub error: Option<String>,
}

/// Cross-model replication summary: one backtest per model plus a table of
/// mean terminal errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// `(model, mean terminal error)` for the models that ran.
    pub fn error_table(&self) -> Vec<(String, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.report.as_ref().map(|a| (r.model.clone(), a.mean_error)))
            .collect()
    }
}

/// Runs the same claim across a list of models; failures are recorded per
/// model and do not stop the sweep.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    field: &dyn ScalarField,
    spec: &FunctionalSpec,
    set: &StoppingSet,
    models: &[(String, ModelSpec)],
    grid: &Arc<TimeGrid>,
    n_paths: usize,
    seed: u64,
) -> SweepReport {
    let rows = models
        .iter()
        .map(|(name, model)| match backtest(field, spec, set, model, grid, n_paths, seed) {
            Ok(report) => SweepRow {
                model: name.clone(),
                report: Some(report.aggregates),
                error: None,
            },
            Err(e) => SweepRow {
                model: name.clone(),
                report: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    SweepReport { rows }
}

/// Result of the drift-detection experiment over spliced windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftReport {
    /// Mean increment of `Y = F(X^B) - int L^alpha F dA` over the window.
    pub mean_increment: f64,
    pub standard_error: f64,
    pub t_stat: f64,
    pub n_windows: usize,
    pub n_unspliced: usize,
    /// Paths dropped because the field could not be evaluated on the
    /// spliced excursion.
    pub n_excluded: usize,
    pub mean_window_length: f64,
    /// Set when no spliced window was observed.
    pub inconclusive: bool,
}

/// Accumulates `Y` increments over the spliced windows of a spliced model;
/// a nonzero mean exposes a candidate function outside the solution set.
pub fn drift_test(
    field: &dyn ScalarField,
    spec: &FunctionalSpec,
    spliced: &ModelSpec,
    grid: &Arc<TimeGrid>,
    n_paths: usize,
    seed: u64,
) -> Result<DriftReport> {
    if !matches!(spliced, ModelSpec::Spliced { .. }) {
        return Err(Error::InvalidParameter(
            "drift_test requires a Spliced model".into(),
        ));
    }
    #[derive(Clone)]
    enum Outcome {
        Window { dy: f64, len: f64 },
        Unspliced,
        Excluded,
    }
    let outcomes: Vec<Result<Outcome>> = map_indexed(n_paths, |i| {
        let paths = simulate(spliced, grid, path_seed(seed, i as u64))?;
        if paths.has_tag("unspliced") {
            return Ok(Outcome::Unspliced);
        }
        let Some((k0, k1)) = paths.splice_window else {
            return Ok(Outcome::Unspliced);
        };
        if k1 <= k0 {
            return Ok(Outcome::Unspliced);
        }
        let tracked = spec.track(&paths)?;
        let series = asset_increments(spec, &paths)?;
        let mut gains = 0.0;
        for k in k0..k1 {
            let x = tracked.state(k);
            let h = match hedge_ratio(field, spec, x) {
                Ok(h) => h,
                Err(Error::Domain(_)) => return Ok(Outcome::Excluded),
                Err(e) => return Err(e),
            };
            for (j, s) in series.iter().enumerate() {
                gains += h[j] * (s[k + 1] - s[k]);
            }
        }
        let f0 = field.value(tracked.state(k0));
        let f1 = field.value(tracked.state(k1));
        match (f0, f1) {
            (Ok(a), Ok(b)) => Ok(Outcome::Window {
                dy: b - a - gains,
                len: paths.grid.times()[k1] - paths.grid.times()[k0],
            }),
            (Err(Error::Domain(_)), _) | (_, Err(Error::Domain(_))) => Ok(Outcome::Excluded),
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    });

    let mut increments = Vec::new();
    let mut lengths = Vec::new();
    let mut n_unspliced = 0usize;
    let mut n_excluded = 0usize;
    for o in outcomes {
        match o? {
            Outcome::Window { dy, len } => {
                increments.push(dy);
                lengths.push(len);
            }
            Outcome::Unspliced => n_unspliced += 1,
            Outcome::Excluded => n_excluded += 1,
        }
    }
    let n = increments.len();
    if n == 0 {
        return Ok(DriftReport {
            mean_increment: 0.0,
            standard_error: 0.0,
            t_stat: 0.0,
            n_windows: 0,
            n_unspliced,
            n_excluded,
            mean_window_length: 0.0,
            inconclusive: true,
        });
    }
    let nf = n as f64;
    let mean = increments.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        increments.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let se = (var / nf).sqrt();
    Ok(DriftReport {
        mean_increment: mean,
        standard_error: se,
        t_stat: t_statistic(mean, se),
        n_windows: n,
        n_unspliced,
        n_excluded,
        mean_window_length: lengths.iter().sum::<f64>() / nf,
        inconclusive: false,
    })
}

/// Suggests a splice covariance that amplifies the largest diagonal
/// operator residual of `field` over the sampled region, mirroring the
/// diagonal construction in the detection argument.
pub fn suggest_sigma(
    field: &dyn ScalarField,
    spec: &FunctionalSpec,
    samples: &[Vec<f64>],
) -> Result<DMatrix<f64>> {
    let d = spec.asset_dim();
    let mut worst_kk: f64 = 0.0;
    let mut worst_idx = 0usize;
    let mut bound: f64 = 0.0;
    for x in samples {
        let ops = operators(field, spec, x)?;
        bound = bound.max(ops.l_gamma.abs());
        for i in 0..d {
            for j in 0..d {
                bound = bound.max(ops.l_ab[(i, j)].abs());
            }
            if ops.l_ab[(i, i)].abs() > worst_kk {
                worst_kk = ops.l_ab[(i, i)].abs();
                worst_idx = i;
            }
        }
    }
    let mut sigma = DMatrix::identity(d, d);
    if worst_kk > 0.0 {
        sigma[(worst_idx, worst_idx)] = (2.0 * bound * (d as f64 + 1.0) / worst_kk).max(1.0);
    }
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{square_timer_field, AnalyticField, DomainBox};
    use crate::functionals::{Component, WeightFn};
    use crate::stopping::Approach;
    use approx::assert_relative_eq;

    fn log_clock_spec() -> FunctionalSpec {
        FunctionalSpec::price_and_clock(
            "S",
            WeightFn::Power {
                of: 0,
                exponent: -2.0,
            },
        )
    }

    fn clock_set(q: f64) -> StoppingSet {
        StoppingSet::LevelSet {
            index: 1,
            value: q,
            approach: Approach::FromBelow,
        }
    }

    #[test]
    fn identity_payoff_replicates_exactly() {
        // F = x1: the hedge holds one unit throughout, so the discrete
        // wealth equals the price identically.
        let domain = DomainBox::new(vec![1e-6, 0.0], vec![100.0, 1.0]).unwrap();
        let field = AnalyticField::new(domain, |x| x[0])
            .with_gradient(|_| vec![1.0, 0.0])
            .with_hessian(|_| DMatrix::zeros(2, 2));
        let grid = Arc::new(TimeGrid::uniform(2.0, 1 << 10).unwrap());
        let model = ModelSpec::Gbm { s0: 1.0, sigma: 0.2 };
        let report = backtest(&field, &log_clock_spec(), &clock_set(0.04), &model, &grid, 50, 9)
            .unwrap();
        assert_eq!(report.aggregates.n_stopped, 50);
        assert!(report.aggregates.max_abs_error <= 1e-12);
    }

    #[test]
    fn square_timer_rms_error_shrinks_with_quadrupled_steps() {
        // The clock increments are exactly the squared price increments, so
        // the second-order Ito terms cancel pathwise and the measured rate
        // is close to first order in the step size (factor ~4 per
        // quadrupling), rather than the 1/2-order rate of fixed-maturity
        // delta hedging.
        let domain = DomainBox::new(vec![1e-3, 0.0], vec![100.0, 0.041]).unwrap();
        let q = 0.04;
        let field = square_timer_field(q, domain);
        let spec = log_clock_spec();
        let set = clock_set(q);
        let model = ModelSpec::Gbm { s0: 1.0, sigma: 0.2 };
        let rms_at = |steps: usize| {
            let grid = Arc::new(TimeGrid::uniform(2.0, steps).unwrap());
            backtest(&field, &spec, &set, &model, &grid, 120, 31)
                .unwrap()
                .aggregates
                .rms_error
        };
        let coarse = rms_at(1 << 12);
        let fine = rms_at(1 << 14);
        let factor = coarse / fine;
        assert!(
            (1.5..=5.6).contains(&factor),
            "quadrupling factor {factor} outside the convergent range"
        );
    }

    #[test]
    fn wealth_frozen_after_hit() {
        // Rebuild the wealth trajectory by hand and check it is constant
        // beyond the hit index.
        let domain = DomainBox::new(vec![1e-6, 0.0], vec![100.0, 1.0]).unwrap();
        let field = AnalyticField::new(domain, |x| x[0]);
        let spec = log_clock_spec();
        let set = clock_set(0.01);
        let grid = Arc::new(TimeGrid::uniform(4.0, 512).unwrap());
        let model = ModelSpec::Gbm { s0: 1.0, sigma: 0.2 };
        let paths = simulate(&model, &grid, 17).unwrap();
        let row = backtest_path(&field, &spec, &set, &paths, 0).unwrap();
        let hit = row.hit_index.unwrap();
        assert!(hit > 0 && hit < 512);
        // Terminal wealth uses only increments before the hit.
        let s = paths.component("S").unwrap();
        let manual: f64 = 1.0 + (0..hit).map(|k| s[k + 1] - s[k]).sum::<f64>();
        assert_relative_eq!(row.terminal_wealth, manual, epsilon = 1e-12);
    }

    #[test]
    fn hit_time_concentrates_at_clock_over_variance_rate() {
        // Under GBM with sigma = 0.2 the log clock runs at 0.04 per unit
        // time, so the 0.04 budget is spent near t = 1.
        let spec = log_clock_spec();
        let set = clock_set(0.04);
        let grid = Arc::new(TimeGrid::uniform(2.0, 1 << 12).unwrap());
        let model = ModelSpec::Gbm { s0: 1.0, sigma: 0.2 };
        let times: Vec<f64> = map_indexed(200, |i| {
            let paths = simulate(&model, &grid, path_seed(77, i as u64)).unwrap();
            let tracked = spec.track(&paths).unwrap();
            hitting(&tracked, &set).unwrap().time
        });
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        assert!(
            (0.95..=1.05).contains(&mean),
            "mean hit time {mean} outside [0.95, 1.05]"
        );
    }

    #[test]
    fn cashflow_linear_asian_identity_is_exact() {
        // F = x3 (the price) under X = (t, V, S): the time-weighted hedge
        // reproduces the right-endpoint integral of S dt exactly by
        // summation by parts.
        let domain = DomainBox::new(vec![0.0, 0.0, 1e-6], vec![2.0, 10.0, 100.0]).unwrap();
        let field = AnalyticField::new(domain, |x| x[2])
            .with_gradient(|_| vec![0.0, 0.0, 1.0])
            .with_hessian(|_| DMatrix::zeros(3, 3));
        let spec = FunctionalSpec::time_average_price("S");
        let grid = Arc::new(TimeGrid::uniform(1.0, 1 << 10).unwrap());
        let model = ModelSpec::Gbm { s0: 1.0, sigma: 0.2 };
        let report = cashflow_backtest(
            &field,
            &spec,
            &StoppingSet::Never,
            1.0,
            &model,
            &grid,
            40,
            3,
        )
        .unwrap();
        assert!(
            report.aggregates.max_abs_error <= 1e-10,
            "max abs error {}",
            report.aggregates.max_abs_error
        );
    }

    #[test]
    fn cashflow_constant_field_is_exact() {
        let domain = DomainBox::new(vec![1e-6, 0.0], vec![100.0, 10.0]).unwrap();
        let field = AnalyticField::new(domain, |_| 1.0)
            .with_gradient(|_| vec![0.0, 0.0])
            .with_hessian(|_| DMatrix::zeros(2, 2));
        let spec = log_clock_spec();
        let grid = Arc::new(TimeGrid::uniform(1.0, 256).unwrap());
        let model = ModelSpec::Gbm { s0: 1.0, sigma: 0.2 };
        let report = cashflow_backtest(
            &field,
            &spec,
            &StoppingSet::Never,
            1.0,
            &model,
            &grid,
            10,
            3,
        )
        .unwrap();
        for row in &report.rows {
            assert_relative_eq!(row.terminal_wealth, 1.0, epsilon = 1e-12);
            assert_relative_eq!(row.target, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cashflow_square_misspecification_is_detected() {
        // F = x1^2 is not in the solution set for X = (S): the cash-flow
        // error has mean equal to minus the time-weighted expected QV, which
        // is s0^2 (e^{sigma^2 T} - 1 - sigma^2 T) / sigma^2.
        let domain = DomainBox::new(vec![1e-6], vec![100.0]).unwrap();
        let field = AnalyticField::new(domain, |x| x[0] * x[0])
            .with_gradient(|x| vec![2.0 * x[0]])
            .with_hessian(|_| DMatrix::from_element(1, 1, 2.0));
        let spec = FunctionalSpec {
            assets: vec!["S".into()],
            components: vec![Component::Asset { label: "S".into() }],
        };
        let grid = Arc::new(TimeGrid::uniform(1.0, 512).unwrap());
        let model = ModelSpec::Gbm { s0: 1.0, sigma: 0.2 };
        let report = cashflow_backtest(
            &field,
            &spec,
            &StoppingSet::Never,
            1.0,
            &model,
            &grid,
            2000,
            11,
        )
        .unwrap();
        let t = report.t_stat();
        assert!(t.abs() > 5.0, "|t| = {} should exceed 5", t.abs());
        let sig2: f64 = 0.04;
        let expected = -((sig2.exp() - 1.0 - sig2) / sig2);
        assert!(
            (report.aggregates.mean_error - expected).abs() < 4.0 * report.aggregates.se_mean
                || (report.aggregates.mean_error - expected).abs() < 5e-4,
            "mean {} vs closed form {expected}",
            report.aggregates.mean_error
        );
    }

    #[test]
    fn sweep_reports_all_models_and_is_order_invariant() {
        let domain = DomainBox::new(vec![1e-6, 0.0], vec![100.0, 1.0]).unwrap();
        let field = AnalyticField::new(domain, |x| x[0])
            .with_gradient(|_| vec![1.0, 0.0])
            .with_hessian(|_| DMatrix::zeros(2, 2));
        let spec = log_clock_spec();
        let set = clock_set(0.02);
        let grid = Arc::new(TimeGrid::uniform(2.0, 512).unwrap());
        let models = vec![
            ("gbm".to_string(), ModelSpec::Gbm { s0: 1.0, sigma: 0.2 }),
            (
                "heston".to_string(),
                ModelSpec::Heston {
                    s0: 1.0,
                    v0: 0.04,
                    kappa: 1.5,
                    theta: 0.04,
                    xi: 0.3,
                    rho: -0.7,
                },
            ),
        ];
        let report = sweep(&field, &spec, &set, &models, &grid, 20, 5);
        let mut reversed: Vec<(String, ModelSpec)> = models.clone();
        reversed.reverse();
        let report_rev = sweep(&field, &spec, &set, &reversed, &grid, 20, 5);
        let table: std::collections::BTreeMap<_, _> = report.error_table().into_iter().collect();
        let table_rev: std::collections::BTreeMap<_, _> =
            report_rev.error_table().into_iter().collect();
        assert_eq!(table, table_rev);
        for (_, err) in table {
            assert!(err.abs() < 1e-12);
        }
    }

    #[test]
    fn drift_detected_for_pure_clock_field() {
        // F = x2 under an immediate splice with unit covariance: each Y
        // increment is the realized QV of the window, mean ~ window length.
        let domain = DomainBox::new(vec![-100.0, 0.0], vec![100.0, 100.0]).unwrap();
        let field = AnalyticField::new(domain, |x| x[1])
            .with_gradient(|_| vec![0.0, 1.0])
            .with_hessian(|_| DMatrix::zeros(2, 2));
        let spec = FunctionalSpec {
            assets: vec!["S".into()],
            components: vec![
                Component::Asset { label: "S".into() },
                Component::WeightedQv {
                    of: crate::functionals::Target::Label("S".into()),
                    weight: WeightFn::one(),
                },
            ],
        };
        let spliced = ModelSpec::Spliced {
            base: Box::new(ModelSpec::Gbm { s0: 1.0, sigma: 0.2 }),
            trigger: StoppingSet::Immediate,
            trigger_functional: None,
            cov: vec![vec![1.0]],
            exit: StoppingSet::Never,
        };
        let grid = Arc::new(TimeGrid::uniform(1.0, 512).unwrap());
        let report = drift_test(&field, &spec, &spliced, &grid, 1000, 21).unwrap();
        assert!(!report.inconclusive);
        assert!(report.t_stat > 5.0, "t = {}", report.t_stat);
        assert!(
            (report.mean_increment - 0.5).abs() < 0.01,
            "drift {} should approximate the window length 0.5",
            report.mean_increment
        );
    }

    #[test]
    fn no_drift_for_the_asset_itself() {
        let domain = DomainBox::new(vec![-100.0, 0.0], vec![100.0, 100.0]).unwrap();
        let field = AnalyticField::new(domain, |x| x[0])
            .with_gradient(|_| vec![1.0, 0.0])
            .with_hessian(|_| DMatrix::zeros(2, 2));
        let spec = FunctionalSpec::price_and_clock("S", WeightFn::one());
        let spliced = ModelSpec::Spliced {
            base: Box::new(ModelSpec::Gbm { s0: 1.0, sigma: 0.2 }),
            trigger: StoppingSet::Immediate,
            trigger_functional: None,
            cov: vec![vec![1.0]],
            exit: StoppingSet::Never,
        };
        let grid = Arc::new(TimeGrid::uniform(1.0, 256).unwrap());
        let report = drift_test(&field, &spec, &spliced, &grid, 200, 23).unwrap();
        assert!(report.t_stat.abs() < 3.0);
        assert!(report.mean_increment.abs() < 1e-12);
    }

    #[test]
    fn inconclusive_when_trigger_never_fires() {
        let domain = DomainBox::new(vec![1e-6, 0.0], vec![100.0, 100.0]).unwrap();
        let field = AnalyticField::new(domain, |x| x[0]);
        let spec = FunctionalSpec::price_and_clock("S", WeightFn::one());
        let spliced = ModelSpec::Spliced {
            base: Box::new(ModelSpec::Gbm { s0: 1.0, sigma: 0.2 }),
            trigger: StoppingSet::LevelSet {
                index: 0,
                value: 5.0,
                approach: Approach::FromBelow,
            },
            trigger_functional: None,
            cov: vec![vec![1.0]],
            exit: StoppingSet::Never,
        };
        let grid = Arc::new(TimeGrid::uniform(0.01, 64).unwrap());
        let report = drift_test(&field, &spec, &spliced, &grid, 50, 29).unwrap();
        assert!(report.inconclusive);
        assert_eq!(report.n_unspliced, 50);
    }

    #[test]
    fn aggregates_recomputable_from_rows() {
        let domain = DomainBox::new(vec![1e-6, 0.0], vec![100.0, 1.0]).unwrap();
        let field = AnalyticField::new(domain, |x| x[0]);
        let spec = log_clock_spec();
        let grid = Arc::new(TimeGrid::uniform(2.0, 256).unwrap());
        let model = ModelSpec::Gbm { s0: 1.0, sigma: 0.2 };
        let report = backtest(&field, &spec, &clock_set(0.04), &model, &grid, 30, 41).unwrap();
        let recomputed = HedgeReport::compute_aggregates(&report.rows);
        assert_eq!(report.aggregates.mean_error, recomputed.mean_error);
        assert_eq!(report.aggregates.rms_error, recomputed.rms_error);
        assert_eq!(report.aggregates.n_stopped, recomputed.n_stopped);
    }

    #[test]
    fn suggest_sigma_amplifies_offending_diagonal() {
        let domain = DomainBox::new(vec![0.5, 0.0], vec![2.0, 1.0]).unwrap();
        let field = AnalyticField::new(domain.clone(), |x| x[1])
            .with_gradient(|_| vec![0.0, 1.0])
            .with_hessian(|_| DMatrix::zeros(2, 2));
        let spec = FunctionalSpec::price_and_clock("S", WeightFn::one());
        let sigma = suggest_sigma(&field, &spec, &domain.sample(32, 0.05)).unwrap();
        assert!(sigma[(0, 0)] >= 1.0);
    }
}

//! Differential operators induced by a functional's coefficient triple,
//! membership testing by residual sampling, and the concrete boundary-value
//! solvers.

pub mod lookback;
pub mod solver;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::functionals::FunctionalSpec;

/// Values of the three operator families at a point.
#[derive(Debug, Clone)]
pub struct OperatorValues {
    /// First-order drift operator (scalar).
    pub l_gamma: f64,
    /// Second-variation operators, one per asset pair (d x d).
    pub l_ab: DMatrix<f64>,
    /// Hedge-ratio operator (d-vector): the holdings of the replicating
    /// strategy.
    pub l_alpha: DVector<f64>,
}

impl OperatorValues {
    /// Symmetry defect of the second-variation block.
    pub fn asymmetry(&self) -> f64 {
        (&self.l_ab - self.l_ab.transpose()).amax()
    }
}

/// Evaluates the operator triple of `field` under the coefficients of
/// `spec` at an interior point `x`.
pub fn operators(
    field: &dyn ScalarField,
    spec: &FunctionalSpec,
    x: &[f64],
) -> Result<OperatorValues> {
    if !field.domain().contains(x) {
        return Err(Error::Domain(format!(
            "operator evaluation outside the field domain at {x:?}"
        )));
    }
    let n = spec.dim();
    let d = spec.asset_dim();
    if field.dim() != n {
        return Err(Error::Spec(format!(
            "field dimension {} does not match spec dimension {n}",
            field.dim()
        )));
    }
    let grad = field.gradient(x)?;
    let hess = field.hessian(x)?;

    let alphas: Vec<DVector<f64>> = (0..n).map(|k| spec.alpha(k, x)).collect::<Result<_>>()?;
    let betas: Vec<DMatrix<f64>> = (0..n).map(|k| spec.beta(k, x)).collect::<Result<_>>()?;

    let mut l_gamma = 0.0;
    for k in 0..n {
        l_gamma += spec.gamma(k, x)? * grad[k];
    }

    let mut l_alpha = DVector::zeros(d);
    for k in 0..n {
        l_alpha += &alphas[k] * grad[k];
    }

    let mut l_ab = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut v = 0.0;
            for k in 0..n {
                v += betas[k][(i, j)] * grad[k];
            }
            for k in 0..n {
                for l in 0..n {
                    v += 0.5 * alphas[k][i] * alphas[l][j] * hess[(k, l)];
                }
            }
            l_ab[(i, j)] = v;
        }
    }

    Ok(OperatorValues {
        l_gamma,
        l_ab,
        l_alpha,
    })
}

/// Worst-case operator residuals over a sample of points; all entries must
/// vanish for the field to generate a model-independent wealth process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max_gamma: f64,
    /// `max |L^{a,b}_{ij} F|` over the samples, row-major d x d.
    pub max_ab: Vec<Vec<f64>>,
    pub max_overall: f64,
    pub worst_point: Vec<f64>,
    pub samples: usize,
}

impl ResidualReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_overall < tol
    }
}

/// Samples the operator residuals of `field` at the given interior points.
pub fn residual(
    field: &dyn ScalarField,
    spec: &FunctionalSpec,
    samples: &[Vec<f64>],
) -> Result<ResidualReport> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter(
            "residual sampling needs at least one point".into(),
        ));
    }
    let d = spec.asset_dim();
    let mut max_gamma: f64 = 0.0;
    let mut max_ab = vec![vec![0.0_f64; d]; d];
    let mut max_overall: f64 = 0.0;
    let mut worst_point = samples[0].clone();
    for x in samples {
        let ops = operators(field, spec, x)?;
        let mut here: f64 = ops.l_gamma.abs();
        max_gamma = max_gamma.max(ops.l_gamma.abs());
        for i in 0..d {
            for j in 0..d {
                let v = ops.l_ab[(i, j)].abs();
                max_ab[i][j] = max_ab[i][j].max(v);
                here = here.max(v);
            }
        }
        if here > max_overall {
            max_overall = here;
            worst_point = x.clone();
        }
    }
    Ok(ResidualReport {
        max_gamma,
        max_ab,
        max_overall,
        worst_point,
        samples: samples.len(),
    })
}

//! Candidate hedging functions: C^2 scalar fields with value, gradient and
//! Hessian access, either analytic or by central finite differences.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::halton;

/// Relative step for finite-difference derivatives.
const FD_STEP: f64 = 1e-4;

/// Per-coordinate closed box on which a field is declared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidParameter(
                "domain box needs lo < hi per coordinate".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| v >= l && v <= h)
    }

    /// Strictly interior with a relative margin.
    pub fn interior(&self, x: &[f64], margin: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| {
                    let pad = margin * (h - l);
                    *v >= l + pad && *v <= h - pad
                })
    }

    /// Low-discrepancy interior sample points (Halton, shrunk by `margin`).
    pub fn sample(&self, count: usize, margin: f64) -> Vec<Vec<f64>> {
        (0..count)
            .map(|i| {
                let u = halton(i, self.dim());
                self.lo
                    .iter()
                    .zip(&self.hi)
                    .zip(u)
                    .map(|((l, h), ui)| {
                        let pad = margin * (h - l);
                        (l + pad) + (h - l - 2.0 * pad) * ui
                    })
                    .collect()
            })
            .collect()
    }
}

/// A C^2 candidate hedging function on a declared box.
///
/// `gradient` and `hessian` default to central finite differences with step
/// `1e-4 max(1, |x_i|)` per coordinate, clamped to stay inside the box.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &[f64]) -> Result<f64>;

    fn domain(&self) -> &DomainBox;

    fn dim(&self) -> usize {
        self.domain().dim()
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        fd_gradient(self, x)
    }

    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        fd_hessian(self, x)
    }
}

/// Central-difference gradient usable by any field; the stencil slides to
/// one-sided at the domain boundary.
pub fn fd_gradient<F: ScalarField + ?Sized>(f: &F, x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let domain = f.domain();
    let mut g = vec![0.0; n];
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for i in 0..n {
        let h = fd_step(domain, x, i);
        xp[i] = (x[i] + h).min(domain.hi[i]);
        xm[i] = (x[i] - h).max(domain.lo[i]);
        g[i] = (f.value(&xp)? - f.value(&xm)?) / (xp[i] - xm[i]);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    Ok(g)
}

/// Central-difference Hessian usable by any field.
pub fn fd_hessian<F: ScalarField + ?Sized>(f: &F, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let f0 = f.value(x)?;
    let mut y = x.to_vec();
    for i in 0..n {
        let hi = fd_step(f.domain(), x, i);
        y[i] = x[i] + hi;
        let fp = f.value(&y)?;
        y[i] = x[i] - hi;
        let fm = f.value(&y)?;
        y[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = fd_step(f.domain(), x, j);
            y[i] = x[i] + hi;
            y[j] = x[j] + hj;
            let fpp = f.value(&y)?;
            y[j] = x[j] - hj;
            let fpm = f.value(&y)?;
            y[i] = x[i] - hi;
            let fmm = f.value(&y)?;
            y[j] = x[j] + hj;
            let fmp = f.value(&y)?;
            y[i] = x[i];
            y[j] = x[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

fn fd_step(domain: &DomainBox, x: &[f64], i: usize) -> f64 {
    let h = FD_STEP * x[i].abs().max(1.0);
    // Keep the stencil inside the box.
    let room = (x[i] - domain.lo[i]).min(domain.hi[i] - x[i]).abs();
    if room > 0.0 {
        h.min(0.45 * room).max(1e-12)
    } else {
        h
    }
}

type ValueFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type HessFn = Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Field defined by closures, with optional analytic derivatives.
pub struct AnalyticField {
    value: ValueFn,
    grad: Option<GradFn>,
    hess: Option<HessFn>,
    domain: DomainBox,
}

impl AnalyticField {
    pub fn new(domain: DomainBox, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Box::new(value),
            grad: None,
            hess: None,
            domain,
        }
    }

    pub fn with_gradient(
        mut self,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Box::new(grad));
        self
    }

    pub fn with_hessian(
        mut self,
        hess: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hess = Some(Box::new(hess));
        self
    }
}

impl ScalarField for AnalyticField {
    fn value(&self, x: &[f64]) -> Result<f64> {
        if !self.domain.contains(x) {
            return Err(Error::Domain(format!(
                "point {x:?} outside the declared box"
            )));
        }
        Ok((self.value)(x))
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.grad {
            Some(g) => Ok(g(x)),
            None => fd_gradient(self, x),
        }
    }

    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.hess {
            Some(h) => Ok(h(x)),
            None => fd_hessian(self, x),
        }
    }
}

/// Checks that analytic and finite-difference derivatives agree to the given
/// relative tolerance at low-discrepancy interior points. Returns the worst
/// relative deviation observed.
pub fn derivative_consistency<F: ScalarField + ?Sized>(
    field: &F,
    points: usize,
    tol: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in field.domain().sample(points, 0.05) {
        let g = field.gradient(&x)?;
        let g_fd = fd_gradient(field, &x)?;
        for (a, b) in g.iter().zip(&g_fd) {
            let scale = a.abs().max(b.abs()).max(1.0);
            worst = worst.max((a - b).abs() / scale);
        }
    }
    if worst > tol {
        return Err(Error::InvalidParameter(format!(
            "analytic and finite-difference gradients disagree: worst relative gap {worst}"
        )));
    }
    Ok(worst)
}

/// The canonical closed-form timer field `F(x1, x2) = x1^2 e^(q - x2)`,
/// annihilated by the clock operator with weight `1/x1^2`.
pub fn square_timer_field(q: f64, domain: DomainBox) -> AnalyticField {
    AnalyticField::new(domain, move |x| x[0] * x[0] * (q - x[1]).exp())
        .with_gradient(move |x| {
            let e = (q - x[1]).exp();
            vec![2.0 * x[0] * e, -x[0] * x[0] * e]
        })
        .with_hessian(move |x| {
            let e = (q - x[1]).exp();
            DMatrix::from_row_slice(
                2,
                2,
                &[2.0 * e, -2.0 * x[0] * e, -2.0 * x[0] * e, x[0] * x[0] * e],
            )
        })
}

//! Differentiable convex test functions behind a uniform interface.
//!
//! Every objective exposes its value, gradient, dense Hessian and
//! Hessian-vector products. Objectives are immutable once built and can be
//! shared across threads.

use ndarray::{Array1, Array2, ArrayView1};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::top_eigenvalue_psd;

/// A twice-differentiable function on `R^dim`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &Array1<f64>) -> Result<f64>;

    fn gradient(&self, x: &Array1<f64>) -> Result<Array1<f64>>;

    /// Dense symmetric Hessian.
    fn hessian(&self, x: &Array1<f64>) -> Result<Array2<f64>>;

    /// Hessian-vector product `∇²f(x)·v`, computed without forming the Hessian.
    fn hvp(&self, x: &Array1<f64>, v: &Array1<f64>) -> Result<Array1<f64>>;

    /// Hessian-vector operator at a fixed point. Implementations may cache
    /// whatever depends only on `x`; the default re-evaluates [`Objective::hvp`].
    fn hvp_operator<'a>(
        &'a self,
        x: &Array1<f64>,
    ) -> Result<Box<dyn Fn(&Array1<f64>) -> Array1<f64> + 'a>> {
        self.check_dim(x)?;
        let x = x.clone();
        Ok(Box::new(move |v: &Array1<f64>| {
            self.hvp(&x, v)
                .expect("hvp dimension checked at construction")
        }))
    }

    /// `f(x) − f(reference)`. Implementations evaluate the difference directly
    /// where they can, so that tiny gaps keep their relative accuracy.
    fn value_gap(&self, x: &Array1<f64>, reference: &Array1<f64>) -> Result<f64> {
        Ok(self.value(x)? - self.value(reference)?)
    }

    fn check_dim(&self, x: &Array1<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// `log(1 + exp(u))` without overflow.
#[inline]
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// `softplus(base + delta) − softplus(base)`, accurate for small `delta`.
#[inline]
fn softplus_diff(base: f64, delta: f64) -> f64 {
    if delta.abs() < 1.0 {
        (delta.exp_m1() * sigmoid(base)).ln_1p()
    } else {
        softplus(base + delta) - softplus(base)
    }
}

#[inline]
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Average logistic loss `(1/n) Σ log(1 + exp(−cᵢ φᵢᵀx))`, no intercept.
#[derive(Debug, Clone)]
pub struct Logistic {
    features: Array2<f64>,
    labels: Array1<f64>,
}

/// Builds the logistic-regression objective for a labelled dataset.
pub fn make_logistic(data: &Dataset) -> Result<Logistic> {
    let (n, _d) = data.features.dim();
    if n == 0 {
        return Err(Error::InvalidInput(
            "logistic regression needs at least one example".into(),
        ));
    }
    if data.labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: data.labels.len(),
        });
    }
    if let Some(bad) = data.labels.iter().find(|&&c| c != 1.0 && c != -1.0) {
        return Err(Error::InvalidInput(format!(
            "label {bad} is not in {{-1, +1}}"
        )));
    }
    Ok(Logistic {
        features: data.features.clone(),
        labels: data.labels.clone(),
    })
}

impl Logistic {
    pub fn num_examples(&self) -> usize {
        self.features.nrows()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    /// Margins `cᵢ φᵢᵀx`.
    fn margins(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        Ok(self.features.dot(x) * &self.labels)
    }

    /// Curvature weights `sᵢ(1 − sᵢ)/n` with `sᵢ = sigmoid(cᵢ φᵢᵀx)`.
    fn curvature_weights(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        let n = self.num_examples() as f64;
        Ok(self.margins(x)?.mapv(|m| {
            let s = sigmoid(m);
            s * (1.0 - s) / n
        }))
    }
}

impl Objective for Logistic {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn value(&self, x: &Array1<f64>) -> Result<f64> {
        let m = self.margins(x)?;
        Ok(m.iter().map(|&u| softplus(-u)).sum::<f64>() / self.num_examples() as f64)
    }

    fn value_gap(&self, x: &Array1<f64>, reference: &Array1<f64>) -> Result<f64> {
        self.check_dim(x)?;
        let base = self.margins(reference)?;
        let diff = x - reference;
        let delta = self.features.dot(&diff) * &self.labels;
        let total: f64 = base
            .iter()
            .zip(delta.iter())
            .map(|(&mb, &dm)| softplus_diff(-mb, -dm))
            .sum();
        Ok(total / self.num_examples() as f64)
    }

    fn gradient(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        let n = self.num_examples() as f64;
        let m = self.margins(x)?;
        // d/dz log(1+exp(-c z)) = -c·sigmoid(-c z)
        let coef = ndarray::Zip::from(&m)
            .and(&self.labels)
            .map_collect(|&mi, &ci| -ci * sigmoid(-mi) / n);
        Ok(self.features.t().dot(&coef))
    }

    fn hessian(&self, x: &Array1<f64>) -> Result<Array2<f64>> {
        let w = self.curvature_weights(x)?;
        let weighted = &self.features * &w.view().insert_axis(ndarray::Axis(1));
        let mut h = self.features.t().dot(&weighted);
        symmetrize_from_lower(&mut h);
        Ok(h)
    }

    fn hvp(&self, x: &Array1<f64>, v: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_dim(v)?;
        let w = self.curvature_weights(x)?;
        Ok(weighted_gram_apply(&self.features, &w, v.view()))
    }

    fn hvp_operator<'a>(
        &'a self,
        x: &Array1<f64>,
    ) -> Result<Box<dyn Fn(&Array1<f64>) -> Array1<f64> + 'a>> {
        let w = self.curvature_weights(x)?;
        Ok(Box::new(move |v: &Array1<f64>| {
            weighted_gram_apply(&self.features, &w, v.view())
        }))
    }
}

/// `Φᵀ diag(w) Φ v` in two passes over `Φ`.
fn weighted_gram_apply(phi: &Array2<f64>, w: &Array1<f64>, v: ArrayView1<f64>) -> Array1<f64> {
    let mut u = phi.dot(&v);
    u *= w;
    phi.t().dot(&u)
}

fn symmetrize_from_lower(h: &mut Array2<f64>) {
    let n = h.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = h[[i, j]];
            h[[j, i]] = v;
        }
    }
}

/// `‖(1/n) Σ φᵢφᵢᵀ‖ₒₚ · maxᵢ ‖φᵢ‖`, an upper bound on a constant multiple of
/// the logistic Hessian's Lipschitz constant.
pub fn hessian_lipschitz_bound(data: &Dataset) -> Result<f64> {
    let (n, _d) = data.features.dim();
    if n == 0 {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let second_moment = data.features.t().dot(&data.features) / n as f64;
    let op_norm = top_eigenvalue_psd(&second_moment, 1e-15, 100_000);
    let max_row = data
        .features
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max);
    Ok(op_norm * max_row)
}

/// The cubic chain `|x₁ − 1|³ + Σ_{i≥2} |xᵢ − x_{i−1}|³`, minimized at the
/// all-ones vector.
#[derive(Debug, Clone)]
pub struct CubicChain {
    dim: usize,
}

/// Builds the cubic chain in dimension `d ≥ 1`.
pub fn make_worst_case(d: usize) -> Result<CubicChain> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    Ok(CubicChain { dim: d })
}

impl CubicChain {
    /// Successive differences `u₁ = x₁ − 1`, `uᵢ = xᵢ − x_{i−1}`.
    fn differences(&self, x: &Array1<f64>) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut u = Vec::with_capacity(self.dim);
        u.push(x[0] - 1.0);
        for i in 1..self.dim {
            u.push(x[i] - x[i - 1]);
        }
        Ok(u)
    }

    pub fn minimizer(&self) -> Array1<f64> {
        Array1::ones(self.dim)
    }

    /// Hessian diagonal and off-diagonal of the tridiagonal Hessian.
    fn tridiagonal(&self, x: &Array1<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let u = self.differences(x)?;
        let curv: Vec<f64> = u.iter().map(|ui| 6.0 * ui.abs()).collect();
        let d = self.dim;
        let mut diag = vec![0.0; d];
        let mut off = vec![0.0; d.saturating_sub(1)];
        for j in 0..d {
            diag[j] = curv[j] + if j + 1 < d { curv[j + 1] } else { 0.0 };
            if j + 1 < d {
                off[j] = -curv[j + 1];
            }
        }
        Ok((diag, off))
    }
}

impl Objective for CubicChain {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Array1<f64>) -> Result<f64> {
        Ok(self.differences(x)?.iter().map(|u| u.abs().powi(3)).sum())
    }

    fn gradient(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        let u = self.differences(x)?;
        let d = self.dim;
        let slope: Vec<f64> = u.iter().map(|ui| 3.0 * ui * ui.abs()).collect();
        Ok(Array1::from_iter((0..d).map(|j| {
            slope[j] - if j + 1 < d { slope[j + 1] } else { 0.0 }
        })))
    }

    fn hessian(&self, x: &Array1<f64>) -> Result<Array2<f64>> {
        let (diag, off) = self.tridiagonal(x)?;
        let d = self.dim;
        let mut h = Array2::zeros((d, d));
        for j in 0..d {
            h[[j, j]] = diag[j];
            if j + 1 < d {
                h[[j, j + 1]] = off[j];
                h[[j + 1, j]] = off[j];
            }
        }
        Ok(h)
    }

    fn hvp(&self, x: &Array1<f64>, v: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_dim(v)?;
        let (diag, off) = self.tridiagonal(x)?;
        Ok(tridiagonal_apply(&diag, &off, v))
    }

    fn hvp_operator<'a>(
        &'a self,
        x: &Array1<f64>,
    ) -> Result<Box<dyn Fn(&Array1<f64>) -> Array1<f64> + 'a>> {
        let (diag, off) = self.tridiagonal(x)?;
        Ok(Box::new(move |v: &Array1<f64>| {
            tridiagonal_apply(&diag, &off, v)
        }))
    }
}

fn tridiagonal_apply(diag: &[f64], off: &[f64], v: &Array1<f64>) -> Array1<f64> {
    let d = diag.len();
    Array1::from_iter((0..d).map(|j| {
        let mut s = diag[j] * v[j];
        if j > 0 {
            s += off[j - 1] * v[j - 1];
        }
        if j + 1 < d {
            s += off[j] * v[j + 1];
        }
        s
    }))
}

/// `½ xᵀQx − bᵀx` with `Q` symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    q: Array2<f64>,
    b: Array1<f64>,
}

/// Builds a quadratic; rejects non-square or asymmetric `Q`.
pub fn make_quadratic(q: Array2<f64>, b: Array1<f64>) -> Result<Quadratic> {
    let (r, c) = q.dim();
    if r != c {
        return Err(Error::InvalidInput(format!(
            "Q must be square, got {r}x{c}"
        )));
    }
    if b.len() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: b.len(),
        });
    }
    for i in 0..r {
        for j in 0..i {
            if q[[i, j]] != q[[j, i]] {
                return Err(Error::InvalidInput(format!(
                    "Q is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(Quadratic { q, b })
}

impl Quadratic {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn linear_term(&self) -> &Array1<f64> {
        &self.b
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &Array1<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(0.5 * x.dot(&self.q.dot(x)) - self.b.dot(x))
    }

    fn value_gap(&self, x: &Array1<f64>, reference: &Array1<f64>) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(reference)?;
        let d = x - reference;
        let slope = self.q.dot(reference) - &self.b;
        Ok(0.5 * d.dot(&self.q.dot(&d)) + slope.dot(&d))
    }

    fn gradient(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        Ok(self.q.dot(x) - &self.b)
    }

    fn hessian(&self, x: &Array1<f64>) -> Result<Array2<f64>> {
        self.check_dim(x)?;
        Ok(self.q.clone())
    }

    fn hvp(&self, x: &Array1<f64>, v: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        self.check_dim(v)?;
        Ok(self.q.dot(v))
    }
}

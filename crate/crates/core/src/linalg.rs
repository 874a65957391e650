//! Dense symmetric solves and the Conjugate Residuals (MinRes-type) iteration.
//!
//! Everything here works on caller-owned `ndarray` buffers and holds no shared
//! state. Matrices are assumed symmetric; only the lower triangle is read by
//! the factorization.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Residual recomputation period for [`conj_res`].
pub const RESIDUAL_REFRESH_PERIOD: usize = 50;

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Euclidean norm.
#[inline]
pub fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Euclidean distance between two vectors of equal length.
pub fn distance(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`, stored row-major.
///
/// The factorization works on the envelope of the lower triangle: row `i` of
/// `L` is zero left of the first nonzero of row `i` of `A`, so banded systems
/// (the cubic chain's tridiagonal Hessian) factor in linear time.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    first: Vec<usize>,
}

impl Cholesky {
    /// Factorizes `a + shift·I`. Fails on a non-positive pivot.
    pub fn factor_shifted(a: &Array2<f64>, shift: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        let first: Vec<usize> = (0..n)
            .map(|i| (0..i).find(|&j| a[[i, j]] != 0.0).unwrap_or(i))
            .collect();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in first[i]..=i {
                let mut sum = a[[i, j]];
                if i == j {
                    sum += shift;
                }
                let k0 = first[i].max(first[j]);
                if k0 < j {
                    sum -= dot_slices(&l[i * n + k0..i * n + j], &l[j * n + k0..j * n + j]);
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(Error::Factorization {
                            pivot: i,
                            value: sum,
                        });
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l, first })
    }

    pub fn factor(a: &Array2<f64>) -> Result<Self> {
        Self::factor_shifted(a, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "right-hand side length");
        let l = &self.l;
        let mut y: Vec<f64> = b.to_vec();
        for i in 0..n {
            let f = self.first[i];
            let s = dot_slices(&l[i * n + f..i * n + i], &y[f..i]);
            y[i] = (y[i] - s) / l[i * n + i];
        }
        // Back substitution against Lᵀ, sweeping rows of L so memory access stays contiguous.
        for i in (0..n).rev() {
            let xi = y[i] / l[i * n + i];
            y[i] = xi;
            let f = self.first[i];
            let row = &l[i * n + f..i * n + i];
            for (yk, lik) in y[f..i].iter_mut().zip(row) {
                *yk -= lik * xi;
            }
        }
        Array1::from(y)
    }
}

fn shifted_matvec(h: &Array2<f64>, shift: f64, w: &Array1<f64>) -> Array1<f64> {
    let mut out = h.dot(w);
    out.scaled_add(shift, w);
    out
}

/// Regularized Newton direction `w = −(H + λI)⁻¹ g`.
///
/// Uses a Cholesky factorization followed by one step of iterative
/// refinement. If rounding makes `H + λI` numerically indefinite, the shift is
/// inflated once by `1e-12·max(|tr H|, 1)` before giving up.
pub fn reg_newton_step(h: &Array2<f64>, g: &Array1<f64>, lambda: f64) -> Result<Array1<f64>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!(
            "regularization must be positive and finite, got {lambda}"
        )));
    }
    if h.nrows() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            got: g.len(),
        });
    }
    let (chol, shift) = match Cholesky::factor_shifted(h, lambda) {
        Ok(c) => (c, lambda),
        Err(_) => {
            let trace: f64 = h.diag().sum();
            let bumped = lambda + 1e-12 * trace.abs().max(1.0);
            log::debug!("cholesky retry with shift {bumped:e} (was {lambda:e})");
            (Cholesky::factor_shifted(h, bumped)?, bumped)
        }
    };
    let rhs = g.mapv(|v| -v);
    let mut w = chol.solve(&rhs);
    // residual of (H + shift I) w = -g
    let mut res = shifted_matvec(h, shift, &w);
    res += g;
    let corr = chol.solve(&res);
    w -= &corr;
    Ok(w)
}

/// One recorded Conjugate Residuals iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjResStep {
    pub residual_norm: f64,
    pub iterate_norm: f64,
}

/// Result of [`conj_res`].
#[derive(Debug, Clone)]
pub struct ConjResOutcome {
    pub w: Array1<f64>,
    pub iters: usize,
    /// Applications of the linear map, including residual refreshes.
    pub matvecs: usize,
    pub residual_norm: f64,
    /// Norms of `r_i` and `w_i` for `i = 0..=iters`.
    pub history: Vec<ConjResStep>,
}

/// Default iteration cap for [`conj_res`] on a `dim`-dimensional system.
pub fn default_conj_res_cap(dim: usize) -> usize {
    10 * dim + 100
}

/// Conjugate Residuals for `A w = b` with `A` symmetric positive semidefinite,
/// started at `w₀ = 0` and stopped at the first iterate with
/// `‖A w − b‖ ≤ (threshold/2)·‖w‖`.
///
/// The iterates minimize `‖A w − b‖` over the growing Krylov subspaces
/// `span{b, Ab, …}`. The stopping test is the loop guard, so `b = 0` returns
/// immediately without touching `apply_a`. The recurrence residual is compared
/// with a freshly computed `A w − b` every [`RESIDUAL_REFRESH_PERIOD`]
/// iterations and replaced when they drift apart by more than `1e-8` relative.
pub fn conj_res<F>(
    mut apply_a: F,
    b: &Array1<f64>,
    threshold: f64,
    cap: usize,
) -> Result<ConjResOutcome>
where
    F: FnMut(&Array1<f64>) -> Array1<f64>,
{
    if !(threshold >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "negative threshold {threshold}"
        )));
    }
    let n = b.len();
    let half = 0.5 * threshold;
    let b_norm = norm(b);

    let mut w = Array1::<f64>::zeros(n);
    let mut r = b.mapv(|v| -v);
    let mut r_norm = b_norm;
    let mut w_norm = 0.0;
    let mut history = vec![ConjResStep {
        residual_norm: r_norm,
        iterate_norm: w_norm,
    }];
    let mut matvecs = 0usize;
    let mut iters = 0usize;

    if !(r_norm > half * w_norm) {
        return Ok(ConjResOutcome {
            w,
            iters,
            matvecs,
            residual_norm: r_norm,
            history,
        });
    }

    let mut p = r.clone();
    let mut s = apply_a(&r);
    matvecs += 1;
    let mut q = s.clone();
    let mut rs = r.dot(&s);

    while r_norm > half * w_norm {
        if iters >= cap {
            return Err(Error::IterationBudget {
                cap,
                residual: r_norm,
            });
        }
        let qq = q.dot(&q);
        if !(qq > 0.0) || !(rs.abs() > 0.0) || !rs.is_finite() {
            // A p = 0 or rᵀ A r = 0 with r ≠ 0: the residual lies in the null
            // space and the Krylov space is exhausted.
            return Err(Error::IterationBudget {
                cap: iters,
                residual: r_norm,
            });
        }
        let alpha = rs / qq;
        w.scaled_add(-alpha, &p);
        r.scaled_add(-alpha, &q);
        iters += 1;

        if iters % RESIDUAL_REFRESH_PERIOD == 0 {
            let mut fresh = apply_a(&w);
            matvecs += 1;
            fresh -= b;
            let drift = crate::linalg::distance(&fresh, &r);
            if drift > 1e-8 * b_norm.max(f64::MIN_POSITIVE) {
                log::debug!("conj_res residual refresh at iter {iters}: drift {drift:e}");
                r = fresh;
            }
        }

        r_norm = norm(&r);
        w_norm = norm(&w);
        history.push(ConjResStep {
            residual_norm: r_norm,
            iterate_norm: w_norm,
        });
        if !(r_norm > half * w_norm) {
            break;
        }

        s = apply_a(&r);
        matvecs += 1;
        let rs_next = r.dot(&s);
        let beta = rs_next / rs;
        p *= beta;
        p += &r;
        q *= beta;
        q += &s;
        rs = rs_next;
    }

    Ok(ConjResOutcome {
        w,
        iters,
        matvecs,
        residual_norm: r_norm,
        history,
    })
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration on the Rayleigh quotient.
pub fn top_eigenvalue_psd(a: &Array2<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // Non-uniform start so that the initial vector is not orthogonal to
    // structured eigenvectors such as the all-ones vector's complement.
    let mut v = Array1::from_iter((0..n).map(|i| 1.0 + (i as f64 + 1.0) / (n as f64 + 1.0)));
    let nv = norm(&v);
    v /= nv;
    let mut estimate = v.dot(&a.dot(&v));
    let mut stable = 0;
    for _ in 0..max_iter {
        let av = a.dot(&v);
        let nav = norm(&av);
        if nav == 0.0 {
            return 0.0;
        }
        v = av / nav;
        let next = v.dot(&a.dot(&v));
        if (next - estimate).abs() <= rel_tol * next.abs() {
            stable += 1;
            if stable >= 3 {
                return next;
            }
        } else {
            stable = 0;
        }
        estimate = next;
    }
    estimate
}

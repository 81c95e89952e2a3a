//! Dense symmetric-matrix primitives: weighted scatter matrices, the top
//! eigenpair by power iteration, and an exhaustive resilience check.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};

pub const DEFAULT_EIG_TOL: f64 = 1e-8;

/// Default power-iteration budget for a `d x d` matrix.
pub fn default_max_iter(d: usize) -> usize {
    10 * d + 1000
}

/// A real symmetric matrix. Symmetry is enforced exactly on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes `m` as `(m + m^T) / 2`, so entries `[i][j]` and `[j][i]` are bitwise equal.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be >= 1".into()));
        }
        check_dim(m.nrows(), m.ncols(), "square matrix")?;
        let d = m.nrows();
        let mut s = m;
        for i in 0..d {
            for j in (i + 1)..d {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Ok(Self(s))
    }

    pub fn zeros(d: usize) -> Self {
        Self(DMatrix::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn quadratic_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.0 * v))
    }
}

/// Largest eigenvalue with its unit eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigPair {
    pub value: f64,
    pub vector: DVector<f64>,
    /// `||M v - value v||_2`
    pub residual: f64,
}

/// `sum_i w_i (y_i - x)(y_i - x)^T`.
pub fn weighted_scatter(data: &Dataset, center: &DVector<f64>, weights: &[f64]) -> Result<SymMatrix> {
    check_dim(data.d(), center.len(), "center dimension")?;
    check_dim(data.n(), weights.len(), "weight count")?;
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::InvalidArgument(format!("weight {w} outside [0, 1]")));
    }
    let cols = data.centered_columns(center);
    Ok(scatter_of_columns(&cols, weights))
}

/// `sum_i w_i c_i c_i^T` for the columns `c_i` of `cols`.
pub(crate) fn scatter_of_columns(cols: &DMatrix<f64>, weights: &[f64]) -> SymMatrix {
    let mut scaled = cols.clone();
    for (mut c, &w) in scaled.column_iter_mut().zip(weights) {
        c *= w;
    }
    let m = &scaled * cols.transpose();
    SymMatrix::new(m).expect("square by construction")
}

/// Largest (algebraic) eigenvalue and eigenvector by power iteration.
///
/// The start vector is the normalized all-ones vector with `1e-6` added to
/// coordinate 0. Convergence is declared when `||Mv - lv|| <= tol * max(1, |l|)`.
/// If the dominant eigenvalue is negative, or the plain iteration stalls, the
/// iteration is repeated on a shifted positive semidefinite matrix.
pub fn lambda_max(m: &SymMatrix, tol: f64, max_iter: usize) -> Result<EigPair> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tol must be > 0, got {tol}")));
    }
    let start = default_start(m.dim());
    match power_iteration(m.as_matrix(), 0.0, &start, tol, max_iter) {
        Ok(p) if p.value >= 0.0 => Ok(p),
        Ok(p) => power_iteration(m.as_matrix(), -p.value, &start, tol, max_iter),
        Err(_) => {
            let shift = gershgorin_shift(m.as_matrix());
            power_iteration(m.as_matrix(), shift, &start, tol, max_iter)
        }
    }
}

/// `lambda_max` with the default tolerance and iteration budget.
pub fn top_eigenpair(m: &SymMatrix) -> Result<EigPair> {
    lambda_max(m, DEFAULT_EIG_TOL, default_max_iter(m.dim()))
}

pub(crate) fn max_eigenvalue_dense(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn default_start(d: usize) -> DVector<f64> {
    let mut v = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    v[0] += 1e-6;
    let norm = v.norm();
    v / norm
}

fn gershgorin_shift(m: &DMatrix<f64>) -> f64 {
    let lower = (0..m.nrows())
        .map(|i| {
            let off: f64 = (0..m.ncols()).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            m[(i, i)] - off
        })
        .fold(f64::INFINITY, f64::min);
    (-lower).max(0.0)
}

/// Power iteration on `m + shift * I`; the reported pair is for `m` itself.
pub(crate) fn power_iteration(
    m: &DMatrix<f64>,
    shift: f64,
    start: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<EigPair> {
    let d = m.nrows();
    let mut v = start.clone();
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("zero start vector".into()));
    }
    v /= norm;
    let mut last = (0.0, f64::INFINITY);
    for it in 0..=max_iter {
        let mv = m * &v;
        let value = v.dot(&mv);
        let residual = (&mv - &v * value).norm();
        if residual <= tol * value.abs().max(1.0) {
            return Ok(EigPair {
                value,
                vector: v,
                residual,
            });
        }
        last = (value, residual);
        if it == max_iter {
            break;
        }
        let next = mv + &v * shift;
        let nn = next.norm();
        if nn == 0.0 || !nn.is_finite() {
            // v lies in the null space of the shifted matrix; restart on a basis vector
            v = DVector::from_fn(d, |i, _| if i == it % d { 1.0 } else { 0.0 });
            continue;
        }
        v = next / nn;
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        value: last.0,
        residual: last.1,
    })
}

/// Largest subset size for exhaustive resilience enumeration.
pub const RESILIENCE_MAX_POINTS: usize = 20;

/// Exhaustively checks `(2 sigma sqrt(beta), beta)`-resilience of `points`
/// around `center`: every subset of size at least `(1 - beta) m` must have its
/// mean within `2 sigma sqrt(beta)` of `center`.
pub fn resilience_check(points: &Dataset, center: &DVector<f64>, sigma_bound: f64, beta: f64) -> Result<bool> {
    let m = points.n();
    if m > RESILIENCE_MAX_POINTS {
        return Err(Error::SizeLimit {
            size: m,
            limit: RESILIENCE_MAX_POINTS,
            context: "resilience_check enumerates all subsets",
        });
    }
    check_dim(points.d(), center.len(), "center dimension")?;
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0, 0.5), got {beta}")));
    }
    if sigma_bound.is_nan() || sigma_bound < 0.0 {
        return Err(Error::InvalidArgument("sigma_bound must be >= 0".into()));
    }
    let bound = 2.0 * sigma_bound * beta.sqrt();
    let slack = 1e-12 * bound.max(1.0);
    // |T| >= (1 - beta) m  <=>  at most floor(beta m) points excluded
    let max_excluded = (beta * m as f64 + 1e-12).floor() as usize;
    let total = points.mean() * m as f64;
    let rows: Vec<DVector<f64>> = (0..m).map(|i| points.row(i)).collect();

    let mut excluded: Vec<usize> = Vec::with_capacity(max_excluded);
    let mut ok = true;
    for k in 0..=max_excluded.min(m - 1) {
        for_each_combination(m, k, &mut excluded, &mut |ex| {
            let mut sum = total.clone();
            for &i in ex {
                sum -= &rows[i];
            }
            let mean = sum / (m - ex.len()) as f64;
            if (mean - center).norm() > bound + slack {
                ok = false;
            }
            ok
        });
        if !ok {
            break;
        }
    }
    Ok(ok)
}

/// Calls `f` on every `k`-subset of `0..m` in lexicographic order until it returns false.
fn for_each_combination(m: usize, k: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    fn rec(start: usize, m: usize, k: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if buf.len() == k {
            return f(buf);
        }
        for i in start..m {
            if m - i < k - buf.len() {
                break;
            }
            buf.push(i);
            let keep_going = rec(i + 1, m, k, buf, f);
            buf.pop();
            if !keep_going {
                return false;
            }
        }
        true
    }
    buf.clear();
    rec(0, m, k, buf, f)
}

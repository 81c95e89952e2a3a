//! Alternating minimization over the outlier indicator `h` and the mean `x`.
//!
//! Each outer iteration solves a sparsity relaxation for `h` around the
//! current `x`, rounds it to a binary support, repairs the support until the
//! kept points satisfy the scatter bound around their own mean, and moves `x`
//! to that mean. The loop stops as soon as the support size fails to shrink.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::coordinate_median;
use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::solvers::{self, IrlsConfig, LpWarm, SolverOptions, SolverReport};
use crate::spectral::max_eigenvalue_dense;

/// Minimum allowed value of `c1^2`.
pub const MIN_C1_SQUARED: f64 = 1.5;

/// Scatter bound `rho = c1^2 * n * sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentBound {
    sigma: f64,
    c1_squared: f64,
    n: usize,
}

impl MomentBound {
    pub fn new(sigma: f64, c1_squared: f64, n: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
        }
        if !(c1_squared >= MIN_C1_SQUARED && c1_squared.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "c1_squared must be >= {MIN_C1_SQUARED}, got {c1_squared}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        Ok(Self { sigma, c1_squared, n })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn c1_squared(&self) -> f64 {
        self.c1_squared
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.c1_squared * self.n as f64 * self.sigma * self.sigma
    }
}

/// `{i : h_i > tau}`; values equal to `tau` count as inliers.
pub fn threshold_support(h: &[f64], tau: f64) -> Vec<usize> {
    h.iter().enumerate().filter(|(_, &v)| v > tau).map(|(i, _)| i).collect()
}

/// Outlier indicator `h` in `[0, 1]^n` with its thresholded support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierIndicator {
    h: Vec<f64>,
    support: Vec<usize>,
    tau: f64,
}

impl OutlierIndicator {
    pub fn from_relaxed(h: Vec<f64>, tau: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!("tau must lie in [0, 1), got {tau}")));
        }
        if let Some(v) = h.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "indicator entries must lie in [0, 1], got {v}"
            )));
        }
        let support = threshold_support(&h, tau);
        Ok(Self { h, support, tau })
    }

    /// Binary indicator with `h_i = 1` exactly on `support`.
    pub fn binary(n: usize, support: &[usize], tau: f64) -> Result<Self> {
        let mut h = vec![0.0; n];
        for &i in support {
            if i >= n {
                return Err(Error::InvalidArgument(format!("support index {i} out of range")));
            }
            h[i] = 1.0;
        }
        Self::from_relaxed(h, tau)
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn l0(&self) -> usize {
        self.support.len()
    }

    /// Indices outside the support, in increasing order.
    pub fn inliers(&self) -> Vec<usize> {
        let mut flag = vec![true; self.h.len()];
        for &i in &self.support {
            flag[i] = false;
        }
        (0..self.h.len()).filter(|&i| flag[i]).collect()
    }
}

/// Arithmetic mean of the selected rows.
pub fn update_mean(data: &Dataset, inliers: &[usize]) -> Result<DVector<f64>> {
    if inliers.is_empty() {
        return Err(Error::InvalidArgument("empty inlier set".into()));
    }
    let mut m = DVector::zeros(data.d());
    for &i in inliers {
        if i >= data.n() {
            return Err(Error::InvalidArgument(format!("row index {i} out of range")));
        }
        m += data.samples().row(i).transpose();
    }
    Ok(m / inliers.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    L1,
    Lp(IrlsConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: Method,
    pub tau: f64,
    pub solver: SolverOptions,
    /// Practical cap on outer iterations; the effective cap is `min(n, max_outer)`.
    pub max_outer: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            method: Method::Lp(IrlsConfig::default()),
            tau: 0.5,
            solver: SolverOptions::default(),
            max_outer: 50,
        }
    }
}

impl EstimatorConfig {
    pub fn l1() -> Self {
        Self {
            method: Method::L1,
            ..Self::default()
        }
    }

    pub fn lp(cfg: IrlsConfig) -> Self {
        Self {
            method: Method::Lp(cfg),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    L0NonDecreasing,
    IterationCap,
    DegenerateEmptyInliers,
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub mean: DVector<f64>,
    /// Binary indicator of the removed points paired with `mean`.
    pub indicator: OutlierIndicator,
    /// Relaxed solution of the last relaxation that produced `indicator`.
    pub relaxed_h: Vec<f64>,
    /// Support size after each relaxation, in order.
    pub l0_trace: Vec<usize>,
    pub outer_iterations: usize,
    pub termination: Termination,
    pub reports: Vec<SolverReport>,
}

impl EstimateResult {
    /// Whether the trace shrinks strictly before its final entry and respects the iteration cap.
    pub fn trace_is_monotone(&self, n: usize, max_outer: usize) -> bool {
        let t = &self.l0_trace;
        let body = t.len().saturating_sub(1);
        t.len() == self.outer_iterations
            && self.outer_iterations <= n.min(max_outer)
            && t[..body].windows(2).all(|w| w[1] < w[0])
    }
}

/// Runs the alternating minimization from the coordinate-wise median.
pub fn robust_mean(data: &Dataset, bound: &MomentBound, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let n = data.n();
    if n < 2 {
        return Err(Error::InvalidArgument("robust_mean needs n >= 2".into()));
    }
    check_dim(n, bound.n(), "moment bound sample count")?;
    if !(0.0..1.0).contains(&cfg.tau) {
        return Err(Error::InvalidArgument(format!(
            "tau must lie in [0, 1), got {}",
            cfg.tau
        )));
    }
    if cfg.max_outer == 0 {
        return Err(Error::InvalidArgument("max_outer must be >= 1".into()));
    }
    if let Method::Lp(irls) = &cfg.method {
        irls.validate()?;
    }

    let cap = n.min(cfg.max_outer);
    let mut x = coordinate_median(data);
    let mut prev_l0 = n + 1;
    let mut l0_trace = Vec::new();
    let mut reports = Vec::new();
    let mut accepted: Option<(OutlierIndicator, Vec<f64>)> = None;
    let mut l1_warm = None;
    let mut lp_warm = LpWarm::default();
    let mut termination = Termination::IterationCap;

    while l0_trace.len() < cap {
        let h = match &cfg.method {
            Method::L1 => {
                let r = solvers::solve_weighted_l1_warm(data, &x, bound, &vec![1.0; n], &cfg.solver, l1_warm.as_ref())?;
                l1_warm = r.warm.clone();
                reports.push(r.report);
                r.h
            }
            Method::Lp(irls) => {
                let r = solvers::solve_lp_warm(data, &x, bound, irls, &cfg.solver, &mut lp_warm)?;
                reports.extend(r.reports);
                r.h
            }
        };
        let mut removed = vec![false; n];
        for i in threshold_support(&h, cfg.tau) {
            removed[i] = true;
        }
        repair_support(data, &x, &h, &mut removed, bound.rho() * (1.0 + cfg.solver.feas_tol));
        let support: Vec<usize> = (0..n).filter(|&i| removed[i]).collect();
        let l0 = support.len();
        l0_trace.push(l0);

        if l0 >= prev_l0 {
            termination = Termination::L0NonDecreasing;
            break;
        }
        if l0 == n {
            termination = Termination::DegenerateEmptyInliers;
            if accepted.is_none() {
                accepted = Some((OutlierIndicator::binary(n, &support, cfg.tau)?, h));
            }
            break;
        }
        let indicator = OutlierIndicator::binary(n, &support, cfg.tau)?;
        x = update_mean(data, &indicator.inliers())?;
        accepted = Some((indicator, h));
        prev_l0 = l0;
        if l0 == 0 {
            // nothing left to remove, so the next trace entry could not decrease
            termination = Termination::L0NonDecreasing;
            break;
        }
    }

    let (indicator, relaxed_h) = accepted.expect("first iteration always records an indicator");
    Ok(EstimateResult {
        mean: x,
        indicator,
        relaxed_h,
        outer_iterations: l0_trace.len(),
        l0_trace,
        termination,
        reports,
    })
}

const REPAIR_H_FLOOR: f64 = 1e-6;

/// Grows the removed set until the kept points have scatter at most `limit`
/// around their own mean. Points with the largest relaxed `h` go first, then
/// points with the largest projection on the top eigenvector.
fn repair_support(data: &Dataset, reference: &DVector<f64>, h: &[f64], removed: &mut [bool], limit: f64) {
    let n = data.n();
    let d = data.d();
    let cols = data.centered_columns(reference);
    let mut gram = DMatrix::zeros(d, d);
    let mut sum = DVector::zeros(d);
    let mut kept = 0usize;
    for i in (0..n).filter(|&i| !removed[i]) {
        let c = cols.column(i);
        gram.ger(1.0, &c, &c, 1.0);
        sum += c;
        kept += 1;
    }

    let mut by_h: Vec<usize> = (0..n).filter(|&i| !removed[i] && h[i] > REPAIR_H_FLOOR).collect();
    by_h.sort_by(|&a, &b| h[b].total_cmp(&h[a]).then(a.cmp(&b)));
    let mut next_h = 0;

    let scatter = |gram: &DMatrix<f64>, sum: &DVector<f64>, kept: usize| {
        let mut s = gram - sum * sum.transpose() / kept as f64;
        s = (&s + s.transpose()) * 0.5;
        s
    };
    let exact = |removed: &[bool]| {
        let idx: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
        let mut mean = DVector::zeros(d);
        for &i in &idx {
            mean += cols.column(i);
        }
        mean /= idx.len() as f64;
        let centered = DMatrix::from_fn(d, idx.len(), |j, c| cols[(j, idx[c])] - mean[j]);
        max_eigenvalue_dense(&(&centered * centered.transpose()))
    };

    while kept > 0 {
        let s = scatter(&gram, &sum, kept);
        if max_eigenvalue_dense(&s) <= limit && exact(removed) <= limit {
            return;
        }
        let victim = if next_h < by_h.len() {
            next_h += 1;
            by_h[next_h - 1]
        } else {
            let eig = s.symmetric_eigen();
            let v = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
            let mean = &sum / kept as f64;
            let mut best = (f64::NEG_INFINITY, 0);
            for i in (0..n).filter(|&i| !removed[i]) {
                let p = (cols.column(i) - &mean).dot(&v);
                if p * p > best.0 {
                    best = (p * p, i);
                }
            }
            best.1
        };
        let c = cols.column(victim);
        gram.ger(-1.0, &c, &c, 1.0);
        sum -= c;
        kept -= 1;
        removed[victim] = true;
    }
}

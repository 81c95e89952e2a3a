//! Outlier-indicator subproblem solvers.
//!
//! All of them work with `w = 1 - h`: the fraction of each sample kept in the
//! scatter constraint `lambda_max(sum_i w_i (y_i - x)(y_i - x)^T) <= rho`.
//! The l1 and weighted-l1 relaxations are packing SDPs; the lp relaxation is
//! handled by majorize-minimize reweighting on top of them.

pub(crate) mod engine;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::estimator::{MomentBound, OutlierIndicator};
use engine::{ObjectiveKind, Problem, Tolerances, WarmStart};

/// Tolerances shared by every solver. Gaps are relative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub opt_tol: f64,
    pub feas_tol: f64,
    /// Budget of objective/gradient evaluations.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            opt_tol: 1e-3,
            feas_tol: 1e-3,
            max_iter: 5000,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<Tolerances> {
        if !(self.opt_tol > 0.0 && self.feas_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument(format!("invalid solver options {self:?}")));
        }
        Ok(Tolerances {
            opt_tol: self.opt_tol,
            feas_tol: self.feas_tol,
            max_iter: self.max_iter,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    /// Objective at the returned point, in the problem's own units.
    pub objective: f64,
    /// Best dual bound certified during the run.
    pub dual_bound: f64,
    /// Relative gap between `objective` and `dual_bound`.
    pub optimality_gap: f64,
    /// `max(0, lambda_max(sum w_i B_i) - rho) / rho` at the returned point.
    pub feasibility_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A PSD term `scale * D D^T` with `D` a `d x r` matrix of directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdFactor {
    scale: f64,
    directions: Vec<DVector<f64>>,
}

impl PsdFactor {
    pub fn rank_one(scale: f64, direction: DVector<f64>) -> Self {
        Self {
            scale,
            directions: vec![direction],
        }
    }

    pub fn new(scale: f64, directions: Vec<DVector<f64>>) -> Self {
        Self { scale, directions }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn directions(&self) -> &[DVector<f64>] {
        &self.directions
    }

    pub fn matrix(&self, d: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(d, d);
        for v in &self.directions {
            m += v * v.transpose() * self.scale;
        }
        m
    }
}

/// `max u^T w  s.t.  0 <= w_i <= cap_i,  sum_i w_i B_i <= rho I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingInstance {
    u: Vec<f64>,
    factors: Vec<PsdFactor>,
    box_caps: Vec<f64>,
    spectral_cap: f64,
    dim: usize,
}

impl PackingInstance {
    pub fn new(u: Vec<f64>, factors: Vec<PsdFactor>, box_caps: Vec<f64>, spectral_cap: f64) -> Result<Self> {
        let n = u.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty packing instance".into()));
        }
        check_dim(n, factors.len(), "factor count")?;
        check_dim(n, box_caps.len(), "box cap count")?;
        if !(spectral_cap > 0.0 && spectral_cap.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "spectral cap must be > 0, got {spectral_cap}"
            )));
        }
        if let Some(v) = u.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "objective weights must be > 0, got {v}"
            )));
        }
        if let Some(v) = box_caps.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("box caps must be > 0, got {v}")));
        }
        let dim = factors
            .iter()
            .flat_map(|f| f.directions.first())
            .map(|v| v.len())
            .next()
            .ok_or_else(|| Error::InvalidArgument("factors carry no directions".into()))?;
        for f in &factors {
            if !(f.scale > 0.0 && f.scale.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "factor scale must be > 0, got {}",
                    f.scale
                )));
            }
            if f.directions.is_empty() {
                return Err(Error::InvalidArgument("factor without directions".into()));
            }
            for v in &f.directions {
                check_dim(dim, v.len(), "factor direction")?;
            }
        }
        Ok(Self {
            u,
            factors,
            box_caps,
            spectral_cap,
            dim,
        })
    }

    /// Rank-one factors `scale_i (y_i - x)(y_i - x)^T` built from samples.
    pub fn from_samples(
        data: &Dataset,
        center: &DVector<f64>,
        scales: &[f64],
        u: Vec<f64>,
        box_caps: Vec<f64>,
        spectral_cap: f64,
    ) -> Result<Self> {
        check_dim(data.d(), center.len(), "center dimension")?;
        check_dim(data.n(), scales.len(), "scale count")?;
        let factors = (0..data.n())
            .map(|i| PsdFactor::rank_one(scales[i], data.row(i) - center))
            .collect();
        Self::new(u, factors, box_caps, spectral_cap)
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn box_caps(&self) -> &[f64] {
        &self.box_caps
    }

    pub fn spectral_cap(&self) -> f64 {
        self.spectral_cap
    }

    pub fn factors(&self) -> &[PsdFactor] {
        &self.factors
    }

    /// `sum_i w_i B_i`
    pub fn weighted_sum(&self, w: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (f, &wi) in self.factors.iter().zip(w) {
            m += f.matrix(self.dim) * wi;
        }
        m
    }

    fn problem(&self, kind: ObjectiveKind) -> Problem {
        let pairs: Vec<(f64, Vec<DVector<f64>>)> =
            self.factors.iter().map(|f| (f.scale, f.directions.clone())).collect();
        let (cols, owner) = engine::columns_from_vectors(self.dim, &pairs, self.spectral_cap);
        Problem {
            cols,
            owner,
            targets: self.u.clone(),
            caps: self.box_caps.clone(),
            kind,
        }
    }
}

/// Solves the packing SDP. The returned `w` satisfies the box exactly and the
/// spectral cap up to eigenvalue roundoff; `report.optimality_gap` is certified
/// by a dual feasible matrix.
pub fn packing_sdp_maximize(inst: &PackingInstance, opts: &SolverOptions) -> Result<(Vec<f64>, SolverReport)> {
    let out = inst.problem(ObjectiveKind::Linear).solve(opts.validate()?, None);
    Ok((out.x, out.report))
}

/// `min ||u - z||^2  s.t.  0 <= z_i <= cap_i,  sum_i z_i B_i <= rho I`, where
/// `u` is the instance's objective vector. For the lp reweighting the caps
/// equal `u` and `B_i = (y_i - x)(y_i - x)^T / u_i`.
pub fn sdp_constrained_least_squares(inst: &PackingInstance, opts: &SolverOptions) -> Result<(Vec<f64>, SolverReport)> {
    let out = inst.problem(ObjectiveKind::Quadratic).solve(opts.validate()?, None);
    Ok((out.x, out.report))
}

/// A fractional outlier indicator produced by one of the relaxations.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub h: Vec<f64>,
    pub report: SolverReport,
    pub(crate) warm: Option<WarmStart>,
}

impl Relaxation {
    pub fn indicator(&self, tau: f64) -> Result<OutlierIndicator> {
        OutlierIndicator::from_relaxed(self.h.clone(), tau)
    }
}

fn sample_problem(
    data: &Dataset,
    center: &DVector<f64>,
    scales: Option<&[f64]>,
    targets: Vec<f64>,
    caps: Vec<f64>,
    rho: f64,
    kind: ObjectiveKind,
) -> Result<Problem> {
    check_dim(data.d(), center.len(), "center dimension")?;
    let n = data.n();
    let mut cols = data.centered_columns(center);
    for (i, mut c) in cols.column_iter_mut().enumerate() {
        let s = scales.map_or(1.0, |s| s[i]);
        c *= (s / rho).sqrt();
    }
    Ok(Problem {
        cols,
        owner: (0..n).collect(),
        targets,
        caps,
        kind,
    })
}

/// l1 relaxation: maximize `sum w_i` with unit caps, `h = 1 - w`.
pub fn solve_l1(
    data: &Dataset,
    center: &DVector<f64>,
    bound: &MomentBound,
    opts: &SolverOptions,
) -> Result<Relaxation> {
    solve_weighted_l1_warm(data, center, bound, &vec![1.0; data.n()], opts, None)
}

/// Weighted l1 relaxation: minimize `sum u_i h_i`.
pub fn solve_weighted_l1(
    data: &Dataset,
    center: &DVector<f64>,
    bound: &MomentBound,
    u: &[f64],
    opts: &SolverOptions,
) -> Result<Relaxation> {
    solve_weighted_l1_warm(data, center, bound, u, opts, None)
}

pub(crate) fn solve_weighted_l1_warm(
    data: &Dataset,
    center: &DVector<f64>,
    bound: &MomentBound,
    u: &[f64],
    opts: &SolverOptions,
    warm: Option<&WarmStart>,
) -> Result<Relaxation> {
    check_dim(data.n(), u.len(), "weight count")?;
    if let Some(v) = u.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("weights must be > 0, got {v}")));
    }
    let tol = opts.validate()?;
    let problem = sample_problem(
        data,
        center,
        None,
        u.to_vec(),
        vec![1.0; data.n()],
        bound.rho(),
        ObjectiveKind::Linear,
    )?;
    let out = problem.solve(tol, warm);
    let h = out.x.iter().map(|w| (1.0 - w).clamp(0.0, 1.0)).collect();
    Ok(Relaxation {
        h,
        report: out.report,
        warm: Some(out.warm),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IrlsVariant {
    /// `min sum u_i h_i^2`, solved as an SDP-constrained least squares problem
    ReweightedL2,
    /// `min sum u_i h_i`, solved as a weighted packing SDP
    ReweightedL1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsConfig {
    pub p: f64,
    pub outer_reweights: usize,
    pub delta: f64,
    /// Relative gap tolerance of each reweighted subproblem.
    pub inner_tol: f64,
    pub variant: IrlsVariant,
}

pub const DEFAULT_INNER_TOL: f64 = 2e-2;

impl Default for IrlsConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            outer_reweights: 3,
            delta: 1e-6,
            inner_tol: DEFAULT_INNER_TOL,
            variant: IrlsVariant::ReweightedL2,
        }
    }
}

impl IrlsConfig {
    pub fn new(p: f64, outer_reweights: usize, delta: f64, variant: IrlsVariant) -> Result<Self> {
        let cfg = Self {
            p,
            outer_reweights,
            delta,
            inner_tol: DEFAULT_INNER_TOL,
            variant,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidArgument(format!("p must lie in (0, 1), got {}", self.p)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be > 0, got {}", self.delta)));
        }
        if !(self.inner_tol > 0.0 && self.inner_tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "inner_tol must lie in (0, 1), got {}",
                self.inner_tol
            )));
        }
        if self.outer_reweights == 0 {
            return Err(Error::InvalidArgument("outer_reweights must be >= 1".into()));
        }
        Ok(())
    }

    /// The smoothed concave penalty the reweighting majorizes.
    pub fn surrogate(&self, h: &[f64]) -> f64 {
        match self.variant {
            IrlsVariant::ReweightedL2 => h.iter().map(|h| (h * h + self.delta).powf(self.p / 2.0)).sum(),
            IrlsVariant::ReweightedL1 => h.iter().map(|h| (h + self.delta).powf(self.p)).sum(),
        }
    }
}

/// Reweighting coefficients at `h_prev`.
///
/// `ReweightedL2` returns the coefficient of `h_i^2`, `(h_i^2 + delta)^(p/2 - 1)`;
/// `ReweightedL1` returns the coefficient of `h_i`, `p (h_i + delta)^(p - 1)`.
pub fn irls_weights(h_prev: &[f64], p: f64, delta: f64, variant: IrlsVariant) -> Vec<f64> {
    h_prev
        .iter()
        .map(|&h| match variant {
            IrlsVariant::ReweightedL2 => (h * h + delta).powf(p / 2.0 - 1.0),
            IrlsVariant::ReweightedL1 => p * (h + delta).powf(p - 1.0),
        })
        .collect()
}

/// Result of the lp relaxation.
#[derive(Debug, Clone)]
pub struct LpRelaxation {
    pub h: Vec<f64>,
    /// The l1 solution used as the starting point.
    pub initial: Vec<f64>,
    /// Surrogate penalty after the l1 start and after each reweighting round.
    pub surrogate_trace: Vec<f64>,
    pub reports: Vec<SolverReport>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LpWarm {
    pub l1: Option<WarmStart>,
    pub ls: Option<WarmStart>,
}

/// lp relaxation (`0 < p < 1`) by majorize-minimize reweighting from the l1 solution.
pub fn solve_lp(
    data: &Dataset,
    center: &DVector<f64>,
    bound: &MomentBound,
    cfg: &IrlsConfig,
    opts: &SolverOptions,
) -> Result<LpRelaxation> {
    solve_lp_warm(data, center, bound, cfg, opts, &mut LpWarm::default())
}

pub(crate) fn solve_lp_warm(
    data: &Dataset,
    center: &DVector<f64>,
    bound: &MomentBound,
    cfg: &IrlsConfig,
    opts: &SolverOptions,
    warm: &mut LpWarm,
) -> Result<LpRelaxation> {
    cfg.validate()?;
    let tol = opts.validate()?;
    let n = data.n();
    let l1 = solve_weighted_l1_warm(data, center, bound, &vec![1.0; n], opts, warm.l1.as_ref())?;
    warm.l1 = l1.warm.clone();
    let initial = l1.h.clone();
    let mut h = l1.h;
    let mut reports = vec![l1.report];
    let mut surrogate_trace = vec![cfg.surrogate(&h)];

    for _ in 0..cfg.outer_reweights {
        let coeff = irls_weights(&h, cfg.p, cfg.delta, cfg.variant);
        let (candidate, report) = match cfg.variant {
            IrlsVariant::ReweightedL2 => {
                let u: Vec<f64> = coeff.iter().map(|c| c.sqrt()).collect();
                let scales: Vec<f64> = u.iter().map(|u| 1.0 / u).collect();
                let problem = sample_problem(
                    data,
                    center,
                    Some(&scales),
                    u.clone(),
                    u.clone(),
                    bound.rho(),
                    ObjectiveKind::Quadratic,
                )?;
                let start = warm.ls.as_ref().map(|w| WarmStart {
                    x: u.iter().zip(&h).map(|(u, h)| u * (1.0 - h)).collect(),
                    dual: w.dual.clone(),
                    penalty: w.penalty,
                });
                let ls_tol = engine::Tolerances {
                    opt_tol: cfg.inner_tol,
                    ..tol
                };
                let out = problem.solve(ls_tol, start.as_ref());
                warm.ls = Some(out.warm);
                let h_new = out
                    .x
                    .iter()
                    .zip(&u)
                    .map(|(z, u)| (1.0 - z / u).clamp(0.0, 1.0))
                    .collect::<Vec<_>>();
                (h_new, out.report)
            }
            IrlsVariant::ReweightedL1 => {
                let r = solve_weighted_l1_warm(data, center, bound, &coeff, opts, None)?;
                (r.h, r.report)
            }
        };
        reports.push(report);
        h = majorize_step(cfg, &h, candidate);
        surrogate_trace.push(cfg.surrogate(&h));
    }
    Ok(LpRelaxation {
        h,
        initial,
        surrogate_trace,
        reports,
    })
}

/// Moves from `prev` toward `candidate` along the segment, keeping the first
/// step length (1, 1/2, 1/4, ...) that does not increase the surrogate. Both
/// endpoints are feasible, so every point on the segment is.
fn majorize_step(cfg: &IrlsConfig, prev: &[f64], candidate: Vec<f64>) -> Vec<f64> {
    let base = cfg.surrogate(prev);
    let mut t = 1.0;
    for _ in 0..30 {
        let h: Vec<f64> = prev
            .iter()
            .zip(&candidate)
            .map(|(a, b)| (a + t * (b - a)).clamp(0.0, 1.0))
            .collect();
        if cfg.surrogate(&h) <= base {
            return h;
        }
        t *= 0.5;
    }
    prev.to_vec()
}

//! Augmented-Lagrangian solver for separable objectives over a box with a
//! single spectral constraint `sum_i x_i B_i <= I` (the constraint is stored
//! pre-normalized by the spectral cap).
//!
//! The inner subproblem is minimized by a nonmonotone spectral projected
//! gradient method. Every outer step produces a feasible point (by uniform
//! down-scaling) and a dual certificate, so the reported optimality gap is a
//! proven bound rather than an estimate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::SolverReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ObjectiveKind {
    /// maximize `sum u_i x_i`
    Linear,
    /// minimize `sum (u_i - x_i)^2`
    Quadratic,
}

pub(crate) struct Problem {
    /// `d x N` normalized factor columns; `B_i / rho = sum_{owner(j) = i} c_j c_j^T`.
    pub cols: DMatrix<f64>,
    pub owner: Vec<usize>,
    pub targets: Vec<f64>,
    pub caps: Vec<f64>,
    pub kind: ObjectiveKind,
}

#[derive(Debug, Clone)]
pub(crate) struct WarmStart {
    pub x: Vec<f64>,
    /// Dual matrix in objective units.
    pub dual: DMatrix<f64>,
    pub penalty: f64,
}

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub report: SolverReport,
    pub warm: WarmStart,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerances {
    pub opt_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

const NONMONOTONE_MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;
const STEP_MIN: f64 = 1e-12;
const STEP_MAX: f64 = 1e12;
const PENALTY_MAX: f64 = 1e12;
const CERTIFY_EVERY: usize = 10;

struct Eval {
    phi: f64,
    grad: Vec<f64>,
    /// positive part of `Y + beta (C(x) - I)`
    plus: DMatrix<f64>,
    constraint: DMatrix<f64>,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.targets.len()
    }

    fn d(&self) -> usize {
        self.cols.nrows()
    }

    fn objective_scale(&self) -> f64 {
        self.targets.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE)
    }

    /// Objective in original units (maximized value for Linear, minimized for Quadratic).
    pub fn objective(&self, x: &[f64]) -> f64 {
        match self.kind {
            ObjectiveKind::Linear => self.targets.iter().zip(x).map(|(u, x)| u * x).sum(),
            ObjectiveKind::Quadratic => self.targets.iter().zip(x).map(|(u, x)| (u - x) * (u - x)).sum(),
        }
    }

    /// `sum_i x_i B_i / rho`
    pub fn constraint_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let mut scaled = self.cols.clone();
        for (j, mut c) in scaled.column_iter_mut().enumerate() {
            c *= x[self.owner[j]];
        }
        let mut m = &scaled * self.cols.transpose();
        symmetrize(&mut m);
        m
    }

    /// `<Y, B_i / rho>` for every variable.
    fn inner_products(&self, y: &DMatrix<f64>) -> Vec<f64> {
        let mut q = vec![0.0; self.n()];
        if y.iter().all(|&v| v == 0.0) {
            return q;
        }
        let eig = SymmetricEigen::new(y.clone());
        self.quadratic_sums(&eig, &mut q, |l| l);
        q
    }

    /// Accumulates `sum_k f(l_k) (v_k^T c_j)^2` into `out[owner(j)]`, skipping `f(l_k) == 0`.
    fn quadratic_sums(&self, eig: &SymmetricEigen<f64, nalgebra::Dyn>, out: &mut [f64], f: impl Fn(f64) -> f64) {
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&k| f(eig.eigenvalues[k]) != 0.0)
            .collect();
        if keep.is_empty() {
            return;
        }
        let vt = DMatrix::from_fn(keep.len(), self.d(), |r, c| eig.eigenvectors[(c, keep[r])]);
        let proj = vt * &self.cols;
        for j in 0..self.cols.ncols() {
            let mut s = 0.0;
            for (r, &k) in keep.iter().enumerate() {
                let p = proj[(r, j)];
                s += f(eig.eigenvalues[k]) * p * p;
            }
            out[self.owner[j]] += s;
        }
    }

    fn project(&self, x: &mut [f64]) {
        for (xi, &cap) in x.iter_mut().zip(&self.caps) {
            *xi = xi.clamp(0.0, cap);
        }
    }

    fn objective_grad(&self, x: &[f64], scale: f64) -> (f64, Vec<f64>) {
        match self.kind {
            ObjectiveKind::Linear => (
                -self.objective(x) / scale,
                self.targets.iter().map(|u| -u / scale).collect(),
            ),
            ObjectiveKind::Quadratic => (
                self.objective(x) / scale,
                self.targets.iter().zip(x).map(|(u, x)| 2.0 * (x - u) / scale).collect(),
            ),
        }
    }

    fn evaluate(&self, x: &[f64], y: &DMatrix<f64>, beta: f64, scale: f64) -> Eval {
        let (f, mut grad) = self.objective_grad(x, scale);
        let constraint = self.constraint_matrix(x);
        let d = self.d();
        let mut z = y + (&constraint - DMatrix::identity(d, d)) * beta;
        symmetrize(&mut z);
        let eig = SymmetricEigen::new(z);
        let mut penalty = 0.0;
        let mut plus = DMatrix::zeros(d, d);
        for k in 0..d {
            let l = eig.eigenvalues[k];
            if l > 0.0 {
                penalty += l * l;
                let v = eig.eigenvectors.column(k);
                plus += v * v.transpose() * l;
            }
        }
        self.quadratic_sums(&eig, &mut grad, |l| l.max(0.0));
        symmetrize(&mut plus);
        Eval {
            phi: f + penalty / (2.0 * beta),
            grad,
            plus,
            constraint,
        }
    }

    /// Dual bound for a PSD multiplier `y` in objective units: an upper bound
    /// on the optimum for Linear, a lower bound for Quadratic.
    pub fn dual_bound(&self, y: &DMatrix<f64>) -> f64 {
        let q = self.inner_products(y);
        let tr = y.trace();
        match self.kind {
            ObjectiveKind::Linear => {
                tr + self
                    .targets
                    .iter()
                    .zip(&self.caps)
                    .zip(&q)
                    .map(|((u, c), q)| c * (u - q).max(0.0))
                    .sum::<f64>()
            }
            ObjectiveKind::Quadratic => {
                -tr + self
                    .targets
                    .iter()
                    .zip(&self.caps)
                    .zip(&q)
                    .map(|((u, c), q)| {
                        let x = (u - 0.5 * q).clamp(0.0, *c);
                        (u - x) * (u - x) + q * x
                    })
                    .sum::<f64>()
            }
        }
    }

    fn relative_gap(&self, primal: f64, dual: f64) -> f64 {
        let gap = match self.kind {
            ObjectiveKind::Linear => dual - primal,
            ObjectiveKind::Quadratic => primal - dual,
        };
        let denom = match self.kind {
            ObjectiveKind::Linear => dual.abs(),
            ObjectiveKind::Quadratic => primal.abs().max(1e-9 * self.targets.iter().map(|u| u * u).sum::<f64>()),
        };
        if gap <= 0.0 {
            0.0
        } else if denom == 0.0 {
            f64::INFINITY
        } else {
            gap / denom
        }
    }

    pub fn solve(&self, tol: Tolerances, warm: Option<&WarmStart>) -> Outcome {
        let n = self.n();
        let d = self.d();
        let scale = self.objective_scale();
        let cap_scale = self.caps.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);

        let (mut x, mut y, mut beta) = match warm {
            Some(w) if w.x.len() == n && w.dual.nrows() == d => {
                let mut x = w.x.clone();
                self.project(&mut x);
                (x, &w.dual / scale, w.penalty)
            }
            _ => {
                let x0 = self.caps.clone();
                let lam = max_eigenvalue(&self.constraint_matrix(&x0));
                let x = if lam > 1.0 {
                    x0.iter().map(|v| v / lam).collect()
                } else {
                    x0
                };
                (x, DMatrix::zeros(d, d), (n as f64 / d as f64).max(1.0))
            }
        };

        let mut tracker = Tracker::new(self.kind);
        let mut evals = 0usize;
        let mut inner_tol = 1e-2;
        let mut prev_violation = f64::INFINITY;
        let mut step = 1.0;
        let mut converged = false;

        while evals < tol.max_iter {
            let budget = tol.max_iter - evals;
            let inner = Inner {
                y: &y,
                beta,
                scale,
                eps: inner_tol * cap_scale,
                budget,
                step0: step,
                opt_tol: tol.opt_tol,
            };
            let (ev, used, last_step) = self.spg(&mut x, &inner, &mut tracker);
            evals += used;
            step = last_step;

            let (gap, violation) = tracker.record(self, &x, &ev, scale);
            y = ev.plus;
            if gap <= tol.opt_tol && violation <= tol.feas_tol {
                converged = true;
                break;
            }
            if violation > 0.25 * prev_violation && violation > 0.5 * tol.opt_tol.min(tol.feas_tol) {
                beta = (beta * 4.0).min(PENALTY_MAX);
            }
            prev_violation = violation;
            inner_tol = (inner_tol * 0.3).max(1e-10);
        }

        let (primal, x_best) = tracker.best_primal.unwrap_or_else(|| {
            let f = vec![0.0; n];
            (self.objective(&f), f)
        });
        let feas_gap = (max_eigenvalue(&self.constraint_matrix(&x_best)) - 1.0).max(0.0);
        let gap = self.relative_gap(primal, tracker.best_dual);
        let report = SolverReport {
            objective: primal,
            dual_bound: tracker.best_dual,
            optimality_gap: gap,
            feasibility_gap: feas_gap,
            iterations: evals,
            converged: converged || (gap <= tol.opt_tol && feas_gap <= tol.feas_tol),
        };
        Outcome {
            warm: WarmStart {
                x,
                dual: y * scale,
                penalty: beta,
            },
            x: x_best,
            report,
        }
    }

    /// Diagonal curvature estimate used to scale gradient steps: the objective
    /// curvature plus the penalty curvature restricted to the active eigenspace.
    /// Normalized to unit mean.
    fn metric(&self, x: &[f64], p: &Inner<'_>) -> Vec<f64> {
        let n = x.len();
        let d = self.d();
        let mut z = p.y + (self.constraint_matrix(x) - DMatrix::identity(d, d)) * p.beta;
        symmetrize(&mut z);
        let eig = SymmetricEigen::new(z);
        let mut active = vec![0.0; n];
        self.quadratic_sums(&eig, &mut active, |l| if l > 0.0 { 1.0 } else { 0.0 });
        let mut norms = vec![0.0; n];
        for j in 0..self.cols.ncols() {
            norms[self.owner[j]] += self.cols.column(j).norm_squared();
        }
        let base = match self.kind {
            ObjectiveKind::Linear => return vec![1.0; n],
            ObjectiveKind::Quadratic => 2.0 / p.scale,
        };
        let mut m: Vec<f64> = (0..n).map(|i| base + p.beta * active[i] * norms[i]).collect();
        let top = m.iter().copied().fold(0.0, f64::max);
        if top <= 0.0 {
            return vec![1.0; n];
        }
        for v in &mut m {
            *v = v.max(1e-6 * top);
        }
        let mean = m.iter().sum::<f64>() / n as f64;
        m.iter_mut().for_each(|v| *v /= mean);
        m
    }

    /// Nonmonotone spectral projected gradient on the augmented Lagrangian.
    /// Every few steps the current point and multiplier estimate are scored,
    /// and the solve stops early once the certified gap is within tolerance.
    /// Returns the evaluation at the final iterate, evaluations used, and the last step length.
    #[allow(clippy::needless_range_loop)]
    fn spg(&self, x: &mut [f64], p: &Inner<'_>, tracker: &mut Tracker) -> (Eval, usize, f64) {
        let n = x.len();
        let metric = self.metric(x, p);
        let mut ev = self.evaluate(x, p.y, p.beta, p.scale);
        let mut used = 1;
        let mut history = vec![ev.phi];
        let mut step = p.step0.clamp(STEP_MIN, STEP_MAX);
        let mut trial = vec![0.0; n];
        let mut dir = vec![0.0; n];
        let mut steps = 0usize;
        while used < p.budget {
            // projected-gradient stationarity
            let mut pg = 0.0f64;
            for i in 0..n {
                let g = (x[i] - ev.grad[i]).clamp(0.0, self.caps[i]) - x[i];
                pg = pg.max(g.abs());
            }
            if pg <= p.eps {
                break;
            }
            if steps > 0 && steps.is_multiple_of(CERTIFY_EVERY) {
                let (gap, _) = tracker.record(self, x, &ev, p.scale);
                if gap <= p.opt_tol {
                    break;
                }
            }
            let mut gtd = 0.0;
            for i in 0..n {
                dir[i] = (x[i] - step * ev.grad[i] / metric[i]).clamp(0.0, self.caps[i]) - x[i];
                gtd += ev.grad[i] * dir[i];
            }
            if gtd >= 0.0 {
                break;
            }
            let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut lambda = 1.0;
            let next = loop {
                for i in 0..n {
                    trial[i] = x[i] + lambda * dir[i];
                }
                self.project(&mut trial);
                let cand = self.evaluate(&trial, p.y, p.beta, p.scale);
                used += 1;
                if cand.phi <= reference + ARMIJO * lambda * gtd || used >= p.budget || lambda < 1e-12 {
                    break cand;
                }
                // safeguarded quadratic backtracking
                let denom = 2.0 * (cand.phi - ev.phi - lambda * gtd);
                let lq = if denom > 0.0 {
                    -gtd * lambda * lambda / denom
                } else {
                    0.5 * lambda
                };
                lambda = lq.clamp(0.1 * lambda, 0.5 * lambda);
            };
            let mut sts = 0.0;
            let mut sty = 0.0;
            for i in 0..n {
                let s = trial[i] - x[i];
                let yv = next.grad[i] - ev.grad[i];
                sts += metric[i] * s * s;
                sty += s * yv;
            }
            step = if sty > 0.0 {
                (sts / sty).clamp(STEP_MIN, STEP_MAX)
            } else {
                STEP_MAX.min(step * 10.0)
            };
            x.copy_from_slice(&trial);
            ev = next;
            steps += 1;
            history.push(ev.phi);
            if history.len() > NONMONOTONE_MEMORY {
                history.remove(0);
            }
        }
        (ev, used, step)
    }
}

/// Fixed data of one inner solve.
struct Inner<'a> {
    y: &'a DMatrix<f64>,
    beta: f64,
    scale: f64,
    eps: f64,
    budget: usize,
    step0: f64,
    opt_tol: f64,
}

/// Best feasible primal point and best dual bound seen so far.
struct Tracker {
    kind: ObjectiveKind,
    best_primal: Option<(f64, Vec<f64>)>,
    best_dual: f64,
}

impl Tracker {
    fn new(kind: ObjectiveKind) -> Self {
        let best_dual = match kind {
            ObjectiveKind::Linear => f64::INFINITY,
            ObjectiveKind::Quadratic => f64::NEG_INFINITY,
        };
        Self {
            kind,
            best_primal: None,
            best_dual,
        }
    }

    /// Scores `x` (after down-scaling to feasibility) and the multiplier
    /// estimate carried by `ev`. Returns the relative gap of the best pair and
    /// the constraint violation at `x`.
    fn record(&mut self, problem: &Problem, x: &[f64], ev: &Eval, scale: f64) -> (f64, f64) {
        let lam = max_eigenvalue(&ev.constraint);
        let violation = (lam - 1.0).max(0.0);
        let feasible: Vec<f64> = if lam > 1.0 {
            x.iter().map(|v| v / lam).collect()
        } else {
            x.to_vec()
        };
        let primal = problem.objective(&feasible);
        let better = match (&self.best_primal, self.kind) {
            (None, _) => true,
            (Some((p, _)), ObjectiveKind::Linear) => primal > *p,
            (Some((p, _)), ObjectiveKind::Quadratic) => primal < *p,
        };
        if better {
            self.best_primal = Some((primal, feasible));
        }
        let dual = problem.dual_bound(&(&ev.plus * scale));
        let improves = match self.kind {
            ObjectiveKind::Linear => dual < self.best_dual,
            ObjectiveKind::Quadratic => dual > self.best_dual,
        };
        if improves {
            self.best_dual = dual;
        }
        let p = self.best_primal.as_ref().map_or(primal, |b| b.0);
        (problem.relative_gap(p, self.best_dual), violation)
    }
}

pub(crate) fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    crate::spectral::max_eigenvalue_dense(m)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn columns_from_vectors(
    d: usize,
    factors: &[(f64, Vec<DVector<f64>>)],
    rho: f64,
) -> (DMatrix<f64>, Vec<usize>) {
    let total: usize = factors.iter().map(|(_, v)| v.len()).sum();
    let mut cols = DMatrix::zeros(d, total);
    let mut owner = Vec::with_capacity(total);
    let mut j = 0;
    for (i, (s, dirs)) in factors.iter().enumerate() {
        let f = (s / rho).sqrt();
        for v in dirs {
            cols.column_mut(j).copy_from(&(v * f));
            owner.push(i);
            j += 1;
        }
    }
    (cols, owner)
}

//! Independent reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robmean::{Dataset, PackingInstance, PsdFactor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= 1e-14 * a.norm().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

pub fn jacobi_max(m: &DMatrix<f64>) -> f64 {
    *jacobi_eigenvalues(m).last().unwrap()
}

/// A packing instance whose constraint matrices are all diagonal, so the
/// spectral constraint is the row system `sum_i w_i b[i][j] <= rho`.
#[derive(Debug, Clone)]
pub struct DiagonalInstance {
    pub u: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub caps: Vec<f64>,
    pub rho: f64,
}

impl DiagonalInstance {
    pub fn random(rng: &mut impl Rng, n: usize, d: usize) -> Self {
        let u = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let b = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..2.0)).collect();
                // every factor needs a nonzero direction
                row[i % d] += 0.1;
                row
            })
            .collect();
        let caps = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let rho = rng.gen_range(0.5..3.0);
        Self { u, b, caps, rho }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn d(&self) -> usize {
        self.b[0].len()
    }

    pub fn packing(&self) -> PackingInstance {
        let d = self.d();
        let factors = self
            .b
            .iter()
            .map(|row| {
                let dirs = (0..d)
                    .filter(|&j| row[j] > 0.0)
                    .map(|j| {
                        let mut v = DVector::zeros(d);
                        v[j] = row[j].sqrt();
                        v
                    })
                    .collect();
                PsdFactor::new(1.0, dirs)
            })
            .collect();
        PackingInstance::new(self.u.clone(), factors, self.caps.clone(), self.rho).unwrap()
    }

    pub fn row_load(&self, w: &[f64], j: usize) -> f64 {
        (0..self.n()).map(|i| w[i] * self.b[i][j]).sum()
    }

    pub fn feasible(&self, w: &[f64], slack: f64) -> bool {
        (0..self.n()).all(|i| w[i] >= -slack && w[i] <= self.caps[i] + slack)
            && (0..self.d()).all(|j| self.row_load(w, j) <= self.rho * (1.0 + slack))
    }

    /// Exact LP optimum `max u.w` by enumerating vertices: each variable sits
    /// at a bound or is free, and the free ones are pinned by as many tight rows.
    pub fn lp_optimum(&self) -> f64 {
        let n = self.n();
        let d = self.d();
        let mut best = f64::NEG_INFINITY;
        for_each_state(n, d, |state, free| {
            for rows in subsets(d, free.len()) {
                if let Some(w) = self.pin(state, free, &rows) {
                    if self.feasible(&w, 1e-9) {
                        let obj: f64 = w.iter().zip(&self.u).map(|(w, u)| w * u).sum();
                        best = best.max(obj);
                    }
                }
            }
        });
        best
    }

    fn pin(&self, state: &[u8], free: &[usize], rows: &[usize]) -> Option<Vec<f64>> {
        let mut w: Vec<f64> = state
            .iter()
            .zip(&self.caps)
            .map(|(s, c)| if *s == 1 { *c } else { 0.0 })
            .collect();
        if free.is_empty() {
            return Some(w);
        }
        let k = free.len();
        let a = DMatrix::from_fn(k, k, |r, c| self.b[free[c]][rows[r]]);
        let rhs = DVector::from_fn(k, |r, _| self.rho - self.row_load(&w, rows[r]));
        let sol = a.lu().solve(&rhs)?;
        for (c, &i) in free.iter().enumerate() {
            w[i] = sol[c];
        }
        Some(w)
    }

    /// Exact optimum of `min sum (u_i - z_i)^2` over the same feasible set, by
    /// enumerating KKT patterns (active rows, variables at 0 / cap / interior).
    pub fn ls_optimum(&self) -> f64 {
        let n = self.n();
        let d = self.d();
        let mut best = f64::INFINITY;
        for active in 0..(1usize << d) {
            let rows: Vec<usize> = (0..d).filter(|j| active >> j & 1 == 1).collect();
            let mut state = vec![0u8; n];
            loop {
                if let Some(z) = self.kkt_point(&state, &rows) {
                    if self.feasible(&z, 1e-9) {
                        let obj: f64 = z.iter().zip(&self.u).map(|(z, u)| (u - z) * (u - z)).sum();
                        best = best.min(obj);
                    }
                }
                if !advance(&mut state, 3) {
                    break;
                }
            }
        }
        best
    }

    /// Interior variables follow `z_i = u_i - sum_j mu_j b_ij / 2`; the
    /// multipliers make the active rows tight and must be nonnegative.
    fn kkt_point(&self, state: &[u8], rows: &[usize]) -> Option<Vec<f64>> {
        let n = self.n();
        let base: Vec<f64> = (0..n)
            .map(|i| match state[i] {
                0 => 0.0,
                1 => self.caps[i],
                _ => self.u[i],
            })
            .collect();
        let k = rows.len();
        let mu = if k == 0 {
            DVector::zeros(0)
        } else {
            let interior: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
            let a = DMatrix::from_fn(k, k, |r, c| {
                interior
                    .iter()
                    .map(|&i| self.b[i][rows[r]] * self.b[i][rows[c]])
                    .sum::<f64>()
                    / 2.0
            });
            let rhs = DVector::from_fn(k, |r, _| self.row_load(&base, rows[r]) - self.rho);
            let mu = a.lu().solve(&rhs)?;
            if mu.iter().any(|m| *m < -1e-12) {
                return None;
            }
            mu
        };
        let mut z = base;
        for i in 0..n {
            if state[i] == 2 {
                z[i] -= rows.iter().enumerate().map(|(r, &j)| mu[r] * self.b[i][j]).sum::<f64>() / 2.0;
            }
        }
        // sign conditions on the bound multipliers
        for i in 0..n {
            let g = 2.0 * (z[i] - self.u[i]) + rows.iter().enumerate().map(|(r, &j)| mu[r] * self.b[i][j]).sum::<f64>();
            let ok = match state[i] {
                0 => g >= -1e-9,
                1 => g <= 1e-9,
                _ => true,
            };
            if !ok {
                return None;
            }
        }
        Some(z)
    }
}

/// Calls `f(state, free)` for every assignment of `{0: lower, 1: cap, 2: free}`
/// with at most `max_free` free variables.
fn for_each_state(n: usize, max_free: usize, mut f: impl FnMut(&[u8], &[usize])) {
    let mut state = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        if free.len() <= max_free {
            f(&state, &free);
        }
        if !advance(&mut state, 3) {
            break;
        }
    }
}

fn advance(state: &mut [u8], base: u8) -> bool {
    for s in state.iter_mut() {
        *s += 1;
        if *s < base {
            return true;
        }
        *s = 0;
    }
    false
}

pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0usize..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

/// Tight Gaussian inliers `N(0, 0.25^2 I)` followed by `k` outliers placed at
/// distance `10..20 sqrt(d)` from the origin in random directions.
pub fn planted(rng: &mut impl Rng, n: usize, d: usize, k: usize) -> Dataset {
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n - k {
        rows.push((0..d).map(|_| 0.25 * gaussian(rng)).collect::<Vec<f64>>());
    }
    for _ in 0..k {
        let dir: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let r = rng.gen_range(10.0..20.0) * (d as f64).sqrt();
        rows.push(dir.iter().map(|v| v / norm * r).collect());
    }
    Dataset::from_rows(&rows).unwrap()
}

/// `lambda_max` of `sum_i (1 - h_i)(y_i - x)(y_i - x)^T`, computed densely.
pub fn residual_lambda(data: &Dataset, x: &DVector<f64>, h: &[f64]) -> f64 {
    let d = data.d();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..data.n() {
        let c = data.row(i) - x;
        m += &c * c.transpose() * (1.0 - h[i]);
    }
    jacobi_max(&m)
}

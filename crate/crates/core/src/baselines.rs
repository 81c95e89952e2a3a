//! Reference estimators: sample mean, coordinate-wise median, geometric
//! median, and spectral iterative filtering.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub fn sample_mean(data: &Dataset) -> DVector<f64> {
    data.mean()
}

/// Per-coordinate median. Even counts average the two middle order statistics.
pub fn coordinate_median(data: &Dataset) -> DVector<f64> {
    let n = data.n();
    let mut col = vec![0.0; n];
    DVector::from_fn(data.d(), |j, _| {
        for (i, c) in col.iter_mut().enumerate() {
            *c = data.samples()[(i, j)];
        }
        col.sort_by(f64::total_cmp);
        if n % 2 == 1 {
            col[n / 2]
        } else {
            0.5 * (col[n / 2 - 1] + col[n / 2])
        }
    })
}

const WEISZFELD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMedian {
    pub point: DVector<f64>,
    /// `sum_i ||y_i - point||`
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn distance_sum(data: &Dataset, x: &DVector<f64>) -> f64 {
    (0..data.n()).map(|i| (data.row(i) - x).norm()).sum()
}

/// Weiszfeld iteration from the coordinate-wise median. Stops when the
/// gradient norm of the mean distance drops to `tol`. A sample point is
/// returned exactly when it satisfies the subgradient optimality condition.
pub fn geometric_median(data: &Dataset, tol: f64, max_iter: usize) -> Result<GeometricMedian> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tol must be > 0, got {tol}")));
    }
    let n = data.n();
    let rows: Vec<DVector<f64>> = (0..n).map(|i| data.row(i)).collect();
    let mut x = coordinate_median(data);
    let mut best = (distance_sum(data, &x), x.clone());
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut num = DVector::zeros(data.d());
        let mut den = 0.0;
        let mut grad = DVector::zeros(data.d());
        for y in &rows {
            let diff = &x - y;
            let dist = diff.norm().max(WEISZFELD_FLOOR);
            num += y / dist;
            den += 1.0 / dist;
            if diff.norm() > 0.0 {
                grad += diff / dist;
            }
        }
        if grad.norm() / n as f64 <= tol {
            converged = true;
            break;
        }
        x = num / den;
        let f = distance_sum(data, &x);
        if f < best.0 {
            best = (f, x.clone());
        }
    }

    // exact check at sample points: y_k is optimal iff ||sum_{i != k} unit(y_k - y_i)|| <= #copies of y_k
    for y in &rows {
        let mut g = DVector::zeros(data.d());
        let mut copies = 0.0;
        for z in &rows {
            let diff = y - z;
            let dist = diff.norm();
            if dist == 0.0 {
                copies += 1.0;
            } else {
                g += diff / dist;
            }
        }
        if g.norm() <= copies {
            let f = distance_sum(data, y);
            if f <= best.0 {
                best = (f, y.clone());
                converged = true;
            }
            break;
        }
    }

    let (objective, point) = best;
    Ok(GeometricMedian {
        point,
        objective,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Stop once the top covariance eigenvalue is at most `spectral_threshold * sigma^2`.
    pub spectral_threshold: f64,
    /// Fraction of the remaining points dropped per round.
    pub removal_fraction: f64,
    pub max_rounds: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            spectral_threshold: 2.0,
            removal_fraction: 0.02,
            max_rounds: 50,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.removal_fraction > 0.0 && self.removal_fraction < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "removal_fraction must lie in (0, 0.5), got {}",
                self.removal_fraction
            )));
        }
        if self.spectral_threshold.is_nan() || self.spectral_threshold < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "spectral_threshold must be >= 1, got {}",
                self.spectral_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterStop {
    SpectralBound,
    MaxRounds,
    /// `floor(removal_fraction * m)` reached zero
    NothingToRemove,
    /// fewer than two points would survive
    TooFewSurvivors,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub mean: DVector<f64>,
    pub survivors: Vec<usize>,
    pub rounds: usize,
    pub stop: FilterStop,
}

/// Spectral filtering: repeatedly drop the points with the largest squared
/// projection on the top eigenvector of the empirical covariance.
pub fn iterative_filter(data: &Dataset, sigma: f64, cfg: &FilterConfig) -> Result<FilterResult> {
    cfg.validate()?;
    if data.n() < 2 {
        return Err(Error::InvalidArgument("iterative_filter needs n >= 2".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
    }
    let d = data.d();
    let mut alive: Vec<usize> = (0..data.n()).collect();
    let mut rounds = 0;
    let limit = cfg.spectral_threshold * sigma * sigma;

    let mean_of = |idx: &[usize]| {
        let mut m = DVector::zeros(d);
        for &i in idx {
            m += data.samples().row(i).transpose();
        }
        m / idx.len() as f64
    };

    let stop = loop {
        let m = alive.len();
        let mean = mean_of(&alive);
        let centered = DMatrix::from_fn(d, m, |j, c| data.samples()[(alive[c], j)] - mean[j]);
        let cov = (&centered * centered.transpose()) / m as f64;
        let eig = SymmetricEigen::new(cov);
        let top = eig.eigenvalues.imax();
        if eig.eigenvalues[top] <= limit {
            break FilterStop::SpectralBound;
        }
        if rounds >= cfg.max_rounds {
            break FilterStop::MaxRounds;
        }
        let k = (cfg.removal_fraction * m as f64).floor() as usize;
        if k == 0 {
            break FilterStop::NothingToRemove;
        }
        if m - k < 2 {
            break FilterStop::TooFewSurvivors;
        }
        let v = eig.eigenvectors.column(top);
        let scores = centered.transpose() * v;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            (scores[b] * scores[b])
                .total_cmp(&(scores[a] * scores[a]))
                .then(a.cmp(&b))
        });
        let mut drop = vec![false; m];
        for &c in &order[..k] {
            drop[c] = true;
        }
        alive = alive
            .iter()
            .zip(&drop)
            .filter(|(_, &dr)| !dr)
            .map(|(&i, _)| i)
            .collect();
        rounds += 1;
    };

    Ok(FilterResult {
        mean: mean_of(&alive),
        survivors: alive,
        rounds,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coordinate_median_examples() {
        let one = Dataset::from_rows(&[vec![3.0, -1.0]]).unwrap();
        assert_eq!(coordinate_median(&one), DVector::from_vec(vec![3.0, -1.0]));
        let odd = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![100.0]]).unwrap();
        assert_eq!(coordinate_median(&odd)[0], 2.0);
        let even = Dataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 10.0], vec![2.0, 0.0], vec![3.0, 10.0]]).unwrap();
        assert_eq!(coordinate_median(&even), DVector::from_vec(vec![1.5, 5.0]));
    }

    #[test]
    fn geometric_median_identical_points() {
        let data = Dataset::from_rows(&vec![vec![1.0, 2.0]; 4]).unwrap();
        let gm = geometric_median(&data, 1e-10, 100).unwrap();
        assert_eq!(gm.point, DVector::from_vec(vec![1.0, 2.0]));
        assert!(gm.converged);
    }

    #[test]
    fn geometric_median_triangle() {
        let h = 3f64.sqrt() / 2.0;
        let data = Dataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, h]]).unwrap();
        let gm = geometric_median(&data, 1e-12, 10_000).unwrap();
        assert_abs_diff_eq!(gm.point[0], 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(gm.point[1], h / 3.0, epsilon = 1e-8);
    }

    #[test]
    fn geometric_median_one_dimensional() {
        let data = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![5.0], vec![7.0], vec![50.0]]).unwrap();
        let gm = geometric_median(&data, 1e-10, 1000).unwrap();
        let cm = coordinate_median(&data);
        assert_abs_diff_eq!(gm.objective, distance_sum(&data, &cm), epsilon = 1e-8);
    }

    #[test]
    fn filter_rejects_bad_config() {
        let data = Dataset::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let bad = FilterConfig {
            removal_fraction: 0.5,
            ..FilterConfig::default()
        };
        assert!(iterative_filter(&data, 1.0, &bad).is_err());
        let bad = FilterConfig {
            spectral_threshold: 0.5,
            ..FilterConfig::default()
        };
        assert!(iterative_filter(&data, 1.0, &bad).is_err());
        assert!(iterative_filter(&data, 0.0, &FilterConfig::default()).is_err());
    }

    #[test]
    fn filter_clean_data_stops_immediately() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i % 5) as f64 * 0.1, (i % 3) as f64 * 0.1])
            .collect();
        let data = Dataset::from_rows(&rows).unwrap();
        let r = iterative_filter(&data, 1.0, &FilterConfig::default()).unwrap();
        assert_eq!(r.rounds, 0);
        assert_eq!(r.stop, FilterStop::SpectralBound);
        assert_eq!(r.mean, data.mean());
    }
}

//! Exhaustive test oracles and the sigma calibration helper.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::MomentBound;
use crate::spectral::max_eigenvalue_dense;

/// Largest `n` accepted by [`brute_force_l0`].
pub const BRUTE_FORCE_MAX_N: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceL0 {
    pub min_l0: usize,
    /// Removed indices of the witness, in increasing order.
    pub support: Vec<usize>,
    /// Mean of the kept rows of the witness.
    pub mean: DVector<f64>,
    /// `lambda_max` of the witness scatter around `mean`.
    pub lambda: f64,
    /// Number of feasible supports of size `min_l0`.
    pub witnesses: usize,
}

/// Minimum number of removed points such that the rest, centered at their own
/// mean, satisfy the scatter bound. Supports are enumerated by increasing
/// size; among minimum ones the witness has the smallest `lambda_max`, ties
/// going to the first in lexicographic order.
pub fn brute_force_l0(data: &Dataset, bound: &MomentBound) -> Result<BruteForceL0> {
    let n = data.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::SizeLimit {
            size: n,
            limit: BRUTE_FORCE_MAX_N,
            context: "brute_force_l0",
        });
    }
    let rho = bound.rho();
    let d = data.d();
    let mut masks: Vec<u32> = (0..(1u32 << n) - 1).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));

    let mut best: Option<BruteForceL0> = None;
    for removed in masks {
        let size = removed.count_ones() as usize;
        if let Some(b) = &best {
            if size > b.min_l0 {
                break;
            }
        }
        let kept: Vec<usize> = (0..n).filter(|i| removed >> i & 1 == 0).collect();
        let mut mean = DVector::zeros(d);
        for &i in &kept {
            mean += data.samples().row(i).transpose();
        }
        mean /= kept.len() as f64;
        let centered = DMatrix::from_fn(d, kept.len(), |j, c| data.samples()[(kept[c], j)] - mean[j]);
        let lambda = max_eigenvalue_dense(&(&centered * centered.transpose()));
        if lambda > rho {
            continue;
        }
        let support: Vec<usize> = (0..n).filter(|i| removed >> i & 1 == 1).collect();
        match &mut best {
            None => {
                best = Some(BruteForceL0 {
                    min_l0: size,
                    support,
                    mean,
                    lambda,
                    witnesses: 1,
                })
            }
            Some(b) => {
                b.witnesses += 1;
                if lambda < b.lambda {
                    b.support = support;
                    b.mean = mean;
                    b.lambda = lambda;
                }
            }
        }
    }
    // a single kept point has zero scatter, so some support is always feasible
    Ok(best.expect("a singleton kept set is always feasible"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCalibration {
    pub sigma: f64,
    /// Always true: this estimate is a heuristic, not part of the estimator.
    pub heuristic: bool,
    pub warnings: Vec<String>,
}

/// `sqrt(lambda_max)` of the `1/m` covariance of a subset assumed clean.
pub fn calibrate_sigma(clean_subset: &Dataset) -> SigmaCalibration {
    let m = clean_subset.n();
    let d = clean_subset.d();
    let mean = clean_subset.mean();
    let centered = DMatrix::from_fn(d, m, |j, i| clean_subset.samples()[(i, j)] - mean[j]);
    let lambda = max_eigenvalue_dense(&(&centered * centered.transpose())) / m as f64;
    let sigma = lambda.max(0.0).sqrt();
    let mut warnings = Vec::new();
    if 4 * m < d {
        warnings.push(format!(
            "subset of {m} rows is small for dimension {d}; estimate is unreliable"
        ));
    }
    if sigma == 0.0 {
        warnings.push("subset has zero spread; sigma is degenerate".into());
    }
    SigmaCalibration {
        sigma,
        heuristic: true,
        warnings,
    }
}

/// Scale at which the scatter bound equals the expected top eigenvalue of the
/// inlier scatter, for `(1 - alpha) n` isotropic unit-variance Gaussian
/// inliers in dimension `d` (Marchenko-Pastur edge). A heuristic that needs
/// the corruption fraction and inlier law to be known.
pub fn gaussian_sigma(d: usize, n: usize, alpha: f64, c1_squared: f64) -> Result<f64> {
    if d == 0 || n == 0 || !(0.0..1.0).contains(&alpha) || !(c1_squared > 0.0 && c1_squared.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gaussian_sigma needs d, n >= 1, alpha in [0, 1) and c1_squared > 0; got d={d}, n={n}, alpha={alpha}, c1_squared={c1_squared}"
        )));
    }
    let inliers = (1.0 - alpha) * n as f64;
    let edge = (1.0 + (d as f64 / inliers).sqrt()).powi(2);
    Ok((inliers * edge / (c1_squared * n as f64)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_sigma_values() {
        let s = gaussian_sigma(100, 2000, 0.3, 1.5).unwrap();
        assert!((s - 0.8657).abs() < 1e-3, "{s}");
        let s = gaussian_sigma(100, 2000, 0.1, 1.5).unwrap();
        assert!((s - 0.9572).abs() < 1e-3, "{s}");
        assert!(gaussian_sigma(10, 100, 1.0, 1.5).is_err());
    }

    #[test]
    fn size_limit() {
        let data = Dataset::from_rows(&vec![vec![0.0]; 15]).unwrap();
        let b = MomentBound::new(1.0, 1.5, 15).unwrap();
        assert!(matches!(brute_force_l0(&data, &b), Err(Error::SizeLimit { .. })));
    }

    #[test]
    fn clean_cluster_needs_no_removal() {
        let data = Dataset::from_rows(&[vec![0.0], vec![0.1], vec![-0.1]]).unwrap();
        let b = MomentBound::new(1.0, 1.5, 3).unwrap();
        let r = brute_force_l0(&data, &b).unwrap();
        assert_eq!(r.min_l0, 0);
        assert_eq!(r.witnesses, 1);
    }

    #[test]
    fn planted_instance() {
        let data =
            Dataset::from_rows(&[vec![-0.1], vec![-0.05], vec![0.05], vec![0.1], vec![10.0], vec![-10.0]]).unwrap();
        let b = MomentBound::new(1.0, 1.5, 6).unwrap();
        let r = brute_force_l0(&data, &b).unwrap();
        assert_eq!(r.min_l0, 2);
        assert_eq!(r.support, vec![4, 5]);
        assert!(r.mean[0].abs() < 1e-15);
    }

    #[test]
    fn calibration_degenerate_and_scaling() {
        let same = Dataset::from_rows(&vec![vec![1.0, 2.0]; 8]).unwrap();
        let c = calibrate_sigma(&same);
        assert_eq!(c.sigma, 0.0);
        assert!(!c.warnings.is_empty());

        let rows = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.5], vec![0.0, -0.5]];
        let a = calibrate_sigma(&Dataset::from_rows(&rows).unwrap()).sigma;
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| -3.0 * v).collect()).collect();
        let b = calibrate_sigma(&Dataset::from_rows(&scaled).unwrap()).sigma;
        assert!((b - 3.0 * a).abs() < 1e-12);
    }
}

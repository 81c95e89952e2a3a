//! Seeded generators for corrupted datasets.
//!
//! Randomness comes from ChaCha20 seeded with `seed_from_u64(seed)`, one
//! stream per block: stream 0 for inliers, stream 1 for the first outlier
//! block, stream 2 for the second. Uniforms are `(next_u64 >> 11) * 2^-53`
//! and standard normals come in Box-Muller pairs
//! `sqrt(-2 ln(1 - u1)) * (cos, sin)(2 pi u2)`, consumed cosine first.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};

const STREAM_INLIERS: u64 = 0;
const STREAM_BLOCK_ONE: u64 = 1;
const STREAM_BLOCK_TWO: u64 = 2;

/// Maximum corruption fraction accepted by the generators.
pub const MAX_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    /// Inliers `N(0, I)`; half the outliers `|N(0, I)|`, the rest `N(0, I) + U(0, 3)` per entry.
    A,
    /// Inliers `N(0, I)`; outliers split between `(s, s, 0, ...)` and `(s, -s, 0, ...)`, `s = sqrt(d / 2)`.
    B,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedDataset {
    /// Samples, labelled with `inlier_mask`.
    pub data: Dataset,
    pub inlier_mask: Vec<bool>,
    /// Mean of the uncorrupted rows.
    pub oracle_mean: DVector<f64>,
    pub seed: Option<u64>,
    pub setting: Setting,
}

impl CorruptedDataset {
    fn assemble(samples: DMatrix<f64>, inlier_mask: Vec<bool>, seed: Option<u64>, setting: Setting) -> Result<Self> {
        let data = Dataset::new(samples)?.with_labels(inlier_mask.clone())?;
        let oracle_mean = masked_mean(&data, &inlier_mask)?;
        Ok(Self {
            data,
            inlier_mask,
            oracle_mean,
            seed,
            setting,
        })
    }

    pub fn outlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|m| !**m).count()
    }
}

fn masked_mean(data: &Dataset, mask: &[bool]) -> Result<DVector<f64>> {
    let idx: Vec<usize> = (0..data.n()).filter(|&i| mask[i]).collect();
    crate::estimator::update_mean(data, &idx)
}

/// `round(alpha * n)` with halves rounded up.
pub fn outlier_count(alpha: f64, n: usize) -> usize {
    (alpha * n as f64 + 0.5).floor() as usize
}

struct Stream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl Stream {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * t.sin());
        r * t.cos()
    }
}

fn check_params(d: usize, n: usize, alpha: f64, min_d: usize) -> Result<usize> {
    if d < min_d {
        return Err(Error::InvalidArgument(format!("d must be >= {min_d}, got {d}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be >= 2, got {n}")));
    }
    if !(0.0..MAX_ALPHA).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 0.5), got {alpha}"
        )));
    }
    Ok(outlier_count(alpha, n))
}

/// Inliers in the first `n - k` rows, outliers in the last `k`.
fn layout(d: usize, n: usize, k: usize, seed: u64, mut outlier: impl FnMut(usize, &mut [f64])) -> DMatrix<f64> {
    let mut samples = DMatrix::zeros(n, d);
    let mut inl = Stream::new(seed, STREAM_INLIERS);
    for i in 0..n - k {
        for j in 0..d {
            samples[(i, j)] = inl.gaussian();
        }
    }
    let mut row = vec![0.0; d];
    for r in 0..k {
        outlier(r, &mut row);
        for j in 0..d {
            samples[(n - k + r, j)] = row[j];
        }
    }
    samples
}

fn mask(n: usize, k: usize) -> Vec<bool> {
    (0..n).map(|i| i < n - k).collect()
}

pub fn gen_setting_a(d: usize, n: usize, alpha: f64, seed: u64) -> Result<CorruptedDataset> {
    let k = check_params(d, n, alpha, 1)?;
    let first = k.div_ceil(2);
    let mut one = Stream::new(seed, STREAM_BLOCK_ONE);
    let mut two = Stream::new(seed, STREAM_BLOCK_TWO);
    let samples = layout(d, n, k, seed, |r, row| {
        for v in row.iter_mut() {
            *v = if r < first {
                one.gaussian().abs()
            } else {
                let g = two.gaussian();
                g + 3.0 * two.uniform()
            };
        }
    });
    CorruptedDataset::assemble(samples, mask(n, k), Some(seed), Setting::A)
}

pub fn gen_setting_b(d: usize, n: usize, alpha: f64, seed: u64) -> Result<CorruptedDataset> {
    let k = check_params(d, n, alpha, 2)?;
    let first = k.div_ceil(2);
    let s = (d as f64 / 2.0).sqrt();
    let samples = layout(d, n, k, seed, |r, row| {
        row.fill(0.0);
        row[0] = s;
        row[1] = if r < first { s } else { -s };
    });
    CorruptedDataset::assemble(samples, mask(n, k), Some(seed), Setting::B)
}

/// Replaces the rows at `indices` with the rows of `replacements`. With no
/// indices the replacements are ignored and the data is returned unchanged.
pub fn corrupt(clean: &Dataset, replacements: &Dataset, indices: &[usize]) -> Result<CorruptedDataset> {
    let n = clean.n();
    if indices.is_empty() {
        return CorruptedDataset::assemble(clean.samples().clone(), vec![true; n], None, Setting::Custom);
    }
    check_dim(indices.len(), replacements.n(), "replacement count")?;
    check_dim(clean.d(), replacements.d(), "replacement dimension")?;
    if 2 * indices.len() > n {
        return Err(Error::InvalidArgument(format!(
            "at most n/2 rows may be replaced, got {} of {n}",
            indices.len()
        )));
    }
    let mut inlier = vec![true; n];
    let mut samples = clean.samples().clone();
    for (r, &i) in indices.iter().enumerate() {
        if i >= n {
            return Err(Error::InvalidArgument(format!("index {i} out of range")));
        }
        if !inlier[i] {
            return Err(Error::InvalidArgument(format!("duplicate index {i}")));
        }
        inlier[i] = false;
        samples.set_row(i, &replacements.samples().row(r));
    }
    CorruptedDataset::assemble(samples, inlier, None, Setting::Custom)
}

/// `||estimate - oracle_mean||_2`
pub fn recovery_error(estimate: &DVector<f64>, ds: &CorruptedDataset) -> Result<f64> {
    check_dim(ds.oracle_mean.len(), estimate.len(), "estimate dimension")?;
    Ok((estimate - &ds.oracle_mean).norm())
}

/// Writes `x0,...,x{d-1}[,is_inlier]` with 17 significant digits.
pub fn write_csv(data: &Dataset, mut out: impl Write) -> Result<()> {
    let d = data.d();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    if data.labels().is_some() {
        header.push("is_inlier".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.n() {
        let mut line = String::new();
        for j in 0..d {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{:.16e}", data.samples()[(i, j)]));
        }
        if let Some(l) = data.labels() {
            line.push_str(if l[i] { ",1" } else { ",0" });
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_csv_file(data: &Dataset, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_csv(data, &mut w)?;
    w.flush()?;
    Ok(())
}

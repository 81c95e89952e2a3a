//! Multi-trial experiments over generated or ingested data.

mod io;
mod oracle;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{coordinate_median, geometric_median, iterative_filter, sample_mean, FilterConfig};
use crate::datagen::{gen_setting_a, gen_setting_b, CorruptedDataset, MAX_ALPHA};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{robust_mean, EstimatorConfig, Method, MomentBound};
use crate::solvers::IrlsConfig;

pub use io::{ingest_csv, read_csv, write_results_csv, write_results_json, RESULT_HEADER};
pub use oracle::{brute_force_l0, calibrate_sigma, gaussian_sigma, BruteForceL0, SigmaCalibration, BRUTE_FORCE_MAX_N};

const GMEDIAN_TOL: f64 = 1e-8;
const GMEDIAN_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    A,
    B,
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Mean,
    Cmedian,
    Gmedian,
    Filter,
    L1,
    Lp,
}

impl MethodName {
    pub const ALL: [MethodName; 6] = [
        MethodName::Mean,
        MethodName::Cmedian,
        MethodName::Gmedian,
        MethodName::Filter,
        MethodName::L1,
        MethodName::Lp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Mean => "mean",
            MethodName::Cmedian => "cmedian",
            MethodName::Gmedian => "gmedian",
            MethodName::Filter => "filter",
            MethodName::L1 => "l1",
            MethodName::Lp => "lp",
        }
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub source: Source,
    pub d: usize,
    pub n: usize,
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<MethodName>,
    pub sigma: f64,
    pub c1_squared: f64,
    pub p: f64,
    pub tau: f64,
    pub seed: u64,
    /// Known inlier mean for ingested data without labels.
    pub oracle_mean: Option<Vec<f64>>,
    /// Record wall time per method; off by default so outputs stay reproducible.
    pub timing: bool,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            source: Source::B,
            d: 100,
            n: 2000,
            alphas: vec![0.2],
            trials: 20,
            methods: MethodName::ALL.to_vec(),
            sigma: 1.0,
            c1_squared: 1.5,
            p: 0.5,
            tau: 0.5,
            seed: 0,
            oracle_mean: None,
            timing: false,
            output: None,
            format: OutputFormat::Csv,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidArgument(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

impl ExperimentSpec {
    /// Sets one field from a `key=value` pair using the CLI flag names.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "setting" => {
                self.source = match value.trim().to_ascii_lowercase().as_str() {
                    "a" => Source::A,
                    "b" => Source::B,
                    _ => return Err(Error::InvalidArgument(format!("setting must be a or b, got {value:?}"))),
                }
            }
            "csv" | "input" => self.source = Source::Csv(PathBuf::from(value.trim())),
            "d" => self.d = parse_num(key, value)?,
            "n" => self.n = parse_num(key, value)?,
            "alpha" | "alphas" => self.alphas = parse_list(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "sigma" => self.sigma = parse_num(key, value)?,
            "c1sq" | "c1_squared" => self.c1_squared = parse_num(key, value)?,
            "p" => self.p = parse_num(key, value)?,
            "tau" => self.tau = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "oracle-mean" | "oracle_mean" => self.oracle_mean = Some(parse_list(key, value)?),
            "timing" => self.timing = parse_bool(key, value)?,
            "out" | "output" => self.output = Some(PathBuf::from(value.trim())),
            "format" => {
                self.format = match value.trim() {
                    "csv" => OutputFormat::Csv,
                    "json" => OutputFormat::Json,
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "format must be csv or json, got {value:?}"
                        )))
                    }
                }
            }
            other => return Err(Error::InvalidArgument(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("methods must be non-empty".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidArgument("alphas must be non-empty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..MAX_ALPHA).contains(*a)) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 0.5), got {a}")));
        }
        MomentBound::new(self.sigma, self.c1_squared, 1)?;
        IrlsConfig {
            p: self.p,
            ..IrlsConfig::default()
        }
        .validate()?;
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::InvalidArgument(format!(
                "tau must lie in [0, 1), got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: MethodName,
    pub alpha: f64,
    pub d: usize,
    pub n: usize,
    /// Trial index, or `mean` for aggregate rows.
    pub trial: String,
    pub recovery_error: Option<f64>,
    pub outer_iterations: Option<f64>,
    pub wall_time_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ResultRow {
    pub fn is_aggregate(&self) -> bool {
        self.trial == AGGREGATE
    }
}

const AGGREGATE: &str = "mean";

struct MethodOutcome {
    /// Recovery error and iteration count.
    estimate: Result<(f64, usize)>,
    wall_ms: f64,
}

/// Runs a single method. Iteration counts are outer iterations for the
/// relaxations, Weiszfeld steps for the geometric median, filter rounds for
/// the filter, and zero otherwise.
pub fn run_method(method: MethodName, data: &Dataset, spec: &ExperimentSpec) -> Result<(DVector<f64>, usize)> {
    match method {
        MethodName::Mean => Ok((sample_mean(data), 0)),
        MethodName::Cmedian => Ok((coordinate_median(data), 0)),
        MethodName::Gmedian => {
            let g = geometric_median(data, GMEDIAN_TOL, GMEDIAN_MAX_ITER)?;
            Ok((g.point, g.iterations))
        }
        MethodName::Filter => {
            let f = iterative_filter(data, spec.sigma, &FilterConfig::default())?;
            Ok((f.mean, f.rounds))
        }
        MethodName::L1 | MethodName::Lp => {
            let bound = MomentBound::new(spec.sigma, spec.c1_squared, data.n())?;
            let cfg = EstimatorConfig {
                method: if method == MethodName::L1 {
                    Method::L1
                } else {
                    Method::Lp(IrlsConfig {
                        p: spec.p,
                        ..IrlsConfig::default()
                    })
                },
                tau: spec.tau,
                ..EstimatorConfig::default()
            };
            let r = robust_mean(data, &bound, &cfg)?;
            if !r.trace_is_monotone(data.n(), cfg.max_outer) {
                return Err(Error::InvalidArgument(format!(
                    "support-size trace {:?} is not strictly decreasing",
                    r.l0_trace
                )));
            }
            Ok((r.mean, r.outer_iterations))
        }
    }
}

struct Unit {
    alpha: f64,
    trial: usize,
    /// Ingested data with its oracle mean; generated units build theirs on the worker.
    data: Option<(Dataset, Option<DVector<f64>>)>,
}

fn load_units(spec: &ExperimentSpec) -> Result<Vec<Unit>> {
    if let Source::Csv(path) = &spec.source {
        let data = ingest_csv(path)?;
        let oracle = match (&spec.oracle_mean, data.labels()) {
            (Some(m), _) => {
                crate::error::check_dim(data.d(), m.len(), "oracle mean dimension")?;
                Some(DVector::from_vec(m.clone()))
            }
            (None, Some(l)) => {
                let idx: Vec<usize> = (0..data.n()).filter(|&i| l[i]).collect();
                Some(crate::estimator::update_mean(&data, &idx)?)
            }
            (None, None) => None,
        };
        let alpha = data
            .labels()
            .map_or(0.0, |l| l.iter().filter(|v| !**v).count() as f64 / data.n() as f64);
        return Ok(vec![Unit {
            alpha,
            trial: 0,
            data: Some((data, oracle)),
        }]);
    }
    let mut units = Vec::new();
    for &alpha in &spec.alphas {
        for trial in 0..spec.trials {
            units.push(Unit {
                alpha,
                trial,
                data: None,
            });
        }
    }
    Ok(units)
}

fn generate(spec: &ExperimentSpec, alpha: f64, trial: usize) -> Result<CorruptedDataset> {
    let seed = spec.seed.wrapping_add(trial as u64);
    match spec.source {
        Source::A => gen_setting_a(spec.d, spec.n, alpha, seed),
        _ => gen_setting_b(spec.d, spec.n, alpha, seed),
    }
}

/// Runs every method on every `(alpha, trial)` dataset. Rows are ordered by
/// method, then alpha, then trial, with one aggregate row closing each
/// `(method, alpha)` group. Trials run in parallel; the output does not
/// depend on scheduling unless `timing` is set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let units = load_units(spec)?;

    let results: Vec<(f64, usize, usize, usize, Vec<MethodOutcome>)> = units
        .into_par_iter()
        .map(|unit| {
            let prepared = match unit.data {
                Some(loaded) => Ok(loaded),
                None => generate(spec, unit.alpha, unit.trial).map(|ds| (ds.data, Some(ds.oracle_mean))),
            };
            let (d, n, outcomes) = match prepared {
                Ok((data, oracle)) => {
                    let outcomes = spec
                        .methods
                        .iter()
                        .map(|&m| {
                            let start = Instant::now();
                            let est = run_method(m, &data, spec);
                            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                            let estimate = est.and_then(|(x, it)| {
                                let o = oracle
                                    .as_ref()
                                    .ok_or_else(|| Error::InvalidArgument("no oracle mean available".into()))?;
                                crate::error::check_dim(o.len(), x.len(), "estimate dimension")?;
                                Ok(((x - o).norm(), it))
                            });
                            MethodOutcome { estimate, wall_ms }
                        })
                        .collect::<Vec<_>>();
                    (data.d(), data.n(), outcomes)
                }
                Err(e) => (
                    spec.d,
                    spec.n,
                    spec.methods
                        .iter()
                        .map(|_| MethodOutcome {
                            estimate: Err(e.clone()),
                            wall_ms: 0.0,
                        })
                        .collect(),
                ),
            };
            (unit.alpha, unit.trial, d, n, outcomes)
        })
        .collect();

    let mut rows = Vec::new();
    for (mi, &method) in spec.methods.iter().enumerate() {
        let mut alphas: Vec<f64> = Vec::new();
        for r in &results {
            if !alphas.contains(&r.0) {
                alphas.push(r.0);
            }
        }
        for alpha in alphas {
            let mut errs = Vec::new();
            let mut iters = Vec::new();
            let mut times = Vec::new();
            let (mut d, mut n) = (spec.d, spec.n);
            for (a, trial, rd, rn, outcomes) in results.iter().filter(|r| r.0 == alpha) {
                d = *rd;
                n = *rn;
                let o = &outcomes[mi];
                let wall = spec.timing.then_some(o.wall_ms);
                let row = match &o.estimate {
                    Ok((err, it)) => {
                        errs.push(*err);
                        iters.push(*it as f64);
                        if let Some(w) = wall {
                            times.push(w);
                        }
                        ResultRow {
                            method,
                            alpha: *a,
                            d: *rd,
                            n: *rn,
                            trial: trial.to_string(),
                            recovery_error: Some(*err),
                            outer_iterations: Some(*it as f64),
                            wall_time_ms: wall,
                            error: None,
                        }
                    }
                    Err(e) => ResultRow {
                        method,
                        alpha: *a,
                        d: *rd,
                        n: *rn,
                        trial: trial.to_string(),
                        recovery_error: None,
                        outer_iterations: None,
                        wall_time_ms: wall,
                        error: Some(e.to_string()),
                    },
                };
                rows.push(row);
            }
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            rows.push(ResultRow {
                method,
                alpha,
                d,
                n,
                trial: AGGREGATE.into(),
                recovery_error: mean(&errs),
                outer_iterations: mean(&iters),
                wall_time_ms: mean(&times),
                error: errs.is_empty().then(|| "no successful trials".to_string()),
            });
        }
    }
    Ok(rows)
}

/// Aggregate recovery error of `method` at `alpha`, if present.
pub fn aggregate_error(rows: &[ResultRow], method: MethodName, alpha: f64) -> Option<f64> {
    rows.iter()
        .find(|r| r.is_aggregate() && r.method == method && r.alpha == alpha)
        .and_then(|r| r.recovery_error)
}

/// Serializes rows in the requested format.
pub fn render(spec: &ExperimentSpec, rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match spec.format {
        OutputFormat::Csv => write_results_csv(rows, &mut buf)?,
        OutputFormat::Json => write_results_json(spec, rows, &mut buf)?,
    }
    Ok(buf)
}

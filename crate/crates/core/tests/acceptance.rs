//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::time::Instant;

use rand::Rng;

use robmean::datagen::{gen_setting_a, gen_setting_b, CorruptedDataset};
use robmean::harness::{
    aggregate_error, brute_force_l0, gaussian_sigma, render, run_experiment, ExperimentSpec, MethodName, OutputFormat,
    Source,
};
use robmean::solvers::packing_sdp_maximize;
use robmean::spectral::resilience_check;
use robmean::{robust_mean, Dataset, EstimatorConfig, IrlsConfig, MomentBound, SolverOptions};

use common::{planted, residual_lambda, rng, DiagonalInstance};

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn errors(spec: &ExperimentSpec, alpha: f64, methods: &[MethodName]) -> Result<Vec<f64>, String> {
    let rows = run_experiment(spec).map_err(|e| e.to_string())?;
    if let Some(r) = rows.iter().find(|r| r.error.is_some()) {
        return Err(format!("{} trial {}: {}", r.method, r.trial, r.error.as_ref().unwrap()));
    }
    methods
        .iter()
        .map(|&m| aggregate_error(&rows, m, alpha).ok_or_else(|| format!("no aggregate for {m}")))
        .collect()
}

fn criterion_1() -> Outcome {
    let methods = [MethodName::Filter, MethodName::L1, MethodName::Lp];
    let spec = ExperimentSpec {
        source: Source::B,
        d: 100,
        n: 2000,
        alphas: vec![0.2],
        trials: 20,
        methods: methods.to_vec(),
        ..ExperimentSpec::default()
    };
    match errors(&spec, 0.2, &methods) {
        Err(e) => verdict(false, e),
        Ok(e) => {
            let (filter, l1, lp) = (e[0], e[1], e[2]);
            verdict(
                l1 <= 0.04 && lp <= 0.03 && lp <= l1 && l1 < filter,
                format!("filter={filter:.4} l1={l1:.4} lp={lp:.4}"),
            )
        }
    }
}

fn criterion_2() -> Outcome {
    let methods = [MethodName::Cmedian, MethodName::L1, MethodName::Lp];
    let mut pass = true;
    let mut detail = Vec::new();
    for alpha in [0.1, 0.3] {
        let sigma = gaussian_sigma(100, 2000, alpha, 1.5).unwrap();
        let spec = ExperimentSpec {
            source: Source::A,
            d: 100,
            n: 2000,
            alphas: vec![alpha],
            trials: 10,
            methods: methods.to_vec(),
            sigma,
            ..ExperimentSpec::default()
        };
        match errors(&spec, alpha, &methods) {
            Err(e) => return verdict(false, e),
            Ok(e) => {
                let (cmed, l1, lp) = (e[0], e[1], e[2]);
                pass &= l1 <= 0.09 && lp <= 0.09 && l1 < cmed && lp < cmed;
                detail.push(format!(
                    "alpha={alpha} sigma={sigma:.3} cmedian={cmed:.4} l1={l1:.4} lp={lp:.4}"
                ));
            }
        }
    }
    verdict(pass, detail.join("; "))
}

fn criterion_3() -> Outcome {
    let mut errs = Vec::new();
    for n in [200, 500, 2000] {
        let spec = ExperimentSpec {
            source: Source::B,
            d: 100,
            n,
            alphas: vec![0.2],
            trials: 10,
            methods: vec![MethodName::L1],
            ..ExperimentSpec::default()
        };
        match errors(&spec, 0.2, &[MethodName::L1]) {
            Err(e) => return verdict(false, e),
            Ok(e) => errs.push(e[0]),
        }
    }
    verdict(
        errs[0] > errs[1] && errs[1] > errs[2] && errs[2] <= 0.5 * errs[0],
        format!(
            "l1 n=200: {:.4}, n=500: {:.4}, n=2000: {:.4}",
            errs[0], errs[1], errs[2]
        ),
    )
}

fn random_dataset(r: &mut impl Rng, run: usize) -> CorruptedDataset {
    let d = r.gen_range(2..=50);
    let n = r.gen_range((d + 10).max(20)..=400);
    let alpha = r.gen_range(0.0..0.45);
    let seed = r.gen();
    match run % 3 {
        0 => gen_setting_a(d, n, alpha, seed).unwrap(),
        1 => gen_setting_b(d, n, alpha, seed).unwrap(),
        _ => {
            // clustered outliers on top of unit Gaussian inliers
            let k = ((alpha * n as f64) as usize).max(1);
            let offset: Vec<f64> = (0..d).map(|_| r.gen_range(-5.0..5.0)).collect();
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..d)
                        .map(|j| {
                            common::gaussian(r) * if i < n - k { 1.0 } else { 0.3 }
                                + if i < n - k { 0.0 } else { offset[j] }
                        })
                        .collect()
                })
                .collect();
            let data = Dataset::from_rows(&rows).unwrap();
            let outliers: Vec<usize> = (n - k..n).collect();
            robmean::datagen::corrupt(&data, &data.select(&outliers).unwrap(), &outliers).unwrap()
        }
    }
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let mut violations = Vec::new();
    let feas_tol = SolverOptions::default().feas_tol;
    for run in 0..200 {
        let ds = random_dataset(&mut r, run);
        let data = &ds.data;
        let n = data.n();
        let cfg = if run % 2 == 0 {
            EstimatorConfig::l1()
        } else {
            EstimatorConfig::lp(IrlsConfig::default())
        };
        let bound = MomentBound::new(1.0, 1.5, n).unwrap();
        let res = match robust_mean(data, &bound, &cfg) {
            Ok(res) => res,
            Err(e) => {
                violations.push(format!("run {run}: {e}"));
                continue;
            }
        };
        let t = &res.l0_trace;
        let strict = t[..t.len() - 1].windows(2).all(|w| w[1] < w[0]);
        let capped = res.outer_iterations <= n.min(50) && res.outer_iterations == t.len();
        let lambda = residual_lambda(data, &res.mean, res.indicator.h());
        let feasible = lambda <= bound.rho() * (1.0 + feas_tol);
        if !(strict && capped && feasible) {
            violations.push(format!(
                "run {run} (n={n}, d={}): trace={t:?} outer={} lambda/rho={:.6}",
                data.d(),
                res.outer_iterations,
                lambda / bound.rho()
            ));
        }
    }
    let detail = match violations.first() {
        None => "200 runs, 0 violations".to_string(),
        Some(v) => format!("{} violations, first: {v}", violations.len()),
    };
    verdict(violations.is_empty(), detail)
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let mut mismatches = Vec::new();
    for inst in 0..50 {
        let n = r.gen_range(4..=12);
        let d = r.gen_range(1..=3);
        let k = r.gen_range(1..=(n - 1) / 2);
        let data = planted(&mut r, n, d, k);
        let bound = MomentBound::new(1.0, 1.5, n).unwrap();
        let oracle = brute_force_l0(&data, &bound).unwrap();
        for cfg in [EstimatorConfig::l1(), EstimatorConfig::lp(IrlsConfig::default())] {
            let res = robust_mean(&data, &bound, &cfg).unwrap();
            let lambda = residual_lambda(&data, &res.mean, res.indicator.h());
            let feasible = lambda <= bound.rho() * (1.0 + cfg.solver.feas_tol);
            if !feasible || res.indicator.support() != oracle.support.as_slice() {
                mismatches.push(format!(
                    "instance {inst} ({:?}): got {:?}, oracle {:?}",
                    cfg.method,
                    res.indicator.support(),
                    oracle.support
                ));
            }
        }
    }
    let detail = match mismatches.first() {
        None => "50 instances x {l1, lp}, 0 mismatches".to_string(),
        Some(m) => format!("{} mismatches, first: {m}", mismatches.len()),
    };
    verdict(mismatches.is_empty(), detail)
}

fn criterion_6() -> Outcome {
    let mut r = rng(6);
    let opts = SolverOptions::default();
    let mut worst_rel = 0.0f64;
    let mut worst_feas = 0.0f64;
    for _ in 0..100 {
        let n = r.gen_range(1..=10);
        let d = r.gen_range(1..=5);
        let inst = DiagonalInstance::random(&mut r, n, d);
        let (w, report) = packing_sdp_maximize(&inst.packing(), &opts).unwrap();
        let obj: f64 = w.iter().zip(&inst.u).map(|(w, u)| w * u).sum();
        let opt = inst.lp_optimum();
        worst_rel = worst_rel.max((obj - opt).abs() / opt.abs().max(1e-12));
        let load = (0..d).map(|j| inst.row_load(&w, j)).fold(0.0, f64::max);
        worst_feas = worst_feas
            .max(((load - inst.rho) / inst.rho).max(0.0))
            .max(report.feasibility_gap);
    }
    verdict(
        worst_rel <= 1e-3 && worst_feas <= 1e-3,
        format!("worst relative objective error {worst_rel:.2e}, worst feasibility gap {worst_feas:.2e}"),
    )
}

fn criterion_7() -> Outcome {
    let mut r = rng(7);
    let mut violations = 0;
    for _ in 0..100 {
        let m = r.gen_range(2..=12);
        let d = r.gen_range(1..=4);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| common::gaussian(&mut r)).collect())
            .collect();
        let pts = Dataset::from_rows(&rows).unwrap();
        let mean = pts.mean();
        let weights = vec![1.0 / m as f64; m];
        let cov = robmean::spectral::weighted_scatter(&pts, &mean, &weights).unwrap();
        // the tightest sigma satisfying the normalized scatter bound
        let sigma = common::jacobi_max(cov.as_matrix()).max(0.0).sqrt() * (1.0 + 1e-12);
        for beta in [0.1, 0.2, 0.3, 0.4] {
            if !resilience_check(&pts, &mean, sigma, beta).unwrap() {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!("100 point sets x 4 betas, {violations} violations"),
    )
}

fn criterion_8() -> Outcome {
    let bound_value = (4.0 + 3.0 * 1.5f64.sqrt()) * 0.3f64.sqrt();
    let mut worst = 0.0f64;
    let mut used = 0;
    let mut excluded = 0;
    for trial in 0..10 {
        let ds = gen_setting_b(50, 1000, 0.2, trial).unwrap();
        let bound = MomentBound::new(1.0, 1.5, 1000).unwrap();
        for cfg in [EstimatorConfig::l1(), EstimatorConfig::lp(IrlsConfig::default())] {
            let res = robust_mean(&ds.data, &bound, &cfg).unwrap();
            let lambda = residual_lambda(&ds.data, &res.mean, res.indicator.h());
            if lambda > bound.rho() * (1.0 + cfg.solver.feas_tol) || res.indicator.l0() as f64 > 0.3 * 1000.0 {
                excluded += 1;
                continue;
            }
            used += 1;
            let err = (&res.mean - &ds.oracle_mean).norm();
            worst = worst.max(err);
        }
    }
    verdict(
        used > 0 && worst <= bound_value,
        format!("{used} qualifying runs ({excluded} excluded), worst error {worst:.4} vs bound {bound_value:.3}"),
    )
}

fn criterion_9() -> Outcome {
    let mut outputs = Vec::new();
    for format in [OutputFormat::Csv, OutputFormat::Json] {
        let spec = ExperimentSpec {
            source: Source::A,
            d: 10,
            n: 200,
            alphas: vec![0.1, 0.3],
            trials: 3,
            seed: 11,
            format,
            ..ExperimentSpec::default()
        };
        let first = render(&spec, &run_experiment(&spec).unwrap()).unwrap();
        let second = render(&spec, &run_experiment(&spec).unwrap()).unwrap();
        outputs.push(first == second);
    }
    let data = gen_setting_b(8, 120, 0.2, 3).unwrap();
    let bound = MomentBound::new(1.0, 1.5, 120).unwrap();
    let cfg = EstimatorConfig::default();
    let a = robust_mean(&data.data, &bound, &cfg).unwrap();
    let b = robust_mean(&data.data, &bound, &cfg).unwrap();
    let same_estimate = a.mean == b.mean && a.relaxed_h == b.relaxed_h && a.l0_trace == b.l0_trace;
    verdict(
        outputs.iter().all(|&x| x) && same_estimate,
        format!(
            "csv identical: {}, json identical: {}, estimator identical: {same_estimate}",
            outputs[0], outputs[1]
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 setting B table, d=100 n=2000 alpha=0.2", criterion_1),
        ("2 setting A spot check, alpha in {0.1, 0.3}", criterion_2),
        ("3 sample-size monotonicity", criterion_3),
        ("4 l0 trace property suite", criterion_4),
        ("5 brute-force l0 equivalence", criterion_5),
        ("6 packing solver vs LP oracle", criterion_6),
        ("7 resilience of bounded-scatter sets", criterion_7),
        ("8 error-bound sanity", criterion_8),
        ("9 determinism", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        let id = name.split(' ').next().unwrap();
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {name}: {} ({}; {secs:.1}s)",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
        failed += usize::from(!out.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

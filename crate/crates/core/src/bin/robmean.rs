use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use robmean::datagen::{gen_setting_a, gen_setting_b, write_csv, write_csv_file};
use robmean::harness::{
    brute_force_l0, calibrate_sigma, ingest_csv, parse_config, render, run_experiment, run_method, ExperimentSpec,
    MethodName, Source,
};
use robmean::{Error, MomentBound};

const EXIT_CONFIG: u8 = 2;
const EXIT_METHOD_FAILURE: u8 = 3;
const EXIT_RUNTIME: u8 = 1;

#[derive(Parser)]
#[command(
    name = "robmean",
    version,
    about = "Robust mean estimation via outlier-indicator relaxations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corrupted dataset as CSV
    Generate(GenerateArgs),
    /// Estimate the mean of a CSV dataset
    Estimate(EstimateArgs),
    /// Run a multi-trial experiment
    Experiment(ExperimentArgs),
    /// Exhaustive oracles on small CSV datasets
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    A,
    B,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "b")]
    setting: SettingArg,
    #[arg(long, default_value_t = 100)]
    d: usize,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV dataset
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "lp")]
    method: String,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.5)]
    c1sq: f64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Comma-separated inlier mean used for the recovery error when the file has no labels
    #[arg(long)]
    oracle_mean: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Args)]
struct ExperimentArgs {
    /// key=value file with the same keys as the flags; flags win on conflict
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    /// CSV dataset used instead of a synthetic setting
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Corruption fraction; repeatable
    #[arg(long)]
    alpha: Vec<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated subset of mean,cmedian,gmedian,filter,l1,lp
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    c1sq: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    oracle_mean: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Record per-method wall time (makes output nondeterministic)
    #[arg(long)]
    timing: bool,
    /// Exit with status 3 if any method fails
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    /// Minimum number of removals satisfying the scatter bound
    L0,
    /// sigma from a subset assumed clean
    Sigma,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_enum, default_value = "l0")]
    kind: OracleKind,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.5)]
    c1sq: f64,
}

enum Failure {
    Config(String),
    Method(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn emit(out: Option<&PathBuf>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| Failure::Runtime(e.to_string()))
        }
    }
}

fn parse_vector(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Config(format!("oracle mean: {e}")))
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let ds = match a.setting {
        SettingArg::A => gen_setting_a(a.d, a.n, a.alpha, a.seed)?,
        SettingArg::B => gen_setting_b(a.d, a.n, a.alpha, a.seed)?,
    };
    match &a.out {
        Some(p) => write_csv_file(&ds.data, p)?,
        None => write_csv(&ds.data, std::io::stdout().lock())?,
    }
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<(), Failure> {
    let data = ingest_csv(&a.input)?;
    let method: MethodName = a.method.parse()?;
    let spec = ExperimentSpec {
        sigma: a.sigma,
        c1_squared: a.c1sq,
        p: a.p,
        tau: a.tau,
        ..ExperimentSpec::default()
    };
    spec.validate()?;
    let oracle = match (&a.oracle_mean, data.labels()) {
        (Some(s), _) => Some(DVector::from_vec(parse_vector(s)?)),
        (None, Some(l)) => {
            let idx: Vec<usize> = (0..data.n()).filter(|&i| l[i]).collect();
            Some(robmean::update_mean(&data, &idx)?)
        }
        (None, None) => None,
    };
    let (mean, iterations) = run_method(method, &data, &spec).map_err(|e| Failure::Method(e.to_string()))?;
    let error = match &oracle {
        Some(o) if o.len() == mean.len() => Some((&mean - o).norm()),
        Some(_) => return Err(Failure::Config("oracle mean dimension mismatch".into())),
        None => None,
    };
    let values: Vec<f64> = mean.iter().copied().collect();
    let text = match a.format {
        FormatArg::Json => {
            let doc = serde_json::json!({
                "method": method,
                "mean": values,
                "outer_iterations": iterations,
                "recovery_error": error,
            });
            format!(
                "{}\n",
                serde_json::to_string_pretty(&doc).expect("plain values serialize")
            )
        }
        FormatArg::Csv => {
            let cells: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
            let header: Vec<String> = (0..values.len()).map(|j| format!("x{j}")).collect();
            format!("{}\n{}\n", header.join(","), cells.join(","))
        }
    };
    emit(None, text.as_bytes())?;
    if let Some(e) = error {
        eprintln!("recovery_error={e}");
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::default();
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        for (k, v) in parse_config(&text)? {
            spec.apply(&k, &v)?;
        }
    }
    let mut flags: Vec<(&str, String)> = Vec::new();
    let mut push = |k: &'static str, v: Option<String>| {
        if let Some(v) = v {
            flags.push((k, v));
        }
    };
    push(
        "setting",
        a.setting
            .map(|s| if matches!(s, SettingArg::A) { "a" } else { "b" }.to_string()),
    );
    push("input", a.input.map(|p| p.display().to_string()));
    push("d", a.d.map(|v| v.to_string()));
    push("n", a.n.map(|v| v.to_string()));
    push(
        "alpha",
        (!a.alpha.is_empty()).then(|| a.alpha.iter().map(f64::to_string).collect::<Vec<_>>().join(",")),
    );
    push("trials", a.trials.map(|v| v.to_string()));
    push("methods", a.methods);
    push("sigma", a.sigma.map(|v| v.to_string()));
    push("c1sq", a.c1sq.map(|v| v.to_string()));
    push("p", a.p.map(|v| v.to_string()));
    push("tau", a.tau.map(|v| v.to_string()));
    push("seed", a.seed.map(|v| v.to_string()));
    push("oracle_mean", a.oracle_mean);
    push("out", a.out.map(|p| p.display().to_string()));
    push(
        "format",
        a.format
            .map(|f| if matches!(f, FormatArg::Json) { "json" } else { "csv" }.to_string()),
    );
    if a.timing {
        push("timing", Some("true".into()));
    }
    for (k, v) in &flags {
        spec.apply(k, v)?;
    }
    spec.validate()?;
    if let Source::Csv(p) = &spec.source {
        if !p.exists() {
            return Err(Failure::Config(format!("{}: no such file", p.display())));
        }
    }

    let rows = run_experiment(&spec)?;
    let bytes = render(&spec, &rows)?;
    emit(spec.output.as_ref(), &bytes)?;

    let failures: Vec<String> = rows
        .iter()
        .filter(|r| !r.is_aggregate())
        .filter_map(|r| {
            r.error
                .as_ref()
                .map(|e| format!("{} alpha={} trial={}: {e}", r.method, r.alpha, r.trial))
        })
        .collect();
    for f in &failures {
        eprintln!("method failure: {f}");
    }
    if a.strict && !failures.is_empty() {
        return Err(Failure::Method(format!("{} method failure(s)", failures.len())));
    }
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<(), Failure> {
    let data = ingest_csv(&a.input)?;
    let doc = match a.kind {
        OracleKind::L0 => {
            let bound = MomentBound::new(a.sigma, a.c1sq, data.n())?;
            let r = brute_force_l0(&data, &bound)?;
            serde_json::json!({
                "min_l0": r.min_l0,
                "support": r.support,
                "mean": r.mean.iter().copied().collect::<Vec<f64>>(),
                "lambda_max": r.lambda,
                "witnesses": r.witnesses,
            })
        }
        OracleKind::Sigma => serde_json::to_value(calibrate_sigma(&data)).expect("plain values serialize"),
    };
    let text = format!(
        "{}\n",
        serde_json::to_string_pretty(&doc).expect("plain values serialize")
    );
    emit(None, text.as_bytes())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Estimate(a) => estimate(a),
        Command::Experiment(a) => experiment(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Method(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_METHOD_FAILURE)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

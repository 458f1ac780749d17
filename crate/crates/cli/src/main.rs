mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use smcal::data::read_covariates;
use smcal::regime::decide_batch;
use smcal::tuning::{AlphaGrid, Criterion, LambdaGrid};
use smcal::{
    bootstrap_value, bootstrap_value_diff, contrast_weights, fit_regime, ipw_value, load_dataset, run_replications,
    Baseline, FitConfig, Init, Method, PropensityModel, Regime, Scenario, ScenarioSpec, StepSize, Tuning, TuningSpec,
};

#[derive(Parser, Debug)]
#[command(name = "smcal", version, about = "Smoothed concordance-assisted learning of treatment regimes")]
struct Cli {
    /// Root seed; every random draw is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Output file (fit, predict, evaluate) or directory (simulate).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// `key=value` file whose entries fill in flags not given on the command line.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation study and write replicates.csv and summary.json.
    Simulate(SimulateArgs),
    /// Estimate a regime from a CSV with columns y, a, x1..xd.
    Fit(FitArgs),
    /// Apply a regime to a covariate CSV.
    Predict(PredictArgs),
    /// IPW value of a regime, optionally with a bootstrap interval.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Covariate dimension (defaults to the scenario's).
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    propensity: PropensityArgs,
    /// `control-mean` or `zero`.
    #[arg(long, default_value = "control-mean")]
    baseline: String,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Also write the cross-validation table here.
    #[arg(long)]
    cv_table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    regime: PathBuf,
    /// CSV with covariate columns x1..xd; other columns are ignored.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    regime: PathBuf,
    /// Report the value difference against this second regime.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[command(flatten)]
    propensity: PropensityArgs,
    /// Number of bootstrap draws; 0 reports the point estimate only.
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    /// Resample size (defaults to the sample size).
    #[arg(long)]
    boot_size: Option<usize>,
}

#[derive(Args, Debug)]
struct PropensityArgs {
    /// A constant in (0, 1) or `empirical`.
    #[arg(long, default_value = "0.5")]
    propensity: String,
}

impl PropensityArgs {
    fn model(&self) -> Result<PropensityModel> {
        if self.propensity == "empirical" {
            return Ok(PropensityModel::Empirical);
        }
        let p: f64 = self.propensity.parse().map_err(|_| anyhow!("invalid --propensity `{}`", self.propensity))?;
        Ok(PropensityModel::Constant(p))
    }
}

#[derive(Args, Debug)]
struct TuningArgs {
    /// `smcal` or `scal`.
    #[arg(long, default_value = "smcal")]
    method: String,
    /// Fixed penalty; skips cross-validation together with --alpha.
    #[arg(long, requires = "alpha")]
    lambda: Option<f64>,
    /// Fixed smoothing scale.
    #[arg(long, requires = "lambda")]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 10)]
    lambda_count: usize,
    /// Smallest grid penalty as a fraction of the smallest all-zero penalty.
    #[arg(long, default_value_t = 1e-4)]
    lambda_min_ratio: f64,
    /// Comma-separated multiples of 1 / median |x_i1 - x_j1|.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0])]
    alpha_grid: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// `concordance` or `ipw`.
    #[arg(long, default_value = "concordance")]
    criterion: String,
    /// `auto`, `backtracking`, or a positive number.
    #[arg(long, default_value = "auto")]
    step: String,
    #[arg(long, default_value_t = 500)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// `plus`, `minus`, or `both`.
    #[arg(long, default_value = "both")]
    init: String,
}

impl TuningArgs {
    fn method(&self) -> Result<Method> {
        Ok(self.method.parse()?)
    }

    fn tuning(&self, propensity: PropensityModel) -> Result<Tuning> {
        let step = match self.step.as_str() {
            "auto" => StepSize::Auto,
            "backtracking" => StepSize::Backtracking,
            t => StepSize::Fixed(t.parse().map_err(|_| anyhow!("invalid --step `{t}`"))?),
        };
        let init = match self.init.as_str() {
            "plus" => Init::Plus,
            "minus" => Init::Minus,
            "both" => Init::Both,
            other => bail!("invalid --init `{other}`"),
        };
        let fit = FitConfig { step, max_sweeps: self.max_sweeps, tol: self.tol, init };
        fit.validate()?;
        if let (Some(lambda), Some(alpha)) = (self.lambda, self.alpha) {
            return Ok(Tuning::Fixed { lambda, alpha, fit });
        }
        let criterion = match self.criterion.as_str() {
            "concordance" => Criterion::Concordance,
            "ipw" => Criterion::IpwValue(propensity),
            other => bail!("invalid --criterion `{other}`"),
        };
        Ok(Tuning::CrossValidate(TuningSpec {
            lambda_grid: LambdaGrid::Relative { count: self.lambda_count, min_ratio: self.lambda_min_ratio },
            alpha_grid: AlphaGrid::Scaled(self.alpha_grid.clone()),
            folds: self.folds,
            criterion,
            fit,
        }))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create `{}`", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Writes `text` to `path`, or to standard output when no path is given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_regime(path: &Path) -> Result<Regime> {
    Regime::load(path).with_context(|| format!("cannot read regime `{}`", path.display()))
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let scenario: Scenario = args.scenario.parse()?;
    let mut spec = ScenarioSpec::new(scenario, args.n, cli.seed);
    if let Some(d) = args.d {
        spec = spec.with_d(d);
    }
    let tuning = args.tuning.tuning(PropensityModel::Constant(0.5))?;
    let report = run_replications(&spec, args.tuning.method()?, args.reps, &tuning, cli.seed)?;

    let dir = cli.output.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create `{}`", dir.display()))?;
    let mut csv = create(&dir.join("replicates.csv"))?;
    report.write_csv(&mut csv)?;
    csv.flush()?;
    let json = serde_json::to_string_pretty(&report.aggregate_json())? + "\n";
    emit(Some(&dir.join("summary.json")), &json)?;
    print!("{}", report.table());
    for f in &report.failures {
        eprintln!("replicate {} failed: {}", f.replicate, f.error);
    }
    if report.rows.is_empty() {
        bail!("all {} replicates failed", args.reps);
    }
    Ok(())
}

fn fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    let data = load_dataset(&args.input).with_context(|| format!("cannot read `{}`", args.input.display()))?;
    let prop = args.propensity.model()?;
    let baseline = match args.baseline.as_str() {
        "control-mean" => Baseline::ControlMean,
        "zero" => Baseline::Zero,
        other => bail!("invalid --baseline `{other}`"),
    };
    let w = contrast_weights(&data, &prop, &baseline)?;
    let tuning = args.tuning.tuning(prop)?;
    let fitted = fit_regime(&data, &w, args.tuning.method()?, &tuning, cli.seed)?;
    if let (Some(path), Some(cv)) = (&args.cv_table, &fitted.cv) {
        let mut out = create(path)?;
        cv.write_csv(&mut out)?;
        out.flush()?;
    }
    emit(cli.output.as_deref(), &(fitted.regime.to_json()? + "\n"))
}

fn predict(cli: &Cli, args: &PredictArgs) -> Result<()> {
    let regime = load_regime(&args.regime)?;
    let file = File::open(&args.input).with_context(|| format!("cannot read `{}`", args.input.display()))?;
    let x = read_covariates(file)?;
    let decisions = decide_batch(&regime, x.view())?;
    let mut text = String::from("decision\n");
    for d in decisions {
        text.push_str(if d == 1 { "1\n" } else { "0\n" });
    }
    emit(cli.output.as_deref(), &text)
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let data = load_dataset(&args.input).with_context(|| format!("cannot read `{}`", args.input.display()))?;
    let prop = args.propensity.model()?;
    let regime = load_regime(&args.regime)?;
    let other = args.compare.as_deref().map(load_regime).transpose()?;
    let mut point = ipw_value(&data, &prop, &regime)?;
    if let Some(b) = &other {
        point -= ipw_value(&data, &prop, b)?;
    }
    let label = if other.is_some() { "value difference" } else { "value" };
    let mut json = serde_json::json!({ "estimate": point });
    if args.bootstrap > 0 {
        let size = args.boot_size.unwrap_or(data.n());
        let est = match &other {
            Some(b) => bootstrap_value_diff(&data, &prop, &regime, b, args.bootstrap, size, cli.seed)?,
            None => bootstrap_value(&data, &prop, &regime, args.bootstrap, size, cli.seed)?,
        };
        println!("{label} {point:.6}  95% CI [{:.6}, {:.6}]  ({} draws)", est.ci_low, est.ci_high, est.n_boot);
        json["bootstrap"] = serde_json::to_value(est)?;
    } else {
        println!("{label} {point:.6}");
    }
    if let Some(path) = &cli.output {
        emit(Some(path), &(serde_json::to_string_pretty(&json)? + "\n"))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Fit(a) => fit(cli, a),
        Command::Predict(a) => predict(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
    }
}

/// 2 for I/O failures, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<io::Error>() {
            return 2;
        }
        match cause.downcast_ref::<smcal::Error>() {
            Some(smcal::Error::Io(_)) => return 2,
            Some(smcal::Error::Csv(e)) if e.is_io_error() => return 2,
            _ => {}
        }
    }
    1
}

fn main() -> ExitCode {
    let args = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t as usize);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| run(&cli)),
        Err(e) => Err(anyhow!("cannot start worker pool: {e}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! `decorr`: Monte Carlo sweeps, single estimates and diagnostics from the
//! command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decorr::decorrelation::{default_fit_prob, draw_quadruples, DecorrelationProbs};
use decorr::diagnostics::{diagnose, observed_residuals, population_residuals, DiagnoseOptions, EntropySpec};
use decorr::estimators::Method;
use decorr::io::{read_csv, to_json17, CsvTable};
use decorr::population::{FinitePopulation, FunctionClassSpec};
use decorr::regressors::{bin_count, Backend, FittedFunction};
use decorr::rng::{purpose, SeedKey};
use decorr::simharness::{run_experiment, write_metrics_csv, ExperimentConfig, FitSettings, Oracle, Realization};
use decorr::Error;

#[derive(Parser)]
#[command(name = "decorr", version, about = "Decorrelated regression adjustment for randomized experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep described by a TOML file and write metrics.csv.
    Simulate(SimulateArgs),
    /// Run one estimator on a data file and print its report as JSON.
    Estimate(EstimateArgs),
    /// Print leverage, residual and bound diagnostics for a data file as JSON.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment configuration (flat TOML keys).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write one JSON report per replication and method to raw.jsonl.
    #[arg(long)]
    raw: bool,
    /// Worker threads; the output does not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct DesignArgs {
    /// CSV with covariates x1..xd, treatment t, and y and/or y1, y0.
    #[arg(long)]
    data: PathBuf,
    /// Treatment probability.
    #[arg(long, default_value_t = 0.5)]
    pi_t: f64,
    /// Treated fitting probability; min(sqrt(d/n), 1/4, pi_t/2, (1-pi_t)/2) by default.
    #[arg(long)]
    pi_r: Option<f64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Estimator tag, e.g. dim, adj, dc, dc_oracle, dc_hajek.
    #[arg(long)]
    method: String,
    /// Control fitting probability; equal to the treated one by default.
    #[arg(long)]
    pi_rbar: Option<f64>,
    /// ols, lasso, regressogram, regressogram_interp or zero.
    #[arg(long, default_value = "ols")]
    backend: String,
    /// Hölder exponent for the regressogram backends.
    #[arg(long, default_value_t = 1.0)]
    holder_alpha: f64,
    /// Lasso penalty (data-driven when omitted).
    #[arg(long)]
    lambda: Option<f64>,
    /// Lasso side-constraint level (largest training |y| when omitted).
    #[arg(long)]
    y_inf: Option<f64>,
    /// Interval level alpha.
    #[arg(long, default_value_t = 0.05)]
    alpha_level: f64,
    /// Seed of the fitting/averaging split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Failure probability of the bounds.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Polynomial entropy exponent; with --entropy-c adds the critical radius.
    #[arg(long, requires = "entropy_c")]
    entropy_alpha: Option<f64>,
    #[arg(long, requires = "entropy_alpha")]
    entropy_c: Option<f64>,
}

/// Message plus process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: e.exit_code() as u8, message: e.to_string() }
    }
}

fn io_failure(code: u8, what: &str, path: &Path, e: std::io::Error) -> Failure {
    Failure { code, message: format!("cannot {what} {}: {e}", path.display()) }
}

fn load_table(path: &Path) -> Result<CsvTable, Failure> {
    let file = fs::File::open(path).map_err(|e| io_failure(3, "open", path, e))?;
    Ok(read_csv(file)?)
}

/// Observed outcomes, taken from `y` or assembled from `y1`, `y0` and `t`;
/// when all three are present they must agree.
fn observed_outcomes(table: &CsvTable, pop: Option<&FinitePopulation>, t: &[bool]) -> Result<Vec<f64>, Failure> {
    match (&table.y, pop) {
        (Some(y), Some(p)) => {
            if p.observe(t)? != *y {
                return Err(Error::Data("column `y` disagrees with `y1`/`y0` under `t`".into()).into());
            }
            Ok(y.clone())
        }
        (Some(y), None) => Ok(y.clone()),
        (None, Some(p)) => Ok(p.observe(t)?),
        (None, None) => Err(Error::Data("need column `y`, or both `y1` and `y0`".into()).into()),
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.config).map_err(|e| io_failure(2, "read", &args.config, e))?;
    let config = ExperimentConfig::from_toml_str(&text)?;
    let output = match args.threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Failure { code: 2, message: format!("cannot start {k} threads: {e}") })?;
            pool.install(|| run_experiment(&config, args.raw))?
        }
        None => run_experiment(&config, args.raw)?,
    };
    for m in &output.messages {
        eprintln!("warning: {m}");
    }

    fs::create_dir_all(&args.out).map_err(|e| io_failure(3, "create", &args.out, e))?;
    let metrics = args.out.join("metrics.csv");
    let mut buf = Vec::new();
    write_metrics_csv(&output.rows, &mut buf).map_err(|e| io_failure(3, "write", &metrics, e))?;
    fs::write(&metrics, buf).map_err(|e| io_failure(3, "write", &metrics, e))?;
    eprintln!("wrote {} ({} rows)", metrics.display(), output.rows.len());
    if args.raw {
        let raw = args.out.join("raw.jsonl");
        let mut text = output.raw.join("\n");
        text.push('\n');
        fs::write(&raw, text).map_err(|e| io_failure(3, "write", &raw, e))?;
        eprintln!("wrote {} ({} lines)", raw.display(), output.raw.len());
    }
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<(), Failure> {
    let method: Method = args.method.parse()?;
    let backend: Backend = args.backend.parse()?;
    if backend == Backend::External {
        return Err(Error::Config("the external backend takes no data-file fits".into()).into());
    }
    let table = load_table(&args.design.data)?;
    let t = table.t.clone().ok_or_else(|| Error::Data("missing column `t`".into()))?;
    let pop = match (&table.y1, &table.y0) {
        (Some(_), Some(_)) => Some(table.population()?),
        _ => None,
    };
    let y = observed_outcomes(&table, pop.as_ref(), &t)?;
    let (n, d) = table.x.shape();

    let pi_t = args.design.pi_t;
    let pi_r = args.design.pi_r.unwrap_or_else(|| default_fit_prob(n, d, pi_t));
    let probs = DecorrelationProbs::from_fit_probs(pi_t, pi_r, args.pi_rbar.unwrap_or(pi_r))?;
    let quad = method.uses_quadruples().then(|| {
        draw_quadruples(&t, &probs, &SeedKey::from_u64(args.seed).derive("cli-split", &[]).stream(purpose::QUADRUPLE))
    });
    let fit = FitSettings { backend, smoothness: args.holder_alpha, lambda: args.lambda, y_inf: args.y_inf };

    let stars = match &pop {
        Some(p) if method.is_oracle() => {
            let class = match backend {
                Backend::Regressogram | Backend::RegressogramInterp => {
                    FunctionClassSpec::Regressogram { column: 0, bins: bin_count(n, args.holder_alpha) }
                }
                _ => FunctionClassSpec::Linear,
            };
            let (f1, f0) = p.oracle_projection(&class)?;
            Some((FittedFunction::external(f1)?, FittedFunction::external(f0)?))
        }
        _ => None,
    };
    let mut real = Realization::new(&table.x, y, t, quad, probs, args.alpha_level, fit)?;
    if let (Some(p), Some((f1, f0))) = (&pop, &stars) {
        real = real.with_oracle(Oracle { pop: p, f1star: f1, f0star: f0 });
    }
    let report = real.evaluate(method)?;
    println!("{}", report.to_json());
    Ok(())
}

fn diagnose_cmd(args: DiagnoseArgs) -> Result<(), Failure> {
    let table = load_table(&args.design.data)?;
    let (resid, source) = match (&table.y1, &table.y0) {
        (Some(_), Some(_)) => (population_residuals(&table.population()?)?, "population"),
        _ => (observed_residuals(&table.observed()?, args.design.pi_t)?, "observed"),
    };
    let opts = DiagnoseOptions {
        pi_t: args.design.pi_t,
        pi_r: args.design.pi_r,
        delta: args.delta,
        entropy: match (args.entropy_alpha, args.entropy_c) {
            (Some(alpha), Some(c)) => Some(EntropySpec::Polynomial { alpha, c }),
            _ => None,
        },
    };
    let report = diagnose(&table.x, &resid, source, &opts)?;
    println!("{}", to_json17(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Diagnose(a) => diagnose_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

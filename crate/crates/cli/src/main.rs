//! `exderiv` command-line tool: simulate data, fit estimators, select
//! tuning parameters and run the replication benchmark.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use exderiv::bench::{emit_table, render_table, run_replications, BenchEstimator, BenchSpec, TableFormat};
use exderiv::kernel::default_bandwidth;
use exderiv::selection::{select_sequential, ParamGrid};
use exderiv::simdata::{generate, ModelKind};
use exderiv::{fit, load_csv, DataSet, Error, EstimatorConfig, EstimatorKind, Kernel};

#[derive(Parser)]
#[command(name = "exderiv", version, about = "Exterior-derivative regression on manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated data set and its true coefficients.
    Simulate(SimulateArgs),
    /// Fit one estimator to a CSV data set.
    Fit(FitArgs),
    /// Choose tuning parameters by sequential bootstrap.
    SelectParams(SelectArgs),
    /// Replicated simulation benchmark producing an error table.
    Benchmark(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "linear")]
    model: ModelKind,
    #[arg(long, default_value_t = 8)]
    p: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long = "sigma-nu2", default_value_t = 0.01)]
    sigma_nu2: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long)]
    out: PathBuf,
    /// Writes `term,value` rows: the intercept at the origin, then the
    /// exterior derivative.
    #[arg(long = "truth-out")]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    /// Evaluation point: `means` or comma-separated coordinates. Local
    /// estimators default to `means`; baselines are global without it.
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    kernel: Option<Kernel>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    estimator: EstimatorKind,
    #[command(flatten)]
    input: DataArgs,
    /// Bandwidth. Without it, local fits use `kappa * n^{-1/(dim+4)}`.
    #[arg(long, alias = "bandwidth")]
    h: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Dimension used in the bandwidth rule (defaults to `--d`, then `p`).
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Manifold dimension; the numerical rank of the covariance when unset.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    #[arg(long = "sigma-nu2", default_value_t = 0.0)]
    sigma_nu2: f64,
    /// Ridge strength of the elastic net.
    #[arg(long, default_value_t = 0.0)]
    lambda2: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    estimator: EstimatorKind,
    #[command(flatten)]
    input: DataArgs,
    /// JSON object with `lambdas`, `dims`, `mus`, `ts`, `kappas`; missing
    /// keys take defaults.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Bootstrap replicates per candidate (overrides the grid file).
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long = "sigma-nu2", default_value_t = 0.0)]
    sigma_nu2: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "linear")]
    model: ModelKind,
    #[arg(long, default_value_t = 8)]
    p: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long = "sigma-nu2", default_value_t = 0.01)]
    sigma_nu2: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    #[arg(long, value_delimiter = ',', default_value = "ols,ridge,pcr,en,ede,alede,edep,aledep")]
    estimators: Vec<EstimatorKind>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "csv")]
    format: TableFormat,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Selection grid for every estimator (default grids otherwise).
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Skip selection and use the fixed parameters below.
    #[arg(long)]
    fixed: bool,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn parse_x0(spec: &str, data: &DataSet) -> Result<DVector<f64>, Error> {
    if spec.trim() == "means" {
        return Ok(data.column_means());
    }
    let values = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("x0 entry `{}` is not a number", s.trim())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != data.p() {
        return Err(Error::InvalidArgument(format!(
            "x0 has {} entries but the data has {} predictors",
            values.len(),
            data.p()
        )));
    }
    Ok(DVector::from_vec(values))
}

fn evaluation_point(kind: EstimatorKind, x0: Option<&str>, data: &DataSet) -> Result<Option<DVector<f64>>, Error> {
    match x0 {
        Some(s) => parse_x0(s, data).map(Some),
        None if kind.is_local() => Ok(Some(data.column_means())),
        None => Ok(None),
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let inst = generate(args.model, args.p, args.n, args.sigma_nu2, args.sigma2, args.seed)?;
    inst.data.save_csv(&args.out, &args.response)?;
    if let Some(path) = &args.truth_out {
        let mut text = String::from("term,value\n");
        text.push_str(&format!("intercept,{:?}\n", inst.beta_true[0]));
        for (j, v) in inst.beta_true.iter().skip(1).enumerate() {
            text.push_str(&format!("x{},{:?}\n", j + 1, v));
        }
        write_output(Some(path), &text)?;
    }
    Ok(())
}

fn run_fit(args: FitArgs) -> Result<(), Error> {
    let data = load_csv(&args.input.data, &args.input.response)?;
    let kind = args.estimator;
    let x0 = evaluation_point(kind, args.input.x0.as_deref(), &data)?;
    let mut cfg = EstimatorConfig::new(kind)
        .with_lambda(args.lambda)
        .with_mu(args.mu)
        .with_gamma(args.gamma)
        .with_t(args.t)
        .with_sigma_nu2(args.sigma_nu2)
        .with_lambda2(args.lambda2);
    cfg.d = args.d;
    if let Some(k) = args.input.kernel {
        cfg.kernel = k;
    }
    cfg.h = match (args.h, x0.is_some()) {
        (Some(h), _) => Some(h),
        (None, true) => {
            let dim = args.dim.or(args.d).unwrap_or(data.p());
            Some(default_bandwidth(data.n(), dim, args.kappa.unwrap_or(1.0))?)
        }
        (None, false) => None,
    };
    let est = fit(&data, &cfg, x0.as_ref())?;
    let mut text = serde_json::to_string_pretty(&est.to_record())?;
    text.push('\n');
    write_output(args.out.as_deref(), &text)
}

fn load_grid(path: Option<&Path>, p: usize, local: bool) -> Result<ParamGrid, Error> {
    match path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Format {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        }
        None => Ok(ParamGrid::default_for(p, local)),
    }
}

fn select_params(args: SelectArgs) -> Result<(), Error> {
    let data = load_csv(&args.input.data, &args.input.response)?;
    let kind = args.estimator;
    let x0 = evaluation_point(kind, args.input.x0.as_deref(), &data)?;
    let mut grid = load_grid(args.grid.as_deref(), data.p(), x0.is_some())?;
    if let Some(b) = args.bootstrap {
        grid.bootstrap = b;
    }
    let mut base = EstimatorConfig::new(kind)
        .with_gamma(args.gamma)
        .with_sigma_nu2(args.sigma_nu2);
    if let Some(k) = args.input.kernel {
        base.kernel = k;
    }
    let selected = select_sequential(&data, &grid, &base, x0.as_ref(), args.seed)?;
    for w in &selected.warnings {
        eprintln!("warning: {w}");
    }
    let mut text = serde_json::to_string_pretty(&selected)?;
    text.push('\n');
    write_output(args.out.as_deref(), &text)
}

/// Exit status 2 when the table was produced but some fits failed.
fn benchmark(args: BenchArgs) -> Result<ExitCode, Error> {
    let file_grid = match &args.grid {
        Some(path) => Some(load_grid(Some(path), args.p, false)?),
        None => None,
    };
    let estimators = args
        .estimators
        .iter()
        .map(|&kind| {
            if args.fixed {
                let mut cfg = EstimatorConfig::new(kind)
                    .with_lambda(args.lambda)
                    .with_mu(args.mu)
                    .with_t(args.t)
                    .with_sigma_nu2(args.sigma_nu2);
                cfg.d = args.d;
                BenchEstimator::Fixed(cfg)
            } else {
                let mut grid = file_grid
                    .clone()
                    .unwrap_or_else(|| ParamGrid::default_for(args.p, kind.is_local()));
                if let Some(b) = args.bootstrap {
                    grid.bootstrap = b;
                }
                BenchEstimator::auto(kind, grid)
            }
        })
        .collect();
    let spec = BenchSpec {
        model: args.model,
        p: args.p,
        n: args.n,
        sigma_nu2: args.sigma_nu2,
        sigma2: args.sigma2,
        replications: args.replications,
        estimators,
        base_seed: args.seed,
    };
    let table = run_replications(&spec)?;
    match &args.out {
        Some(path) => emit_table(&table, args.format, path)?,
        None => write_output(None, &render_table(&table, args.format)?)?,
    }
    let failures = table.total_failures();
    if failures > 0 {
        eprintln!("{failures} fit(s) failed; see the failures column");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| ExitCode::SUCCESS),
        Command::Fit(a) => run_fit(a).map(|_| ExitCode::SUCCESS),
        Command::SelectParams(a) => select_params(a).map(|_| ExitCode::SUCCESS),
        Command::Benchmark(a) => benchmark(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

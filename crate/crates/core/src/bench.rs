//! Replicated simulation benchmark and error tables.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{fit, EstimatorConfig, EstimatorKind};
use crate::kernel::default_bandwidth;
use crate::selection::{select_sequential, ParamGrid};
use crate::simdata::{generate, ModelKind, SimulatedInstance};

/// Offset mixed into the replicate seed for bootstrap selection, so the
/// resamples are not a function of the same stream as the data.
const SELECTION_SEED_OFFSET: u64 = 0x5EED_0000;

/// One column of the benchmark: fixed parameters, or parameters chosen by
/// [`select_sequential`] on every replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchEstimator {
    Fixed(EstimatorConfig),
    Auto {
        base: EstimatorConfig,
        grid: ParamGrid,
    },
}

impl BenchEstimator {
    pub fn auto(kind: EstimatorKind, grid: ParamGrid) -> Self {
        BenchEstimator::Auto {
            base: EstimatorConfig::new(kind),
            grid,
        }
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            BenchEstimator::Fixed(c) => c.kind,
            BenchEstimator::Auto { base, .. } => base.kind,
        }
    }

    pub fn label(&self) -> &'static str {
        self.kind().name()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub model: ModelKind,
    pub p: usize,
    pub n: usize,
    pub sigma_nu2: f64,
    pub sigma2: f64,
    pub replications: usize,
    pub estimators: Vec<BenchEstimator>,
    pub base_seed: u64,
}

impl BenchSpec {
    /// Linear model with `p = 8`, `n = 1000`, `sigma_nu2 = 0.01`,
    /// `sigma2 = 1` and 100 replications.
    pub fn new(estimators: Vec<BenchEstimator>) -> Self {
        Self {
            model: ModelKind::Linear,
            p: 8,
            n: 1000,
            sigma_nu2: 0.01,
            sigma2: 1.0,
            replications: 100,
            estimators,
            base_seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(invalid("replications must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(invalid("estimator list is empty"));
        }
        if self.n < 2 {
            return Err(invalid("n must be at least 2"));
        }
        if !(self.sigma_nu2 >= 0.0) || !(self.sigma2 >= 0.0) {
            return Err(invalid("noise variances must be nonnegative"));
        }
        for est in &self.estimators {
            match est {
                BenchEstimator::Fixed(c) => c.validate(self.p)?,
                BenchEstimator::Auto { base, grid } => {
                    base.validate(self.p)?;
                    grid.validate(self.p)?;
                }
            }
        }
        Ok(())
    }
}

/// Errors and fit times of every estimator on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub seed: u64,
    /// `None` where the fit (or its selection) failed.
    pub errors: Vec<Option<f64>>,
    pub times_s: Vec<Option<f64>>,
}

/// Squared error of one estimator on one instance, and its fit time.
///
/// The estimate is re-expressed with its intercept at the instance's `x0`
/// before comparing with `beta_true`. Auto estimators select parameters
/// first; the reported time covers the final fit only.
pub fn evaluate(est: &BenchEstimator, inst: &SimulatedInstance) -> Result<(f64, f64)> {
    let data = &inst.data;
    let x0 = &inst.x0;
    let config = match est {
        BenchEstimator::Fixed(c) => {
            let mut c = c.clone();
            if c.kind.is_local() && c.h.is_none() {
                c.h = Some(default_bandwidth(data.n(), c.d.unwrap_or(data.p()), 1.0)?);
            }
            c
        }
        BenchEstimator::Auto { base, grid } => {
            let at = base.kind.is_local().then_some(x0);
            let seed = inst.seed.wrapping_add(SELECTION_SEED_OFFSET);
            let sel = select_sequential(data, grid, base, at, seed)?;
            sel.apply(base)
        }
    };
    let at = config.kind.is_local().then_some(x0);
    let start = Instant::now();
    let estimate = fit(data, &config, at)?;
    let elapsed = start.elapsed().as_secs_f64();
    let err = (estimate.beta_at(x0) - &inst.beta_true).norm_squared();
    if !err.is_finite() {
        return Err(invalid("non-finite estimation error"));
    }
    Ok((err, elapsed))
}

/// Generates and fits every replicate (seeds `base_seed + 1 ..= base_seed + R`).
pub fn run_raw(spec: &BenchSpec) -> Result<Vec<Replication>> {
    spec.validate()?;
    (1..=spec.replications as u64)
        .into_par_iter()
        .map(|r| {
            let seed = spec.base_seed.wrapping_add(r);
            let inst = generate(spec.model, spec.p, spec.n, spec.sigma_nu2, spec.sigma2, seed)?;
            let (errors, times_s) = spec
                .estimators
                .iter()
                .map(|e| match evaluate(e, &inst) {
                    Ok((err, t)) => (Some(err), Some(t)),
                    Err(_) => (None, None),
                })
                .unzip();
            Ok(Replication {
                seed,
                errors,
                times_s,
            })
        })
        .collect()
}

/// Runs the benchmark and aggregates it.
pub fn run_replications(spec: &BenchSpec) -> Result<ErrorTable> {
    let reps = run_raw(spec)?;
    Ok(aggregate(spec, &reps))
}

/// Mean and sample standard deviation (divisor `m - 1`; 0 when `m = 1`).
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, sd))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub estimator: String,
    /// `None` when every replicate failed.
    pub mean_err: Option<f64>,
    pub sd_err: Option<f64>,
    pub mean_time_s: Option<f64>,
    pub sd_time_s: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub model: ModelKind,
    pub p: usize,
    pub n: usize,
    pub sigma_nu2: f64,
    pub sigma2: f64,
    pub replications: usize,
    pub base_seed: u64,
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn total_failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }

    pub fn row(&self, estimator: &str) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }
}

/// Reduces replicates to one row per estimator, in spec order.
pub fn aggregate(spec: &BenchSpec, reps: &[Replication]) -> ErrorTable {
    let rows = spec
        .estimators
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let errs: Vec<f64> = reps.iter().filter_map(|r| r.errors[j]).collect();
            let times: Vec<f64> = reps.iter().filter_map(|r| r.times_s[j]).collect();
            let e_stats = mean_sd(&errs);
            let t_stats = mean_sd(&times);
            ErrorRow {
                estimator: e.label().to_string(),
                mean_err: e_stats.map(|s| s.0),
                sd_err: e_stats.map(|s| s.1),
                mean_time_s: t_stats.map(|s| s.0),
                sd_time_s: t_stats.map(|s| s.1),
                failures: reps.len() - errs.len(),
            }
        })
        .collect();
    ErrorTable {
        model: spec.model,
        p: spec.p,
        n: spec.n,
        sigma_nu2: spec.sigma_nu2,
        sigma2: spec.sigma2,
        replications: reps.len(),
        base_seed: spec.base_seed,
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(invalid(format!("unknown table format `{other}`"))),
        }
    }
}

pub const CSV_HEADER: &str = "estimator,mean_err,sd_err,mean_time_s,sd_time_s,failures";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn md_cell(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

pub fn render_table(table: &ErrorTable, format: TableFormat) -> Result<String> {
    let mut s = String::new();
    match format {
        TableFormat::Csv => {
            s.push_str(CSV_HEADER);
            s.push('\n');
            for r in &table.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    r.estimator,
                    cell(r.mean_err),
                    cell(r.sd_err),
                    cell(r.mean_time_s),
                    cell(r.sd_time_s),
                    r.failures
                );
            }
        }
        TableFormat::Json => {
            s = serde_json::to_string_pretty(table)?;
            s.push('\n');
        }
        TableFormat::Markdown => {
            let _ = writeln!(
                s,
                "Squared estimation error over R = {} replications ({} model, p = {}, n = {}, sigma_nu2 = {}, sigma2 = {}, seed = {}).",
                table.replications,
                table.model,
                table.p,
                table.n,
                table.sigma_nu2,
                table.sigma2,
                table.base_seed
            );
            s.push('\n');
            s.push_str("| estimator | mean_err | sd_err | mean_time_s | sd_time_s | failures |\n");
            s.push_str("|---|---:|---:|---:|---:|---:|\n");
            for r in &table.rows {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} |",
                    r.estimator,
                    md_cell(r.mean_err, 4),
                    md_cell(r.sd_err, 4),
                    md_cell(r.mean_time_s, 6),
                    md_cell(r.sd_time_s, 6),
                    r.failures
                );
            }
        }
    }
    Ok(s)
}

/// Writes the rendered table to `path`.
pub fn emit_table(table: &ErrorTable, format: TableFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_table(table, format)?;
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)?;
    Ok(())
}

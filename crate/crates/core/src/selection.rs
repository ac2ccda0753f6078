//! Sequential bootstrap selection of tuning parameters.
//!
//! Parameters are chosen one at a time, each by minimizing an out-of-bag
//! bootstrap estimate of prediction error with the previously chosen values
//! held fixed: bandwidth scale (local fits), then the Tikhonov strength
//! using ridge regression, then the manifold dimension, then the lasso
//! strength, then the covariance threshold.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{invalid, Error, Result};
use crate::estimators::{fit, Estimate, EstimatorConfig, EstimatorKind};
use crate::kernel::default_bandwidth;

/// Grids above this size trigger a warning: many candidates invite
/// overfitting the selection criterion.
pub const MAX_QUIET_GRID: usize = 25;

/// Attempts at drawing a resample with a nonempty out-of-bag set.
const MAX_REDRAWS: usize = 100;

fn default_bootstrap() -> usize {
    50
}

fn default_ts() -> Vec<f64> {
    vec![0.0]
}

fn default_kappas() -> Vec<f64> {
    vec![1.0]
}

fn default_lambdas() -> Vec<f64> {
    vec![0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0]
}

fn default_mus() -> Vec<f64> {
    vec![0.0, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1]
}

/// Candidate values for each stage. Omitted keys in JSON take defaults;
/// an omitted `dims` means every dimension `0..=p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub dims: Vec<usize>,
    #[serde(default = "default_mus")]
    pub mus: Vec<f64>,
    #[serde(default = "default_ts")]
    pub ts: Vec<f64>,
    #[serde(default = "default_kappas")]
    pub kappas: Vec<f64>,
    /// Bootstrap replicates per grid point.
    #[serde(default = "default_bootstrap", alias = "B")]
    pub bootstrap: usize,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            lambdas: default_lambdas(),
            dims: Vec::new(),
            mus: default_mus(),
            ts: default_ts(),
            kappas: default_kappas(),
            bootstrap: default_bootstrap(),
        }
    }
}

impl ParamGrid {
    /// Default grid for `p` predictors; local fits also scan bandwidths.
    pub fn default_for(p: usize, local: bool) -> Self {
        let mut g = Self::default();
        g.dims = (0..=p).collect();
        if local {
            g.kappas = vec![0.5, 1.0, 2.0, 4.0];
        }
        g
    }

    pub fn singleton(lambda: f64, d: usize, mu: f64, t: f64, kappa: f64, bootstrap: usize) -> Self {
        Self {
            lambdas: vec![lambda],
            dims: vec![d],
            mus: vec![mu],
            ts: vec![t],
            kappas: vec![kappa],
            bootstrap,
        }
    }

    /// Fills an empty `dims` with `0..=p`.
    pub fn resolved(&self, p: usize) -> Self {
        let mut g = self.clone();
        if g.dims.is_empty() {
            g.dims = (0..=p).collect();
        }
        g
    }

    /// Checks the grid against `p` and returns advisory warnings.
    pub fn validate(&self, p: usize) -> Result<Vec<String>> {
        let g = self.resolved(p);
        if g.bootstrap < 2 {
            return Err(invalid("bootstrap replicate count must be at least 2"));
        }
        let real = [
            ("lambdas", &g.lambdas),
            ("mus", &g.mus),
            ("ts", &g.ts),
            ("kappas", &g.kappas),
        ];
        let mut warnings = Vec::new();
        for (name, values) in real {
            if values.is_empty() {
                return Err(invalid(format!("grid `{name}` is empty")));
            }
            if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(invalid(format!("grid `{name}` has negative or non-finite values")));
            }
            if values.len() > MAX_QUIET_GRID {
                warnings.push(format!(
                    "grid `{name}` has {} values; prefer a small number of candidates",
                    values.len()
                ));
            }
        }
        if g.kappas.iter().any(|&k| k == 0.0) {
            return Err(invalid("grid `kappas` must be strictly positive"));
        }
        if let Some(&d) = g.dims.iter().find(|&&d| d > p) {
            return Err(invalid(format!("grid `dims` contains {d} > p = {p}")));
        }
        if g.dims.len() > MAX_QUIET_GRID {
            warnings.push(format!(
                "grid `dims` has {} values; prefer a small number of candidates",
                g.dims.len()
            ));
        }
        Ok(warnings)
    }
}

/// In-bag and out-of-bag row indices of one bootstrap replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Resample {
    pub in_bag: Vec<usize>,
    pub out_of_bag: Vec<usize>,
}

/// Draws `b` resamples of `n` rows with replacement. Replicates whose
/// out-of-bag set is empty are redrawn.
pub fn draw_resamples(n: usize, b: usize, seed: u64) -> Result<Vec<Resample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(b);
    for _ in 0..b {
        let mut tries = 0;
        loop {
            tries += 1;
            let mut seen = vec![false; n];
            let in_bag: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    seen[i] = true;
                    i
                })
                .collect();
            let out_of_bag: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
            if !out_of_bag.is_empty() {
                out.push(Resample { in_bag, out_of_bag });
                break;
            }
            if tries >= MAX_REDRAWS {
                return Err(invalid(format!(
                    "could not draw a resample with out-of-bag rows (n = {n})"
                )));
            }
        }
    }
    Ok(out)
}

/// Mean out-of-bag squared prediction error over `b` bootstrap replicates.
///
/// `fitter` is called once per replicate on the in-bag rows; predictions
/// use the fitted linear model `f_hat + dxf_hat . (x - center)`.
pub fn bootstrap_risk<F>(data: &DataSet, fitter: F, b: usize, seed: u64) -> Result<f64>
where
    F: Fn(&DataSet) -> Result<Estimate> + Sync,
{
    if b < 2 {
        return Err(invalid("bootstrap replicate count must be at least 2"));
    }
    let resamples = draw_resamples(data.n(), b, seed)?;
    risk_on(data, &resamples, &fitter)
}

fn risk_on<F>(data: &DataSet, resamples: &[Resample], fitter: &F) -> Result<f64>
where
    F: Fn(&DataSet) -> Result<Estimate> + Sync,
{
    let errors = resamples
        .par_iter()
        .map(|rs| {
            let est = fitter(&data.select_rows(&rs.in_bag))?;
            let sse: f64 = rs
                .out_of_bag
                .iter()
                .map(|&i| {
                    let row: Vec<f64> = data.x().row(i).iter().copied().collect();
                    let e = data.y()[i] - est.predict(&row);
                    e * e
                })
                .sum();
            Ok(sse / rs.out_of_bag.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Risk of every candidate of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub parameter: String,
    /// Estimator whose risk was evaluated in this stage.
    pub estimator: EstimatorKind,
    pub values: Vec<f64>,
    /// `None` where every replicate fit failed.
    pub risks: Vec<Option<f64>>,
    pub chosen: f64,
}

/// Outcome of [`select_sequential`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedParams {
    pub target: EstimatorKind,
    pub lambda: f64,
    pub d: Option<usize>,
    pub mu: f64,
    pub t: f64,
    pub kappa: Option<f64>,
    pub h: Option<f64>,
    /// Stages in execution order, with their risk curves.
    pub stages: Vec<StageResult>,
    /// Number of estimator fits performed.
    pub fit_count: usize,
    pub warnings: Vec<String>,
}

impl SelectedParams {
    /// `base` with the selected values filled in.
    pub fn apply(&self, base: &EstimatorConfig) -> EstimatorConfig {
        let mut cfg = base.clone().with_kind(self.target);
        cfg.lambda = self.lambda;
        cfg.d = self.d.or(base.d);
        cfg.mu = self.mu;
        cfg.t = self.t;
        if self.h.is_some() {
            cfg.h = self.h;
        }
        if self.target == EstimatorKind::ElasticNet {
            cfg.lambda2 = self.lambda;
        }
        cfg
    }
}

struct Selector<'a> {
    data: &'a DataSet,
    x0: Option<&'a DVector<f64>>,
    resamples: Vec<Resample>,
    tie_tol: f64,
    fits: AtomicUsize,
    stages: Vec<StageResult>,
}

impl Selector<'_> {
    /// Evaluates every candidate and keeps the minimizer. Near-ties go to
    /// the largest value when `prefer_larger`, the smallest otherwise.
    fn stage(
        &mut self,
        parameter: &str,
        estimator: EstimatorKind,
        values: &[f64],
        prefer_larger: bool,
        make: impl Fn(f64) -> EstimatorConfig,
    ) -> Result<f64> {
        let mut risks = Vec::with_capacity(values.len());
        for &v in values {
            let cfg = make(v);
            let fitter = |d: &DataSet| {
                self.fits.fetch_add(1, Ordering::Relaxed);
                fit(d, &cfg, self.x0)
            };
            let risk = risk_on(self.data, &self.resamples, &fitter)
                .ok()
                .filter(|r| r.is_finite());
            risks.push(risk);
        }
        let best = risks
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Err(Error::Selection {
                stage: parameter.to_string(),
                message: format!("every `{estimator}` fit failed on the candidate grid"),
            });
        }
        let cutoff = best + self.tie_tol;
        let mut chosen: Option<f64> = None;
        for (&v, r) in values.iter().zip(&risks) {
            if matches!(r, Some(r) if *r <= cutoff) {
                chosen = Some(match chosen {
                    None => v,
                    Some(c) if prefer_larger => c.max(v),
                    Some(c) => c.min(v),
                });
            }
        }
        let chosen = chosen.expect("the minimizer is within the cutoff");
        self.stages.push(StageResult {
            parameter: parameter.to_string(),
            estimator,
            values: values.to_vec(),
            risks,
            chosen,
        });
        Ok(chosen)
    }
}

/// Chooses the parameters of `base.kind` one stage at a time.
///
/// Fixed settings such as the kernel, `gamma` and `sigma_nu2` are taken
/// from `base`. Local kinds (and baselines when `x0` is given) first pick
/// the bandwidth scale `kappa`, with `h = kappa * n^{-1/(d+4)}` and `d`
/// taken from `base.d` (or `p`).
pub fn select_sequential(
    data: &DataSet,
    grid: &ParamGrid,
    base: &EstimatorConfig,
    x0: Option<&DVector<f64>>,
    seed: u64,
) -> Result<SelectedParams> {
    let p = data.p();
    let warnings = grid.validate(p)?;
    let grid = grid.resolved(p);
    base.validate(p)?;
    let target = base.kind;
    let local = target.is_local() || (target.is_baseline() && x0.is_some());
    if local && x0.is_none() {
        return Err(invalid(format!("`{target}` is a local estimator and needs x0")));
    }

    let y = data.y();
    let y_mean = y.mean();
    let y_var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / y.len() as f64;
    let mut sel = Selector {
        data,
        x0,
        resamples: draw_resamples(data.n(), grid.bootstrap, seed)?,
        tie_tol: 1e-9 * y_var.max(f64::MIN_POSITIVE),
        fits: AtomicUsize::new(0),
        stages: Vec::new(),
    };

    let mut cfg = base.clone();
    let mut kappa = None;
    if local {
        let d_bw = base.d.unwrap_or(p);
        let n = data.n();
        let ridge = base.clone().with_kind(EstimatorKind::Ridge);
        let k = sel.stage("kappa", EstimatorKind::Ridge, &grid.kappas, true, |k| {
            let h = default_bandwidth(n, d_bw, k).unwrap_or(f64::NAN);
            ridge.clone().with_h(h)
        })?;
        kappa = Some(k);
        cfg.h = Some(default_bandwidth(n, d_bw, k)?);
    }

    let dims: Vec<f64> = grid.dims.iter().map(|&d| d as f64).collect();
    let stage_lambda = target != EstimatorKind::OlsMp && target != EstimatorKind::Pcr;
    if stage_lambda {
        let ridge = cfg.clone().with_kind(EstimatorKind::Ridge);
        cfg.lambda = sel.stage("lambda", EstimatorKind::Ridge, &grid.lambdas, true, |l| {
            ridge.clone().with_lambda(l)
        })?;
    }
    if target.is_projection() || target == EstimatorKind::Pcr {
        let kind = target.base();
        let trial = cfg.clone().with_kind(kind).with_mu(0.0).with_t(0.0);
        let d = sel.stage("d", kind, &dims, false, |d| trial.clone().with_d(d as usize))?;
        cfg.d = Some(d as usize);
    }
    if target.is_adaptive() || target == EstimatorKind::ElasticNet {
        let kind = if target == EstimatorKind::ElasticNet {
            EstimatorKind::ElasticNet
        } else {
            target.adaptive()
        };
        let trial = cfg
            .clone()
            .with_kind(kind)
            .with_t(0.0)
            .with_lambda2(cfg.lambda);
        cfg.mu = sel.stage("mu", kind, &grid.mus, true, |m| trial.clone().with_mu(m))?;
    }
    if target.is_thresholded() {
        let trial = cfg.clone().with_kind(target);
        cfg.t = sel.stage("t", target, &grid.ts, true, |t| trial.clone().with_t(t))?;
    }

    Ok(SelectedParams {
        target,
        lambda: cfg.lambda,
        d: cfg.d,
        mu: cfg.mu,
        t: cfg.t,
        kappa,
        h: if local { cfg.h } else { None },
        fit_count: sel.fits.load(Ordering::Relaxed),
        stages: sel.stages,
        warnings,
    })
}

//! Exterior-derivative estimators and the baselines they are compared with.
//!
//! Every estimator reduces the data to the moments `(C, R)` of the
//! augmented design (see [`crate::localgeom`]) and solves a penalized
//! quadratic problem in the bandwidth-scaled coordinates:
//!
//! | kind      | system                                                             |
//! |-----------|--------------------------------------------------------------------|
//! | `nede`    | `(C + lambda P) b = R`, `P` from the local covariance `C22`        |
//! | `nalede`  | `nede` objective plus `mu * sum_j |b_j| / |pilot_j|^gamma`         |
//! | `nedep`   | least squares on `(T_t(C) + lambda P) b = T_t(R)`                  |
//! | `naledep` | `nedep` residual norm plus the adaptive `l1` term                  |
//! | `ede` ... | global versions with `C22 - sigma_nu2 I` and unit weights          |
//!
//! The adaptive lasso penalty never touches the intercept.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{invalid, Error, Result};
use crate::kernel::{weight_matrix, Kernel};
use crate::localgeom::{
    eigendecompose_sym, global_gram, numerical_rank_sym, pinv, projection_matrices, threshold,
    threshold_vector, weighted_gram, LocalGram, ProjectionPair, SymEigen, RANK_TOL,
};
use crate::solvers::{
    coordinate_descent_wl1, solve_penalized_wls, sym_is_nonsingular, QuadraticProblem,
    SolverReport, CD_MAX_ITER, CD_TOL,
};

/// Relative eigenvalue cutoff for the default manifold dimension.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Nede,
    Nalede,
    Nedep,
    Naledep,
    Ede,
    Alede,
    Edep,
    Aledep,
    #[serde(rename = "ols")]
    OlsMp,
    Ridge,
    Pcr,
    #[serde(rename = "en")]
    ElasticNet,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 12] = [
        EstimatorKind::Nede,
        EstimatorKind::Nalede,
        EstimatorKind::Nedep,
        EstimatorKind::Naledep,
        EstimatorKind::Ede,
        EstimatorKind::Alede,
        EstimatorKind::Edep,
        EstimatorKind::Aledep,
        EstimatorKind::OlsMp,
        EstimatorKind::Ridge,
        EstimatorKind::Pcr,
        EstimatorKind::ElasticNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Nede => "nede",
            EstimatorKind::Nalede => "nalede",
            EstimatorKind::Nedep => "nedep",
            EstimatorKind::Naledep => "naledep",
            EstimatorKind::Ede => "ede",
            EstimatorKind::Alede => "alede",
            EstimatorKind::Edep => "edep",
            EstimatorKind::Aledep => "aledep",
            EstimatorKind::OlsMp => "ols",
            EstimatorKind::Ridge => "ridge",
            EstimatorKind::Pcr => "pcr",
            EstimatorKind::ElasticNet => "en",
        }
    }

    /// Kernel-localized at a point `x0`.
    pub fn is_local(self) -> bool {
        matches!(
            self,
            EstimatorKind::Nede
                | EstimatorKind::Nalede
                | EstimatorKind::Nedep
                | EstimatorKind::Naledep
        )
    }

    /// One of the tangent-projection estimators (not a baseline).
    pub fn is_projection(self) -> bool {
        !self.is_baseline()
    }

    pub fn is_baseline(self) -> bool {
        matches!(
            self,
            EstimatorKind::OlsMp
                | EstimatorKind::Ridge
                | EstimatorKind::Pcr
                | EstimatorKind::ElasticNet
        )
    }

    pub fn is_adaptive(self) -> bool {
        matches!(
            self,
            EstimatorKind::Nalede
                | EstimatorKind::Naledep
                | EstimatorKind::Alede
                | EstimatorKind::Aledep
        )
    }

    pub fn is_thresholded(self) -> bool {
        matches!(
            self,
            EstimatorKind::Nedep
                | EstimatorKind::Naledep
                | EstimatorKind::Edep
                | EstimatorKind::Aledep
        )
    }

    /// The same family with the adaptive stage and thresholding removed.
    pub fn base(self) -> EstimatorKind {
        if self.is_local() {
            EstimatorKind::Nede
        } else if self.is_projection() {
            EstimatorKind::Ede
        } else {
            self
        }
    }

    /// Adaptive-lasso member of the same (local or global) family.
    pub fn adaptive(self) -> EstimatorKind {
        if self.is_local() {
            EstimatorKind::Nalede
        } else {
            EstimatorKind::Alede
        }
    }

    /// Gaussian for fixed-dimension fits, biweight (finite support) for the
    /// thresholded local estimators.
    pub fn default_kernel(self) -> Kernel {
        match self {
            EstimatorKind::Nedep | EstimatorKind::Naledep => Kernel::Biweight,
            _ => Kernel::Gaussian,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let alias = match s.as_str() {
            "ols_mp" | "mp" | "olsmp" => "ols",
            "elasticnet" | "elastic_net" => "en",
            "rr" => "ridge",
            other => other,
        };
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| invalid(format!("unknown estimator `{s}`")))
    }
}

/// Estimator kind and every tunable. Fields that a kind does not use are
/// ignored but still validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Bandwidth; required by local kinds and by localized baselines.
    pub h: Option<f64>,
    pub kernel: Kernel,
    /// Tikhonov strength on the normal-space projection.
    pub lambda: f64,
    /// Manifold dimension; the numerical rank of `C22` when unset.
    pub d: Option<usize>,
    /// Strength of the (adaptive) `l1` penalty.
    pub mu: f64,
    /// Exponent of the adaptive weights.
    pub gamma: f64,
    /// Covariance threshold.
    pub t: f64,
    /// Predictor noise variance subtracted from the global covariance.
    pub sigma_nu2: f64,
    /// Ridge strength of the elastic net.
    pub lambda2: f64,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            h: None,
            kernel: kind.default_kernel(),
            lambda: 1.0,
            d: None,
            mu: 0.0,
            gamma: 1.0,
            t: 0.0,
            sigma_nu2: 0.0,
            lambda2: 0.0,
        }
    }

    pub fn with_kind(mut self, kind: EstimatorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = Some(h);
        self
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = Some(d);
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_t(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn with_sigma_nu2(mut self, sigma_nu2: f64) -> Self {
        self.sigma_nu2 = sigma_nu2;
        self
    }

    pub fn with_lambda2(mut self, lambda2: f64) -> Self {
        self.lambda2 = lambda2;
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let nonneg = [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("t", self.t),
            ("sigma_nu2", self.sigma_nu2),
            ("lambda2", self.lambda2),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if let Some(h) = self.h {
            if !(h > 0.0) || !h.is_finite() {
                return Err(invalid(format!("bandwidth must be positive, got {h}")));
            }
        }
        if let Some(d) = self.d {
            if d > p {
                return Err(invalid(format!("manifold dimension {d} exceeds p = {p}")));
            }
        }
        Ok(())
    }
}

/// Numerical side information attached to every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Eigenvalues of the (scaled, corrected, thresholded) covariance block
    /// the projection was built from, descending.
    pub eigenvalues: Vec<f64>,
    pub spectral_gap: Option<f64>,
    pub effective_n: f64,
    /// Manifold dimension actually used.
    pub d: Option<usize>,
    pub solver: Option<SolverReport>,
    pub notes: Vec<String>,
    pub config: EstimatorConfig,
}

impl Diagnostics {
    pub fn converged(&self) -> bool {
        self.solver.as_ref().map_or(true, |s| s.converged)
    }

    pub fn kkt_residual(&self) -> f64 {
        self.solver.as_ref().map_or(0.0, |s| s.kkt_residual)
    }
}

pub const NOTE_PINV_FALLBACK: &str = "penalized system singular; minimum-norm solution returned";
pub const NOTE_DEGENERATE_THRESHOLD: &str = "threshold removed every moment; zero estimate";
pub const NOTE_INFINITE_SUPPORT: &str =
    "thresholded local estimator used with a kernel of unbounded support";

/// Fitted function value and exterior derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// Function value at `center`.
    pub f_hat: f64,
    pub dxf_hat: DVector<f64>,
    /// Evaluation point of a local fit; `None` for global fits.
    pub x0: Option<DVector<f64>>,
    /// Point the design was centered at (`x0`, or the column means).
    pub center: DVector<f64>,
    pub diagnostics: Diagnostics,
}

impl Estimate {
    /// `(f_hat, dxf_hat)` stacked.
    pub fn beta(&self) -> DVector<f64> {
        let p = self.dxf_hat.len();
        let mut b = DVector::zeros(p + 1);
        b[0] = self.f_hat;
        b.rows_mut(1, p).copy_from(&self.dxf_hat);
        b
    }

    /// Linear prediction `f_hat + dxf_hat . (x - center)`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.f_hat
            + self
                .dxf_hat
                .iter()
                .zip(x.iter().zip(self.center.iter()))
                .map(|(b, (xi, ci))| b * (xi - ci))
                .sum::<f64>()
    }

    /// Coefficients re-expressed with the intercept at `at`.
    pub fn beta_at(&self, at: &DVector<f64>) -> DVector<f64> {
        let mut b = self.beta();
        b[0] = self.predict(at.as_slice());
        b
    }

    pub fn to_record(&self) -> EstimateRecord {
        let d = &self.diagnostics;
        EstimateRecord {
            estimator: d.config.kind,
            f_hat: self.f_hat,
            dxf_hat: self.dxf_hat.as_slice().to_vec(),
            x0: self.x0.as_ref().map(|v| v.as_slice().to_vec()),
            center: self.center.as_slice().to_vec(),
            diagnostics: DiagnosticsRecord {
                eigenvalues: d.eigenvalues.clone(),
                spectral_gap: d.spectral_gap,
                effective_n: d.effective_n,
                kkt_residual: d.kkt_residual(),
                converged: d.converged(),
                iterations: d.solver.as_ref().map(|s| s.iterations),
                d: d.d,
                notes: d.notes.clone(),
                config: d.config.clone(),
            },
        }
    }
}

/// Serialized form of an [`Estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimator: EstimatorKind,
    pub f_hat: f64,
    pub dxf_hat: Vec<f64>,
    pub x0: Option<Vec<f64>>,
    pub center: Vec<f64>,
    pub diagnostics: DiagnosticsRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub eigenvalues: Vec<f64>,
    pub spectral_gap: Option<f64>,
    pub effective_n: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub d: Option<usize>,
    pub notes: Vec<String>,
    pub config: EstimatorConfig,
}

/// Fits any estimator kind.
///
/// Local kinds require `x0` and a bandwidth. Baselines are localized when
/// `x0` is given, and global otherwise. The global projection family
/// (`ede`, `alede`, `edep`, `aledep`) ignores `x0`.
pub fn fit(data: &DataSet, config: &EstimatorConfig, x0: Option<&DVector<f64>>) -> Result<Estimate> {
    config.validate(data.p())?;
    let kind = config.kind;
    let localize = kind.is_local() || (kind.is_baseline() && x0.is_some());
    let (gram, effective_n) = if localize {
        let x0 = x0.ok_or_else(|| invalid(format!("`{kind}` is a local estimator and needs x0")))?;
        let h = config
            .h
            .ok_or_else(|| invalid(format!("`{kind}` at a point needs a bandwidth")))?;
        let weights = weight_matrix(data, x0, h, config.kernel)?;
        let gram = weighted_gram(data, &weights)?;
        (gram, weights.effective_n)
    } else {
        (global_gram(data), data.n() as f64)
    };
    let mut est = fit_from_gram(&gram, config)?;
    est.diagnostics.effective_n = effective_n;
    if !localize {
        est.x0 = None;
    }
    Ok(est)
}

fn expect_kind(config: &EstimatorConfig, kinds: &[EstimatorKind]) -> Result<()> {
    if kinds.contains(&config.kind) {
        Ok(())
    } else {
        Err(invalid(format!(
            "configuration is for `{}`, expected one of {:?}",
            config.kind,
            kinds.iter().map(|k| k.name()).collect::<Vec<_>>()
        )))
    }
}

pub fn fit_nede(data: &DataSet, x0: &DVector<f64>, config: &EstimatorConfig) -> Result<Estimate> {
    expect_kind(config, &[EstimatorKind::Nede])?;
    fit(data, config, Some(x0))
}

pub fn fit_nalede(data: &DataSet, x0: &DVector<f64>, config: &EstimatorConfig) -> Result<Estimate> {
    expect_kind(config, &[EstimatorKind::Nalede])?;
    fit(data, config, Some(x0))
}

pub fn fit_nedep(data: &DataSet, x0: &DVector<f64>, config: &EstimatorConfig) -> Result<Estimate> {
    expect_kind(config, &[EstimatorKind::Nedep])?;
    fit(data, config, Some(x0))
}

pub fn fit_naledep(data: &DataSet, x0: &DVector<f64>, config: &EstimatorConfig) -> Result<Estimate> {
    expect_kind(config, &[EstimatorKind::Naledep])?;
    fit(data, config, Some(x0))
}

pub fn fit_ede(data: &DataSet, config: &EstimatorConfig) -> Result<Estimate> {
    expect_kind(config, &[EstimatorKind::Ede])?;
    fit(data, config, None)
}

pub fn fit_alede(data: &DataSet, config: &EstimatorConfig) -> Result<Estimate> {
    expect_kind(config, &[EstimatorKind::Alede])?;
    fit(data, config, None)
}

pub fn fit_edep(data: &DataSet, config: &EstimatorConfig) -> Result<Estimate> {
    expect_kind(config, &[EstimatorKind::Edep])?;
    fit(data, config, None)
}

pub fn fit_aledep(data: &DataSet, config: &EstimatorConfig) -> Result<Estimate> {
    expect_kind(config, &[EstimatorKind::Aledep])?;
    fit(data, config, None)
}

pub fn fit_baseline(
    data: &DataSet,
    config: &EstimatorConfig,
    x0: Option<&DVector<f64>>,
) -> Result<Estimate> {
    expect_kind(
        config,
        &[
            EstimatorKind::OlsMp,
            EstimatorKind::Ridge,
            EstimatorKind::Pcr,
            EstimatorKind::ElasticNet,
        ],
    )?;
    fit(data, config, x0)
}

/// Intermediate state shared by the projection estimators.
struct Projected {
    /// The moment matrix actually penalized (corrected/thresholded).
    c: DMatrix<f64>,
    r: DVector<f64>,
    pair: ProjectionPair,
}

impl Projected {
    fn system(&self, lambda: f64) -> DMatrix<f64> {
        &self.c + &self.pair.p_hat * lambda
    }
}

/// Fits from precomputed moments. `gram.h` sets the coefficient scaling;
/// use `h = 1` for unlocalized moments.
pub fn fit_from_gram(gram: &LocalGram, config: &EstimatorConfig) -> Result<Estimate> {
    let p = gram.p();
    config.validate(p)?;
    let (cs, rs) = gram.scaled();
    let kind = config.kind;
    let mut notes = Vec::new();
    if kind.is_local() && kind.is_thresholded() && !config.kernel.has_finite_support() {
        notes.push(NOTE_INFINITE_SUPPORT.to_string());
    }

    let mut eig_info: Option<(Vec<f64>, Option<f64>, usize)> = None;
    let mut solver = None;
    let gamma = match kind {
        EstimatorKind::Nede | EstimatorKind::Ede => {
            let proj = project(&cs, &rs, config, false)?;
            eig_info = Some(eig_summary(&proj.pair));
            solve_penalized_wls(&proj.c, &proj.r, config.lambda, &proj.pair.p_hat)?
        }
        EstimatorKind::Nedep | EstimatorKind::Edep => {
            let proj = project(&cs, &rs, config, true)?;
            eig_info = Some(eig_summary(&proj.pair));
            residual_solve(&proj.c, &proj.system(config.lambda), &proj.r, &mut notes)?
        }
        EstimatorKind::Nalede | EstimatorKind::Alede => {
            let proj = project(&cs, &rs, config, false)?;
            eig_info = Some(eig_summary(&proj.pair));
            let m = proj.system(config.lambda);
            let pilot = solve_penalized_wls(&proj.c, &proj.r, config.lambda, &proj.pair.p_hat)?;
            let (a, b) = if kind == EstimatorKind::Nalede {
                (m, proj.r.clone())
            } else {
                normal_form(&m, &proj.r)
            };
            let report = adaptive_stage(a, b, pilot, config)?;
            let beta = DVector::from_column_slice(&report.beta);
            solver = Some(report);
            beta
        }
        EstimatorKind::Naledep | EstimatorKind::Aledep => {
            let proj = project(&cs, &rs, config, true)?;
            eig_info = Some(eig_summary(&proj.pair));
            let m = proj.system(config.lambda);
            let pilot = residual_solve(&proj.c, &m, &proj.r, &mut notes)?;
            let (a, b) = normal_form(&m, &proj.r);
            let report = adaptive_stage(a, b, pilot, config)?;
            let beta = DVector::from_column_slice(&report.beta);
            solver = Some(report);
            beta
        }
        EstimatorKind::OlsMp => pinv(&cs, RANK_TOL) * &rs,
        EstimatorKind::Ridge => solve_penalized_wls(&cs, &rs, config.lambda, &ridge_penalty(p))?,
        EstimatorKind::Pcr => {
            let (beta, info) = pcr(&cs, &rs, config.d)?;
            eig_info = Some(info);
            beta
        }
        EstimatorKind::ElasticNet => {
            let a = &cs + ridge_penalty(p) * config.lambda2;
            let mut pw = DVector::from_element(p + 1, 1.0);
            pw[0] = 0.0;
            let problem = QuadraticProblem::new(a, rs.clone(), pw, config.mu)?;
            let report = coordinate_descent_wl1(&problem, None, CD_TOL, CD_MAX_ITER)?;
            let beta = DVector::from_column_slice(&report.beta);
            solver = Some(report);
            beta
        }
    };

    let beta = gram.unscale_coefficients(&gamma);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient {
            min_eig: f64::NAN,
            max_eig: f64::NAN,
        });
    }
    let (eigenvalues, spectral_gap, d) = match eig_info {
        Some((e, g, d)) => (e, g, Some(d)),
        None => (Vec::new(), None, None),
    };
    Ok(Estimate {
        f_hat: beta[0],
        dxf_hat: beta.rows(1, p).into_owned(),
        x0: kind.is_local().then(|| gram.x0.clone()),
        center: gram.x0.clone(),
        diagnostics: Diagnostics {
            eigenvalues,
            spectral_gap,
            effective_n: gram.sum_w,
            d,
            solver,
            notes,
            config: config.clone(),
        },
    })
}

fn eig_summary(pair: &ProjectionPair) -> (Vec<f64>, Option<f64>, usize) {
    (
        pair.eigenvalues.as_slice().to_vec(),
        pair.spectral_gap(),
        pair.d(),
    )
}

fn ridge_penalty(p: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(p + 1, p + 1);
    m[(0, 0)] = 0.0;
    m
}

fn c22_of(c: &DMatrix<f64>) -> DMatrix<f64> {
    let p = c.nrows() - 1;
    c.view((1, 1), (p, p)).into_owned()
}

/// Builds the penalized moments for the projection family: optional
/// thresholding, the errors-in-variables correction for global kinds, and
/// the tangent/normal split of the resulting covariance block.
fn project(
    cs: &DMatrix<f64>,
    rs: &DVector<f64>,
    config: &EstimatorConfig,
    thresholded: bool,
) -> Result<Projected> {
    let (mut c, r) = if thresholded {
        (threshold(cs, config.t)?, threshold_vector(rs, config.t)?)
    } else {
        (cs.clone(), rs.clone())
    };
    let p = c.nrows() - 1;
    let eig = if !config.kind.is_local() && config.sigma_nu2 > 0.0 {
        let corrected = correct_noise(&c22_of(&c), config.sigma_nu2)?;
        let rebuilt = reconstruct(&corrected);
        c.view_mut((1, 1), (p, p)).copy_from(&rebuilt);
        corrected
    } else {
        eigendecompose_sym(&c22_of(&c))?
    };
    let d = config
        .d
        .unwrap_or_else(|| numerical_rank_sym(&eig.values, DEFAULT_RANK_TOL));
    let pair = projection_matrices(&eig, d)?;
    Ok(Projected { c, r, pair })
}

/// Eigendecomposition of `c22 - sigma_nu2 I` with negative eigenvalues
/// floored at zero.
fn correct_noise(c22: &DMatrix<f64>, sigma_nu2: f64) -> Result<SymEigen> {
    let p = c22.nrows();
    let shifted = c22 - DMatrix::<f64>::identity(p, p) * sigma_nu2;
    let mut eig = eigendecompose_sym(&shifted)?;
    let max_eig = eig.values.max();
    if !(max_eig > 0.0) {
        return Err(Error::NegativeCorrectedCovariance {
            sigma_nu2,
            max_eig: max_eig + sigma_nu2,
        });
    }
    eig.values.apply(|v| *v = v.max(0.0));
    Ok(eig)
}

fn reconstruct(eig: &SymEigen) -> DMatrix<f64> {
    let v = &eig.vectors;
    let mut m = v * DMatrix::from_diagonal(&eig.values) * v.transpose();
    let k = m.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    m
}

/// Minimizer of `|M b - r|^2`: the exact solution when `M` is invertible,
/// the minimum-norm least-squares solution otherwise.
/// A thresholded covariance `moments` with no surviving entry gives the
/// zero estimate.
fn residual_solve(
    moments: &DMatrix<f64>,
    m: &DMatrix<f64>,
    r: &DVector<f64>,
    notes: &mut Vec<String>,
) -> Result<DVector<f64>> {
    if moments.iter().all(|v| *v == 0.0) {
        notes.push(NOTE_DEGENERATE_THRESHOLD.to_string());
        return Ok(DVector::zeros(r.len()));
    }
    if sym_is_nonsingular(m)? {
        if let Some(sol) = m.clone().lu().solve(r) {
            return Ok(sol);
        }
    }
    notes.push(NOTE_PINV_FALLBACK.to_string());
    Ok(pinv(m, RANK_TOL) * r)
}

/// `(M^T M, M^T r)`: the quadratic form of `|M b - r|^2`.
fn normal_form(m: &DMatrix<f64>, r: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mt = m.transpose();
    let mut a = &mt * m;
    let k = a.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    (a, mt * r)
}

/// Adaptive-lasso weights `1 / |pilot_j|^gamma`; zero pilots give infinite
/// weight and the intercept is never penalized.
pub fn adaptive_weights(pilot: &DVector<f64>, gamma: f64) -> DVector<f64> {
    DVector::from_fn(pilot.len(), |j, _| {
        if j == 0 {
            0.0
        } else if pilot[j] == 0.0 {
            f64::INFINITY
        } else {
            pilot[j].abs().powf(-gamma)
        }
    })
}

fn adaptive_stage(
    a: DMatrix<f64>,
    b: DVector<f64>,
    pilot: DVector<f64>,
    config: &EstimatorConfig,
) -> Result<SolverReport> {
    let pw = adaptive_weights(&pilot, config.gamma);
    let problem = QuadraticProblem::new(a, b, pw, config.mu)?;
    coordinate_descent_wl1(&problem, Some(pilot), CD_TOL, CD_MAX_ITER)
}

/// Principal component regression on the leading `d` eigenvectors of `C22`.
fn pcr(
    cs: &DMatrix<f64>,
    rs: &DVector<f64>,
    d: Option<usize>,
) -> Result<(DVector<f64>, (Vec<f64>, Option<f64>, usize))> {
    let p = cs.nrows() - 1;
    let eig = eigendecompose_sym(&c22_of(cs))?;
    let d = d.unwrap_or_else(|| numerical_rank_sym(&eig.values, DEFAULT_RANK_TOL));
    let pair = projection_matrices(&eig, d)?;
    // Basis of the reduced design: intercept plus the leading components.
    let mut basis = DMatrix::zeros(p + 1, d + 1);
    basis[(0, 0)] = 1.0;
    basis.view_mut((1, 1), (p, d)).copy_from(&pair.u_r);
    let reduced_c = basis.transpose() * cs * &basis;
    let reduced_r = basis.transpose() * rs;
    let alpha = pinv(&reduced_c, RANK_TOL) * reduced_r;
    Ok((basis * alpha, eig_summary(&pair)))
}

/// Sign of each entry, with magnitudes at or below `tol` counted as zero.
pub fn sign_pattern(v: &[f64], tol: f64) -> Vec<i8> {
    v.iter()
        .map(|&x| {
            if x > tol {
                1
            } else if x < -tol {
                -1
            } else {
                0
            }
        })
        .collect()
}

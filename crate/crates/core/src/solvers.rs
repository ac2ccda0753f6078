//! Quadratic solvers shared by all estimators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::localgeom::eigendecompose_sym;

/// Default stopping tolerance for coordinate descent.
pub const CD_TOL: f64 = 1e-8;
/// Default sweep limit for coordinate descent.
pub const CD_MAX_ITER: usize = 100_000;

/// Ratio below which a symmetric system is treated as singular.
const SINGULAR_RATIO: f64 = 1e-12;

/// Solves `(C + lambda * P) beta = R` for symmetric positive definite
/// `C + lambda * P`.
pub fn solve_penalized_wls(
    c: &DMatrix<f64>,
    r: &DVector<f64>,
    lambda: f64,
    p_hat: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if !(lambda >= 0.0) {
        return Err(invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    if c.shape() != p_hat.shape() || c.nrows() != r.len() {
        return Err(invalid("system dimensions disagree"));
    }
    let a = c + p_hat * lambda;
    solve_spd(&a, r)
}

/// Symmetric positive definite solve with an explicit conditioning check.
///
/// Conditioning is judged after symmetric diagonal scaling, so systems that
/// are only badly scaled (as with a very large bandwidth) are accepted.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = eigendecompose_sym(&equilibrate(a))?;
    let max_eig = eig.values.max();
    let min_eig = eig.values.min();
    if !(max_eig > 0.0) || min_eig <= SINGULAR_RATIO * max_eig {
        return Err(Error::RankDeficient { min_eig, max_eig });
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or(Error::RankDeficient { min_eig, max_eig })?;
    Ok(chol.solve(b))
}

/// Whether a symmetric matrix is safely invertible.
pub(crate) fn sym_is_nonsingular(a: &DMatrix<f64>) -> Result<bool> {
    let eig = eigendecompose_sym(&equilibrate(a))?;
    let max_abs = eig.values.amax();
    let min_abs = eig.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    Ok(max_abs > 0.0 && min_abs > SINGULAR_RATIO * max_abs)
}

/// `D A D` with `D = diag(|a_jj|^{-1/2})`; zero diagonal entries are left
/// unscaled.
fn equilibrate(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d: Vec<f64> = (0..a.nrows())
        .map(|j| {
            let v = a[(j, j)].abs();
            if v > 0.0 && v.is_finite() {
                v.sqrt().recip()
            } else {
                1.0
            }
        })
        .collect();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[i] * d[j])
}

/// `sign(z) * max(|z| - a, 0)`.
pub fn soft_threshold(z: f64, a: f64) -> f64 {
    if z > a {
        z - a
    } else if z < -a {
        z + a
    } else {
        0.0
    }
}

/// `beta^T A beta - 2 b^T beta + mu * sum_j pw_j |beta_j|`.
///
/// Penalty weights may be `+inf`; such coordinates are pinned at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub penalty_weights: DVector<f64>,
    pub mu: f64,
}

impl QuadraticProblem {
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        penalty_weights: DVector<f64>,
        mu: f64,
    ) -> Result<Self> {
        let k = b.len();
        if a.shape() != (k, k) || penalty_weights.len() != k {
            return Err(invalid("quadratic problem dimensions disagree"));
        }
        if !(mu >= 0.0) {
            return Err(invalid(format!("mu must be nonnegative, got {mu}")));
        }
        if penalty_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("penalty weights must be nonnegative"));
        }
        Ok(Self {
            a,
            b,
            penalty_weights,
            mu,
        })
    }

    fn pinned(&self, j: usize) -> bool {
        self.penalty_weights[j].is_infinite()
    }

    fn l1_weight(&self, j: usize) -> f64 {
        if self.penalty_weights[j] == 0.0 {
            0.0
        } else {
            self.mu * self.penalty_weights[j]
        }
    }

    pub fn objective(&self, beta: &DVector<f64>) -> f64 {
        let quad = beta.dot(&(&self.a * beta)) - 2.0 * self.b.dot(beta);
        let l1: f64 = (0..beta.len())
            .filter(|&j| beta[j] != 0.0)
            .map(|j| self.l1_weight(j) * beta[j].abs())
            .sum();
        quad + l1
    }

    /// Largest violation of the optimality conditions at `beta`.
    pub fn kkt_residual(&self, beta: &DVector<f64>) -> f64 {
        let grad = (&self.a * beta - &self.b) * 2.0;
        (0..beta.len())
            .map(|j| {
                if self.pinned(j) {
                    if beta[j] == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else if beta[j] != 0.0 {
                    (grad[j] + self.l1_weight(j) * beta[j].signum()).abs()
                } else {
                    (grad[j].abs() - self.l1_weight(j)).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Output of [`coordinate_descent_wl1`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Cyclic coordinate descent with soft-thresholding updates.
///
/// Stops once the largest coordinate change in a sweep and the KKT residual
/// are both below `tol`. If `max_iter` sweeps pass first, the current
/// iterate is returned with `converged = false`.
pub fn coordinate_descent_wl1(
    problem: &QuadraticProblem,
    warm_start: Option<DVector<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<SolverReport> {
    coordinate_descent_traced(problem, warm_start, tol, max_iter, |_| {})
}

/// Same as [`coordinate_descent_wl1`], calling `on_sweep` with the
/// iterate after every sweep.
pub fn coordinate_descent_traced(
    problem: &QuadraticProblem,
    warm_start: Option<DVector<f64>>,
    tol: f64,
    max_iter: usize,
    mut on_sweep: impl FnMut(&DVector<f64>),
) -> Result<SolverReport> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let k = problem.b.len();
    let mut beta = match warm_start {
        Some(w) if w.len() == k => w,
        Some(_) => return Err(invalid("warm start has the wrong length")),
        None => DVector::zeros(k),
    };
    for j in 0..k {
        if problem.pinned(j) || !beta[j].is_finite() {
            beta[j] = 0.0;
        }
    }
    let a = &problem.a;
    // grad = A beta - b, kept current across updates.
    let mut grad = a * &beta - &problem.b;

    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut max_step = 0.0f64;
        for j in 0..k {
            if problem.pinned(j) {
                continue;
            }
            let ajj = a[(j, j)];
            let old = beta[j];
            let new = if ajj > 0.0 {
                let z = ajj * old - grad[j];
                soft_threshold(z, 0.5 * problem.l1_weight(j)) / ajj
            } else {
                0.0
            };
            let step = new - old;
            if step != 0.0 {
                beta[j] = new;
                grad.axpy(step, &a.column(j), 1.0);
                max_step = max_step.max(step.abs());
            }
        }
        on_sweep(&beta);
        if max_step < tol {
            grad = a * &beta - &problem.b;
            let kkt = problem.kkt_residual(&beta);
            if kkt < tol {
                return Ok(SolverReport {
                    beta: beta.as_slice().to_vec(),
                    iterations,
                    kkt_residual: kkt,
                    converged: true,
                });
            }
        }
    }
    Ok(SolverReport {
        kkt_residual: problem.kkt_residual(&beta),
        beta: beta.as_slice().to_vec(),
        iterations,
        converged: false,
    })
}

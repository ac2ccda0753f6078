//! Local moments and the geometry extracted from them.
//!
//! The weighted Gram matrix of the augmented, centered design
//! `a_i = (1, X_i - x0)` is
//!
//! ```text
//! C = sum_i w_i a_i a_i^T / sum_i w_i,      R = sum_i w_i a_i Y_i / sum_i w_i.
//! ```
//!
//! Its lower-right block `C22` is a local covariance matrix. The leading `d`
//! eigenvectors of `C22` estimate the tangent space of the predictor manifold
//! at `x0`; the remaining `p - d` span the estimated normal space, and
//! `Pi = U_N U_N^T` projects onto it.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::data::DataSet;
use crate::error::{invalid, Error, Result};
use crate::kernel::LocalWeights;

/// Default relative cutoff used when deciding the rank of a matrix.
pub const RANK_TOL: f64 = 1e-10;

/// Localized second moments of the augmented design.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGram {
    /// `(p+1) x (p+1)` symmetric moment matrix.
    pub c: DMatrix<f64>,
    /// `(p+1)` cross moment with the response.
    pub r: DVector<f64>,
    pub h: f64,
    pub x0: DVector<f64>,
    pub sum_w: f64,
}

impl LocalGram {
    /// Builds a gram from externally computed moments.
    pub fn from_moments(
        c: DMatrix<f64>,
        r: DVector<f64>,
        h: f64,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let k = c.nrows();
        if k < 2 || c.ncols() != k || r.len() != k || x0.len() + 1 != k {
            return Err(invalid("inconsistent moment dimensions"));
        }
        if !(h > 0.0) {
            return Err(invalid("bandwidth must be positive"));
        }
        Ok(Self {
            c,
            r,
            h,
            x0,
            sum_w: 1.0,
        })
    }

    pub fn p(&self) -> usize {
        self.c.nrows() - 1
    }

    pub fn c22(&self) -> DMatrix<f64> {
        let p = self.p();
        self.c.view((1, 1), (p, p)).into_owned()
    }

    /// Moments of the bandwidth-scaled design `(1, (X_i - x0) / h)`.
    ///
    /// Solving in these coordinates and mapping back with
    /// [`unscale_coefficients`](Self::unscale_coefficients) leaves the
    /// unpenalized solution unchanged while making the penalty
    /// dimensionless.
    pub fn scaled(&self) -> (DMatrix<f64>, DVector<f64>) {
        let s = self.scale_vector();
        let c = DMatrix::from_fn(self.c.nrows(), self.c.ncols(), |i, j| {
            self.c[(i, j)] * s[i] * s[j]
        });
        let r = self.r.component_mul(&s);
        (c, r)
    }

    pub fn unscale_coefficients(&self, gamma: &DVector<f64>) -> DVector<f64> {
        gamma.component_mul(&self.scale_vector())
    }

    pub fn scale_coefficients(&self, beta: &DVector<f64>) -> DVector<f64> {
        beta.component_div(&self.scale_vector())
    }

    fn scale_vector(&self) -> DVector<f64> {
        let mut s = DVector::from_element(self.c.nrows(), 1.0 / self.h);
        s[0] = 1.0;
        s
    }
}

/// Weighted Gram matrix and cross moment centered at `weights.x0`.
pub fn weighted_gram(data: &DataSet, weights: &LocalWeights) -> Result<LocalGram> {
    let n = data.n();
    let p = data.p();
    if weights.w.len() != n || weights.x0.len() != p {
        return Err(invalid("weights do not match the data"));
    }
    let sum_w = weights.w.sum();
    if !(sum_w > 0.0) {
        return Err(Error::DegenerateNeighborhood { sum_w });
    }
    let mut c = DMatrix::<f64>::zeros(p + 1, p + 1);
    let mut r = DVector::<f64>::zeros(p + 1);
    let mut a = DVector::<f64>::zeros(p + 1);
    a[0] = 1.0;
    for (i, row) in data.x().row_iter().enumerate() {
        let wi = weights.w[i];
        if wi == 0.0 {
            continue;
        }
        for j in 0..p {
            a[j + 1] = row[j] - weights.x0[j];
        }
        c.ger(wi, &a, &a, 1.0);
        r.axpy(wi * data.y()[i], &a, 1.0);
    }
    c /= sum_w;
    r /= sum_w;
    symmetrize(&mut c);
    Ok(LocalGram {
        c,
        r,
        h: weights.h,
        x0: weights.x0.clone(),
        sum_w,
    })
}

/// Unit-weight Gram matrix centered at the column means, `h = 1`.
pub fn global_gram(data: &DataSet) -> LocalGram {
    let weights = LocalWeights::uniform(data.n(), data.column_means());
    weighted_gram(data, &weights).expect("uniform weights are never degenerate")
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
///
/// Each eigenvector is signed so its largest-magnitude component is
/// positive; exact ties go to the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

pub fn eigendecompose_sym(m: &DMatrix<f64>) -> Result<SymEigen> {
    if m.nrows() != m.ncols() {
        return Err(invalid("eigendecomposition needs a square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let k = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values = DVector::from_iterator(k, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        let mut lead = 0;
        for i in 1..k {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(dst, &v);
    }
    Ok(SymEigen { values, vectors })
}

/// Tangent/normal split of a local covariance and the derived projections.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    /// `p x d`, leading eigenvectors (estimated tangent space).
    pub u_r: DMatrix<f64>,
    /// `p x (p-d)`, trailing eigenvectors (estimated normal space).
    pub u_n: DMatrix<f64>,
    /// `U_N U_N^T`.
    pub pi: DMatrix<f64>,
    /// `diag(0, Pi)`, acting on `(intercept, derivative)` vectors.
    pub p_hat: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
}

impl ProjectionPair {
    pub fn d(&self) -> usize {
        self.u_r.ncols()
    }

    /// `lambda_d - lambda_{d+1}`; `None` when either side of the split is empty.
    pub fn spectral_gap(&self) -> Option<f64> {
        let d = self.d();
        if d == 0 || d == self.eigenvalues.len() {
            None
        } else {
            Some(self.eigenvalues[d - 1] - self.eigenvalues[d])
        }
    }
}

pub fn projection_matrices(eig: &SymEigen, d: usize) -> Result<ProjectionPair> {
    let p = eig.values.len();
    if d > p {
        return Err(invalid(format!("manifold dimension {d} exceeds p = {p}")));
    }
    let u_r = eig.vectors.columns(0, d).into_owned();
    let u_n = eig.vectors.columns(d, p - d).into_owned();
    let mut pi = &u_n * u_n.transpose();
    symmetrize(&mut pi);
    let mut p_hat = DMatrix::zeros(p + 1, p + 1);
    p_hat.view_mut((1, 1), (p, p)).copy_from(&pi);
    Ok(ProjectionPair {
        u_r,
        u_n,
        pi,
        p_hat,
        eigenvalues: eig.values.clone(),
    })
}

/// Number of eigenvalues above `rel_tol` times the largest magnitude.
pub fn numerical_rank_sym(values: &DVector<f64>, rel_tol: f64) -> usize {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    values.iter().filter(|&&v| v > rel_tol * scale).count()
}

/// Elementwise hard threshold: entries with `|m| <= t` become zero.
pub fn threshold(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    check_threshold(t)?;
    Ok(m.map(|v| if v.abs() > t { v } else { 0.0 }))
}

pub fn threshold_vector(v: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    check_threshold(t)?;
    Ok(v.map(|x| if x.abs() > t { x } else { 0.0 }))
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(invalid(format!("threshold must be nonnegative, got {t}")));
    }
    Ok(())
}

/// Moore-Penrose pseudoinverse; singular values at or below
/// `tol * sigma_max` are treated as zero.
pub fn pinv(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.max();
    let mut out = DMatrix::zeros(cols, rows);
    if smax <= 0.0 {
        return out;
    }
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol * smax {
            out.ger(1.0 / s, &v_t.row(k).transpose(), &u.column(k), 1.0);
        }
    }
    out
}

/// Orthogonal projector onto the column space of `m`.
pub fn range_projector(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return DMatrix::zeros(rows, rows);
    }
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.as_ref().expect("u requested");
    let smax = svd.singular_values.max();
    let mut proj = DMatrix::zeros(rows, rows);
    if smax <= 0.0 {
        return proj;
    }
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol * smax {
            proj.ger(1.0, &u.column(k), &u.column(k), 1.0);
        }
    }
    proj
}

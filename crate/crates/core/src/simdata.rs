//! Simulated collinear regression problems with a known exterior derivative.
//!
//! Predictors live on the range of a rank-deficient mixing matrix `F`
//! (linear model) or on its image under an elementwise `sin` (nonlinear
//! model). In both cases the exterior derivative at the origin is the
//! orthogonal projection of the coefficient vector `w` onto `range(F)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{invalid, Result};
use crate::localgeom::{range_projector, RANK_TOL};

/// Which response surface to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Nonlinear,
}

impl std::str::FromStr for ModelKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "nonlinear" => Ok(ModelKind::Nonlinear),
            other => Err(invalid(format!("unknown model `{other}`"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::Nonlinear => "nonlinear",
        })
    }
}

/// Rounds half away from zero and converts to `usize`.
pub fn round_half_away(x: f64) -> usize {
    x.round() as usize
}

/// The mixing matrix, coefficient vector and the two size parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSpec {
    pub f: DMatrix<f64>,
    pub w: DVector<f64>,
    /// `round(p / 2)`: odd coordinates up to `q` carry the signal.
    pub q: usize,
    /// `round(3p / 4)`: size of the Toeplitz block of `F`.
    pub d_design: usize,
}

impl GroundTruthSpec {
    pub fn new(p: usize) -> Result<Self> {
        let f = build_f(p)?;
        let q = round_half_away(p as f64 / 2.0);
        let w = DVector::from_fn(p, |i, _| if (i + 1) % 2 == 1 && i < q { 1.0 } else { 0.0 });
        Ok(Self {
            f,
            w,
            q,
            d_design: round_half_away(0.75 * p as f64),
        })
    }

    pub fn p(&self) -> usize {
        self.w.len()
    }

    pub fn exterior_derivative(&self) -> DVector<f64> {
        true_exterior_derivative(&self.f, &self.w)
    }

    /// `1 + sum_{odd i <= q} xi_i`.
    pub fn linear_response(&self, xi: &[f64]) -> f64 {
        1.0 + self.signal_coords().map(|i| xi[i]).sum::<f64>()
    }

    /// `1 + sum_{odd i <= q} sin(xi_i)`.
    pub fn nonlinear_response(&self, xi: &[f64]) -> f64 {
        1.0 + self.signal_coords().map(|i| xi[i].sin()).sum::<f64>()
    }

    fn signal_coords(&self) -> impl Iterator<Item = usize> {
        (0..self.q).step_by(2)
    }
}

/// The `p x p` mixing matrix: a `0.3^{|i-j|}` Toeplitz block on the first
/// `d = round(3p/4)` coordinates, and for each later row `i` two entries
/// `0.3` at columns `q+i-d` and `q+i+1-d` (1-based, `q = round(p/2)`).
pub fn build_f(p: usize) -> Result<DMatrix<f64>> {
    if p < 2 {
        return Err(invalid(format!("p must be at least 2, got {p}")));
    }
    let d = round_half_away(0.75 * p as f64);
    let q = round_half_away(p as f64 / 2.0);
    let mut f = DMatrix::zeros(p, p);
    for i in 1..=d {
        for j in 1..=d {
            f[(i - 1, j - 1)] = 0.3f64.powi((i as i32 - j as i32).abs());
        }
    }
    for i in (d + 1)..=p {
        for j in [q + i - d, q + i + 1 - d] {
            if j <= p {
                f[(i - 1, j - 1)] = 0.3;
            }
        }
    }
    Ok(f)
}

/// Orthogonal projection of `w` onto the column space of `f`.
pub fn true_exterior_derivative(f: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    range_projector(f, RANK_TOL) * w
}

/// Predictor and response noise variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevels {
    pub sigma_nu2: f64,
    pub sigma2: f64,
}

/// A generated data set together with the quantities it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedInstance {
    pub data: DataSet,
    /// Intercept at `x0` followed by the exterior derivative.
    pub beta_true: DVector<f64>,
    /// Point at which `beta_true` applies (the origin).
    pub x0: DVector<f64>,
    pub model: ModelKind,
    pub noise: NoiseLevels,
    pub seed: u64,
}

pub fn generate_linear(
    p: usize,
    n: usize,
    sigma_nu2: f64,
    sigma2: f64,
    seed: u64,
) -> Result<SimulatedInstance> {
    generate(ModelKind::Linear, p, n, sigma_nu2, sigma2, seed)
}

pub fn generate_nonlinear(
    p: usize,
    n: usize,
    sigma_nu2: f64,
    sigma2: f64,
    seed: u64,
) -> Result<SimulatedInstance> {
    generate(ModelKind::Nonlinear, p, n, sigma_nu2, sigma2, seed)
}

/// Draws `n` samples. The random stream is ChaCha8 seeded with `seed`;
/// per row it yields `p` latent normals, then `p` predictor-noise normals,
/// then one response-noise normal, so the noise-free part of an instance
/// does not depend on the noise variances.
pub fn generate(
    model: ModelKind,
    p: usize,
    n: usize,
    sigma_nu2: f64,
    sigma2: f64,
    seed: u64,
) -> Result<SimulatedInstance> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(sigma_nu2 >= 0.0) || !(sigma2 >= 0.0) {
        return Err(invalid("noise variances must be nonnegative"));
    }
    let truth = GroundTruthSpec::new(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd_nu = sigma_nu2.sqrt();
    let sd_y = sigma2.sqrt();

    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut z = DVector::zeros(p);
    let mut xi = vec![0.0; p];
    for i in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let latent = &truth.f * &z;
        for j in 0..p {
            xi[j] = match model {
                ModelKind::Linear => latent[j],
                ModelKind::Nonlinear => latent[j].sin(),
            };
        }
        for j in 0..p {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[(i, j)] = xi[j] + sd_nu * e;
        }
        let eta = match model {
            ModelKind::Linear => truth.linear_response(&xi),
            ModelKind::Nonlinear => truth.nonlinear_response(&xi),
        };
        let e: f64 = StandardNormal.sample(&mut rng);
        y[i] = eta + sd_y * e;
    }

    let mut beta_true = DVector::zeros(p + 1);
    beta_true[0] = 1.0;
    beta_true
        .rows_mut(1, p)
        .copy_from(&truth.exterior_derivative());
    Ok(SimulatedInstance {
        data: DataSet::new(x, y)?,
        beta_true,
        x0: DVector::zeros(p),
        model,
        noise: NoiseLevels { sigma_nu2, sigma2 },
        seed,
    })
}

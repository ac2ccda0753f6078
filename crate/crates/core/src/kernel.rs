//! Radial kernels, localization weights and the default bandwidth rule.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{invalid, Error, Result};

/// A radially symmetric kernel profile. Normalizing constants are omitted;
/// they cancel in every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// `exp(-|u|^2 / 2)`, exponential tails.
    Gaussian,
    /// `(1 - |u|^2)_+`.
    Epanechnikov,
    /// `(1 - |u|^2)_+^2`.
    Biweight,
}

impl Kernel {
    /// Evaluates the profile at squared norm `r2 = |u|^2`.
    pub fn profile(self, r2: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * r2).exp(),
            Kernel::Epanechnikov => (1.0 - r2).max(0.0),
            Kernel::Biweight => {
                let s = (1.0 - r2).max(0.0);
                s * s
            }
        }
    }

    pub fn eval(self, u: &[f64]) -> f64 {
        self.profile(u.iter().map(|v| v * v).sum())
    }

    pub fn has_finite_support(self) -> bool {
        !matches!(self, Kernel::Gaussian)
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Biweight => "biweight",
        })
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Kernel::Gaussian),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            "biweight" => Ok(Kernel::Biweight),
            other => Err(invalid(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Diagonal of the localization matrix `W_{x0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWeights {
    pub w: DVector<f64>,
    pub h: f64,
    pub x0: DVector<f64>,
    /// `sum(w) / max(w)`; zero when every weight vanishes.
    pub effective_n: f64,
}

impl LocalWeights {
    /// Unit weights, used by the global (unlocalized) estimators.
    pub fn uniform(n: usize, x0: DVector<f64>) -> Self {
        Self {
            w: DVector::from_element(n, 1.0),
            h: 1.0,
            x0,
            effective_n: n as f64,
        }
    }

    pub fn sum(&self) -> f64 {
        self.w.sum()
    }
}

/// `w_i = K((X_i - x0) / h)`. The `h^{-p}` factor of the scaled kernel is
/// dropped; it is absorbed by normalizing with the total weight.
pub fn weight_matrix(
    data: &DataSet,
    x0: &DVector<f64>,
    h: f64,
    kernel: Kernel,
) -> Result<LocalWeights> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("bandwidth must be positive, got {h}")));
    }
    if x0.len() != data.p() {
        return Err(invalid(format!(
            "x0 has {} coordinates but the data have {} predictors",
            x0.len(),
            data.p()
        )));
    }
    let inv_h2 = 1.0 / (h * h);
    let w = DVector::from_iterator(
        data.n(),
        data.x().row_iter().map(|row| {
            let r2: f64 = row
                .iter()
                .zip(x0.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            kernel.profile(r2 * inv_h2)
        }),
    );
    let max = w.max();
    let effective_n = if max > 0.0 { w.sum() / max } else { 0.0 };
    Ok(LocalWeights {
        w,
        h,
        x0: x0.clone(),
        effective_n,
    })
}

/// `h = kappa * n^{-1/(d+4)}`.
pub fn default_bandwidth(n: usize, d: usize, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(invalid(format!("kappa must be positive, got {kappa}")));
    }
    if n == 0 {
        return Err(invalid("bandwidth rule needs n >= 1"));
    }
    Ok(kappa * (n as f64).powf(-1.0 / (d as f64 + 4.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn profiles_at_known_points() {
        assert_eq!(Kernel::Gaussian.eval(&[0.0, 0.0]), 1.0);
        assert_eq!(Kernel::Epanechnikov.eval(&[1.5]), 0.0);
        assert!((Kernel::Gaussian.eval(&[0.6, 0.8]) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((Kernel::Gaussian.eval(&[1.0]) - 0.606531).abs() < 1e-6);
        assert_eq!(Kernel::Biweight.eval(&[0.5]), 0.75 * 0.75);
    }

    #[test]
    fn finite_support_is_exactly_zero() {
        for k in [Kernel::Epanechnikov, Kernel::Biweight] {
            for r in [1.0, 1.0 + 1e-12, 2.0, 1e6] {
                assert_eq!(k.eval(&[r]), 0.0);
            }
        }
        assert!(Kernel::Gaussian.eval(&[5.0]) > 0.0);
    }

    #[test]
    fn one_dimensional_weights() {
        let data = DataSet::new(
            DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]),
            DVector::zeros(3),
        )
        .unwrap();
        let lw = weight_matrix(&data, &DVector::zeros(1), 1.0, Kernel::Gaussian).unwrap();
        let expected = [1.0, (-0.5f64).exp(), (-2.0f64).exp()];
        for (a, b) in lw.w.iter().zip(expected) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn huge_bandwidth_gives_uniform_weights() {
        let data = DataSet::new(
            DMatrix::from_fn(5, 2, |i, j| (i * 3 + j) as f64),
            DVector::zeros(5),
        )
        .unwrap();
        let lw = weight_matrix(&data, &DVector::zeros(2), 1e12, Kernel::Gaussian).unwrap();
        assert!(lw.w.iter().all(|&w| (w - 1.0).abs() < 1e-15));
        assert!((lw.effective_n - 5.0).abs() < 1e-12);
    }

    #[test]
    fn point_at_x0_gets_the_largest_weight() {
        let data = DataSet::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.5, 0.5, 3.0, -1.0]),
            DVector::zeros(3),
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![0.5, 0.5]);
        let lw = weight_matrix(&data, &x0, 0.7, Kernel::Biweight).unwrap();
        assert_eq!(lw.w.imax(), 1);
    }

    #[test]
    fn rejects_nonpositive_bandwidth() {
        let data = DataSet::new(DMatrix::zeros(2, 1), DVector::zeros(2)).unwrap();
        assert!(weight_matrix(&data, &DVector::zeros(1), 0.0, Kernel::Gaussian).is_err());
        assert!(weight_matrix(&data, &DVector::zeros(1), -1.0, Kernel::Gaussian).is_err());
    }

    #[test]
    fn bandwidth_rule() {
        assert_eq!(default_bandwidth(1, 3, 2.0).unwrap(), 2.0);
        assert!((default_bandwidth(16, 0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let h = default_bandwidth(1000, 2, 1.5).unwrap();
        assert!((h - 1.5 / 1000f64.powf(1.0 / 6.0)).abs() < 1e-15);
        assert!((h - 0.47434).abs() < 1e-5);
        assert!(default_bandwidth(10, 1, 0.0).is_err());
    }

    #[test]
    fn parses_names() {
        assert_eq!("Biweight".parse::<Kernel>().unwrap(), Kernel::Biweight);
        assert!("box".parse::<Kernel>().is_err());
    }
}

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    SquaredExponential,
    Matern52,
    Exponential,
    RationalQuadratic,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::SquaredExponential,
        KernelKind::Matern52,
        KernelKind::Exponential,
        KernelKind::RationalQuadratic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            KernelKind::SquaredExponential => "Squared Exponential",
            KernelKind::Matern52 => "Matern 5/2",
            KernelKind::Exponential => "Exponential",
            KernelKind::RationalQuadratic => "Rational Quadratic",
        }
    }
}

/// Stationary covariance function of Euclidean distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kernel {
    pub kind: KernelKind,
    /// Signal variance.
    pub variance: f64,
    pub length_scale: f64,
    /// Shape parameter, used by the rational quadratic only.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    1.0
}

impl Kernel {
    pub fn new(kind: KernelKind, variance: f64, length_scale: f64) -> Result<Self> {
        Self::with_alpha(kind, variance, length_scale, 1.0)
    }

    pub fn with_alpha(
        kind: KernelKind,
        variance: f64,
        length_scale: f64,
        alpha: f64,
    ) -> Result<Self> {
        let k = Kernel {
            kind,
            variance,
            length_scale,
            alpha,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.variance) || !ok(self.length_scale) || !ok(self.alpha) {
            return Err(Error::InvalidParams(format!(
                "kernel hyperparameters must be positive: variance {}, length scale {}, alpha {}",
                self.variance, self.length_scale, self.alpha
            )));
        }
        Ok(())
    }

    /// Covariance at distance `r`.
    pub fn of_distance(&self, r: f64) -> f64 {
        let s2 = self.variance;
        let l = self.length_scale;
        match self.kind {
            KernelKind::SquaredExponential => s2 * (-0.5 * r * r / (l * l)).exp(),
            KernelKind::Matern52 => {
                let a = 5f64.sqrt() * r / l;
                s2 * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
            KernelKind::Exponential => s2 * (-r / l).exp(),
            KernelKind::RationalQuadratic => {
                s2 * (1.0 + r * r / (2.0 * self.alpha * l * l)).powf(-self.alpha)
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(self.of_distance(distance(x, y)))
    }

    /// Gram matrix of a point set (rows must share one dimension).
    pub fn gram(&self, xs: &[Vec<f64>]) -> DMatrix<f64> {
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.variance;
            for j in 0..i {
                let v = self.of_distance(distance(&xs[i], &xs[j]));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

pub(crate) fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

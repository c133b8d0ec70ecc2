//! Epsilon-insensitive support vector regression with a Gaussian kernel,
//! trained by SMO with second-order working set selection.

use serde::{Deserialize, Serialize};

use super::kernel::distance;
use super::scaling::Standardizer;
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

/// Kernel scale presets. The scale divides the inputs before the Gaussian
/// kernel `exp(-|u - v|^2)` is applied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvrScale {
    /// `sqrt(d)`
    Medium,
    /// `4 sqrt(d)`
    Coarse,
    Fixed(f64),
}

impl SvrScale {
    pub fn value(self, dim: usize) -> f64 {
        let d = (dim as f64).sqrt();
        match self {
            SvrScale::Medium => d,
            SvrScale::Coarse => 4.0 * d,
            SvrScale::Fixed(s) => s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvrParams {
    pub scale: SvrScale,
    /// Box constraint; defaults to IQR(y)/1.349.
    #[serde(default)]
    pub c: Option<f64>,
    /// Tube half-width; defaults to IQR(y)/13.49.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Z-score the features with training statistics.
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Stopping tolerance on the maximal KKT violation.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn yes() -> bool {
    true
}

fn default_tol() -> f64 {
    1e-4
}

impl SvrParams {
    pub fn preset(scale: SvrScale) -> Self {
        SvrParams {
            scale,
            c: None,
            epsilon: None,
            standardize: true,
            tol: default_tol(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SvrModel {
    scaler: Option<Standardizer>,
    scale: f64,
    /// Support vectors, already standardized and divided by the scale.
    support: Vec<Vec<f64>>,
    coef: Vec<f64>,
    bias: f64,
    dim: usize,
}

fn iqr(y: &[f64]) -> f64 {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (s.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
    };
    q(0.75) - q(0.25)
}

fn rbf(u: &[f64], v: &[f64]) -> f64 {
    let r = distance(u, v);
    (-r * r).exp()
}

impl SvrModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &SvrParams) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "SVR needs at least 2 rows, got {}",
                x.len()
            )));
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        let dim = x[0].len();
        let scale = params.scale.value(dim);
        let spread = iqr(y);
        let c = params
            .c
            .unwrap_or(if spread > 0.0 { spread / 1.349 } else { 1.0 });
        let eps = params
            .epsilon
            .unwrap_or(if spread > 0.0 { spread / 13.49 } else { 0.1 });
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(scale) || !ok(c) || !(eps >= 0.0 && eps.is_finite()) || !ok(params.tol) {
            return Err(Error::InvalidParams(format!(
                "SVR needs positive scale, C and tolerance and epsilon >= 0 (scale {scale}, C {c}, epsilon {eps})"
            )));
        }
        let scaler = if params.standardize {
            Some(Standardizer::fit(x)?)
        } else {
            None
        };
        let mut u = Vec::with_capacity(x.len());
        for row in x {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            let z = match &scaler {
                Some(s) => s.apply(row),
                None => row.clone(),
            };
            u.push(z.iter().map(|v| v / scale).collect::<Vec<f64>>());
        }

        if y.iter().all(|v| *v == y[0]) {
            return Ok(SvrModel {
                scaler,
                scale,
                support: Vec::new(),
                coef: Vec::new(),
                bias: y[0],
                dim,
            });
        }

        let (beta, bias) = smo(&u, y, c, eps, params.tol);
        let mut support = Vec::new();
        let mut coef = Vec::new();
        for (ui, b) in u.into_iter().zip(beta) {
            if b != 0.0 {
                support.push(ui);
                coef.push(b);
            }
        }
        Ok(SvrModel {
            scaler,
            scale,
            support,
            coef,
            bias,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_support(&self) -> usize {
        self.support.len()
    }

    pub fn predict(&self, q: &[f64]) -> Result<f64> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.len(),
            });
        }
        let z = match &self.scaler {
            Some(s) => s.apply(q),
            None => q.to_vec(),
        };
        let u: Vec<f64> = z.iter().map(|v| v / self.scale).collect();
        Ok(self
            .support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * rbf(s, &u))
            .sum::<f64>()
            + self.bias)
    }
}

/// Solves the SVR dual over `2n` variables: the first `n` carry sign +1 and
/// linear term `eps - y`, the second `n` carry sign -1 and `eps + y`.
/// Returns per-row coefficients `a_i - a_{i+n}` and the bias.
fn smo(u: &[Vec<f64>], target: &[f64], c: f64, eps: f64, tol: f64) -> (Vec<f64>, f64) {
    let n = u.len();
    let l = 2 * n;
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = rbf(&u[i], &u[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let q = |i: usize, j: usize| sign(i) * sign(j) * k[(i % n) * n + (j % n)];

    let mut alpha = vec![0.0; l];
    let mut grad: Vec<f64> = (0..l)
        .map(|t| {
            if t < n {
                eps - target[t]
            } else {
                eps + target[t - n]
            }
        })
        .collect();
    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;

    let max_iter = (100 * l).max(10_000_000);
    for _ in 0..max_iter {
        // first index: maximal violation
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..l {
            let yt = sign(t);
            if yt > 0.0 {
                if !is_upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i = t;
                }
            } else if !is_lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            break;
        }
        // second index: largest guaranteed objective decrease
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        let yi = sign(i);
        for t in 0..l {
            let qit = q(i, t);
            if sign(t) > 0.0 {
                if !is_lower(alpha[t]) {
                    let diff = gmax + grad[t];
                    gmax2 = gmax2.max(grad[t]);
                    if diff > 0.0 {
                        let quad = (2.0 - 2.0 * yi * qit).max(TAU);
                        let obj = -diff * diff / quad;
                        if obj <= best {
                            best = obj;
                            j = t;
                        }
                    }
                }
            } else if !is_upper(alpha[t]) {
                let diff = gmax - grad[t];
                gmax2 = gmax2.max(-grad[t]);
                if diff > 0.0 {
                    let quad = (2.0 + 2.0 * yi * qit).max(TAU);
                    let obj = -diff * diff / quad;
                    if obj <= best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if gmax + gmax2 < tol || j == usize::MAX {
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if sign(i) != sign(j) {
            let quad = (2.0 + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (2.0 - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(i, t) * di + q(j, t) * dj;
        }
    }

    // bias from free variables, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..l {
        let yg = sign(t) * grad[t];
        if is_upper(alpha[t]) {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(alpha[t]) {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    };
    let beta = (0..n).map(|t| alpha[t] - alpha[t + n]).collect();
    (beta, -rho)
}

//! Zero-mean Gaussian process regression.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{distance, Kernel, KernelKind};
use crate::error::{Error, Result};

/// Diagonal jitter always added to `K + noise I`.
pub const BASE_JITTER: f64 = 1e-10;
const MAX_JITTER: f64 = 1e-4;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GprModel {
    x: Vec<Vec<f64>>,
    kernel: Kernel,
    noise_var: f64,
    jitter: f64,
    y_mean: f64,
    y_scale: f64,
    /// Lower Cholesky factor of `K + (noise + jitter) I`.
    chol: DMatrix<f64>,
    /// `(K + (noise + jitter) I)^-1 y`, in scaled target units.
    weights: DVector<f64>,
}

fn check_rows(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let d = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: r.len(),
        });
    }
    Ok(d)
}

/// Target centering and scaling. With `standardize` off the targets are used
/// as given.
fn target_scaling(y: &[f64], standardize: bool) -> (f64, f64) {
    if !standardize {
        return (0.0, 1.0);
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Cholesky of `K + (noise + jitter) I`, escalating the jitter tenfold on
/// failure.
fn factor(k: &DMatrix<f64>, noise_var: f64) -> Result<(DMatrix<f64>, f64)> {
    let mut jitter = BASE_JITTER;
    loop {
        let mut a = k.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += noise_var + jitter;
        }
        if let Some(c) = a.cholesky() {
            return Ok((c.unpack(), jitter));
        }
        jitter *= 10.0;
        if jitter > MAX_JITTER {
            return Err(Error::IllConditioned(format!(
                "kernel matrix not positive definite with jitter up to {MAX_JITTER:e}"
            )));
        }
    }
}

fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(b)
        .expect("Cholesky factor has a positive diagonal")
}

impl GprModel {
    /// Exact GP fit with fixed hyperparameters.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        kernel: Kernel,
        noise_var: f64,
        standardize: bool,
    ) -> Result<Self> {
        check_rows(x, y)?;
        kernel.validate()?;
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "noise variance {noise_var} must be >= 0"
            )));
        }
        let (y_mean, y_scale) = target_scaling(y, standardize);
        let yt = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_scale));
        let (chol, jitter) = factor(&kernel.gram(x), noise_var)?;
        let weights = chol
            .transpose()
            .solve_upper_triangular(&solve_lower(&chol, &yt))
            .expect("triangular solve");
        Ok(GprModel {
            x: x.to_vec(),
            kernel,
            noise_var,
            jitter,
            y_mean,
            y_scale,
            chol,
            weights,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Diagonal jitter that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    /// Posterior mean and latent variance at `q`.
    pub fn predict(&self, q: &[f64]) -> Result<(f64, f64)> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: q.len(),
            });
        }
        let ks = DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .map(|xi| self.kernel.of_distance(distance(xi, q))),
        );
        let mean = self.y_mean + self.y_scale * ks.dot(&self.weights);
        let v = solve_lower(&self.chol, &ks);
        let var = (self.kernel.variance - v.norm_squared()).max(0.0) * self.y_scale * self.y_scale;
        Ok((mean, var))
    }
}

/// Negative log marginal likelihood of (already scaled) targets.
pub fn neg_log_marginal_likelihood(
    x: &[Vec<f64>],
    y: &DVector<f64>,
    kernel: &Kernel,
    noise_var: f64,
) -> Result<f64> {
    let (l, _) = factor(&kernel.gram(x), noise_var)?;
    let z = solve_lower(&l, y);
    let log_det: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
    Ok(0.5 * z.norm_squared() + log_det + 0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Multi-start Nelder–Mead settings for maximizing the marginal likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperSearch {
    pub starts: usize,
    pub max_iters: u64,
    /// Rows used for the search; larger sets are subsampled.
    pub max_rows: usize,
    pub seed: u64,
}

impl Default for HyperSearch {
    fn default() -> Self {
        HyperSearch {
            starts: 5,
            max_iters: 200,
            max_rows: 200,
            seed: 0,
        }
    }
}

/// Fitted hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GprHyper {
    pub kernel: Kernel,
    pub noise_var: f64,
}

// log-space bounds: variance, length scale, noise variance, alpha
const LOG_BOUNDS: [(f64, f64); 4] = [(-4.6, 4.6), (-6.9, 4.6), (-13.8, 0.0), (-4.6, 6.9)];

struct Nll<'a> {
    x: &'a [Vec<f64>],
    y: DVector<f64>,
    kind: KernelKind,
}

impl Nll<'_> {
    fn unpack(&self, p: &[f64]) -> (Kernel, f64, f64) {
        let mut penalty = 0.0;
        let mut v = [0.0; 4];
        for (i, (lo, hi)) in LOG_BOUNDS.iter().enumerate().take(p.len()) {
            let c = p[i].clamp(*lo, *hi);
            penalty += (p[i] - c) * (p[i] - c);
            v[i] = c.exp();
        }
        let alpha = if p.len() > 3 { v[3] } else { 1.0 };
        let kernel = Kernel {
            kind: self.kind,
            variance: v[0],
            length_scale: v[1],
            alpha,
        };
        (kernel, v[2], penalty)
    }
}

impl CostFunction for Nll<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let (kernel, noise, penalty) = self.unpack(p);
        let nll = neg_log_marginal_likelihood(self.x, &self.y, &kernel, noise).unwrap_or(1e30);
        Ok(nll + 1e3 * penalty)
    }
}

fn median_distance(x: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = Vec::new();
    for i in 0..x.len() {
        for j in 0..i {
            d.push(distance(&x[i], &x[j]));
        }
    }
    d.retain(|v| *v > 0.0);
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Maximizes the log marginal likelihood over (variance, length scale,
/// noise variance, and alpha for the rational quadratic) in log space.
pub fn optimize_hyper(
    x: &[Vec<f64>],
    y: &[f64],
    kind: KernelKind,
    standardize: bool,
    search: &HyperSearch,
) -> Result<GprHyper> {
    check_rows(x, y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let mut idx: Vec<usize> = (0..x.len()).collect();
    if idx.len() > search.max_rows {
        idx.shuffle(&mut rng);
        idx.truncate(search.max_rows);
        idx.sort_unstable();
    }
    let xs: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let (m, s) = target_scaling(&ys, standardize);
    let yv = DVector::from_iterator(ys.len(), ys.iter().map(|v| (v - m) / s));

    let dim = if kind == KernelKind::RationalQuadratic {
        4
    } else {
        3
    };
    let var0 = if standardize {
        1.0
    } else {
        (yv.norm_squared() / yv.len() as f64).max(1e-2)
    };
    let heuristic = [var0.ln(), median_distance(&xs).ln(), (1e-2f64).ln(), 0.0];
    let mut starts = vec![heuristic[..dim].to_vec()];
    for _ in 1..search.starts.max(1) {
        starts.push(
            LOG_BOUNDS[..dim]
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect(),
        );
    }

    let results: Vec<(f64, Vec<f64>)> = starts
        .into_par_iter()
        .map(|p0| {
            let problem = Nll {
                x: &xs,
                y: yv.clone(),
                kind,
            };
            let mut simplex = vec![p0.clone()];
            for i in 0..dim {
                let mut v = p0.clone();
                v[i] += 1.0;
                simplex.push(v);
            }
            let solver = NelderMead::new(simplex)
                .with_sd_tolerance(1e-6)
                .map_err(|e| Error::InvalidParams(e.to_string()))?;
            let res = Executor::new(problem, solver)
                .configure(|st| st.max_iters(search.max_iters))
                .run()
                .map_err(|e| Error::IllConditioned(e.to_string()))?;
            let st = res.state();
            let best = st.get_best_param().cloned().unwrap_or(p0);
            Ok((st.get_best_cost(), best))
        })
        .collect::<Result<_>>()?;

    let (_, best) = results
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one start");
    let problem = Nll {
        x: &xs,
        y: yv,
        kind,
    };
    let (kernel, noise_var, _) = problem.unpack(&best);
    Ok(GprHyper { kernel, noise_var })
}

//! Levenberg–Marquardt root finder for small square systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) struct LmSettings {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub fd_step: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct LmOutcome {
    pub x: DVector<f64>,
    pub residual: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Drives `f(x)` towards zero using a forward-difference Jacobian. `norm`
/// measures convergence (it may weight components differently from the
/// least-squares objective `|f|^2`).
pub(crate) fn solve<F, M>(
    x0: DVector<f64>,
    f: F,
    norm: M,
    tol: f64,
    settings: LmSettings,
) -> Result<LmOutcome>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    M: Fn(&DVector<f64>) -> f64,
{
    let jac = |x: &DVector<f64>, r: &DVector<f64>| fd_jacobian(x, r, &f, settings.fd_step);
    solve_with_jacobian(x0, &f, jac, norm, tol, settings)
}

/// As [`solve`] with a caller-supplied Jacobian `jac(x, f(x))`.
pub(crate) fn solve_with_jacobian<F, J, M>(
    x0: DVector<f64>,
    f: F,
    jac: J,
    norm: M,
    tol: f64,
    settings: LmSettings,
) -> Result<LmOutcome>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    J: Fn(&DVector<f64>, &DVector<f64>) -> Result<DMatrix<f64>>,
    M: Fn(&DVector<f64>) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut r = f(&x)?;
    let mut cost = r.norm_squared();
    let mut lambda = settings.initial_damping;
    let mut iterations = 0;

    while norm(&r) >= tol {
        if iterations >= settings.max_iterations {
            return Ok(LmOutcome {
                x,
                residual: r,
                iterations,
                converged: false,
            });
        }
        iterations += 1;

        let jac = jac(&x, &r)?;

        // full Newton step first; Marquardt damping crushes the step along
        // poorly conditioned directions even when the model is accurate
        if let Some(step) = jac.clone().lu().solve(&(-&r)) {
            let trial = &x + step;
            match f(&trial) {
                Ok(r_trial) if r_trial.norm_squared() < cost => {
                    x = trial;
                    r = r_trial;
                    cost = r.norm_squared();
                    continue;
                }
                Ok(_) | Err(Error::Divergence { .. } | Error::DegenerateRotation { .. }) => {}
                Err(e) => return Err(e),
            }
        }

        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut accepted = false;
        // inner loop: raise the damping until the step reduces the cost
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &x + step;
            match f(&trial) {
                Ok(r_trial) if r_trial.norm_squared() < cost => {
                    x = trial;
                    r = r_trial;
                    cost = r.norm_squared();
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    break;
                }
                Ok(_) | Err(Error::Divergence { .. } | Error::DegenerateRotation { .. }) => {
                    lambda *= 10.0
                }
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            return Ok(LmOutcome {
                x,
                residual: r,
                iterations,
                converged: false,
            });
        }
    }

    Ok(LmOutcome {
        x,
        residual: r,
        iterations,
        converged: true,
    })
}

pub(crate) fn fd_jacobian<F>(
    x: &DVector<f64>,
    fx: &DVector<f64>,
    f: &F,
    rel_step: f64,
) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(fx.len(), n);
    for j in 0..n {
        let h = rel_step * x[j].abs().max(1.0);
        let mut xp = x.clone();
        xp[j] += h;
        let col = (f(&xp)? - fx) / h;
        jac.set_column(j, &col);
    }
    Ok(jac)
}

//! Centralized reference minimizer of `f = (1/m) Σ f_i`.

use super::ProblemInstance;
use crate::{Error, Mat, Result, Vector};

/// Exact minimizer of a pure ridge instance via the averaged normal equations
/// `Σ_i (2/n_i · A_iᵀA_i + γ_i I) x = Σ_i 2/n_i · A_iᵀ b_i`.
///
/// Returns `None` if any objective is not a ridge loss.
pub fn ridge_exact_minimizer(problem: &ProblemInstance) -> Option<Vector> {
    let ridge = problem.as_ridge()?;
    let d = problem.d();
    let mut h = Mat::zeros(d, d);
    let mut rhs = Vector::zeros(d);
    for r in ridge {
        let scale = 2.0 / r.n() as f64;
        h += r.a().tr_mul(r.a()) * scale;
        for j in 0..d {
            h[(j, j)] += r.gamma();
        }
        rhs += r.a().tr_mul(r.b()) * scale;
    }
    // γ_i > 0 makes h positive definite
    h.cholesky().map(|c| c.solve(&rhs))
}

/// Accelerated gradient descent with a secant curvature estimate and
/// gradient-based momentum restart, stopped when `‖∇f(x)‖ ≤ tol`.
pub fn centralized_minimize(problem: &ProblemInstance, tol: f64, max_iter: usize) -> Result<Vector> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let grad = |x: &Vector| problem.average_gradient(x);
    let mut x = Vector::zeros(problem.d());
    let gx = grad(&x)?;
    let mut best = (gx.norm(), x.clone());
    if best.0 <= tol {
        return Ok(x);
    }

    // Initial curvature from a short probe along the gradient.
    let probe = &x - &gx * (1e-3 / gx.norm());
    let mut lip = ((grad(&probe)? - &gx).norm() / (&probe - &x).norm()).max(1e-8);

    let mut y = x.clone();
    let mut gy = gx.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iter {
        let (x_new, g_new) = loop {
            let cand = &y - &gy / lip;
            let g_cand = grad(&cand)?;
            let step = (&cand - &y).norm();
            if step == 0.0 {
                break (cand, g_cand);
            }
            let curvature = (&g_cand - &gy).norm() / step;
            if !curvature.is_finite() {
                return Err(Error::Numeric("non-finite gradient in reference solve".into()));
            }
            if curvature <= lip {
                break (cand, g_cand);
            }
            lip = (2.0 * lip).max(curvature);
        };

        let g_norm = g_new.norm();
        if g_norm < best.0 {
            best = (g_norm, x_new.clone());
        }
        if g_norm <= tol {
            return Ok(x_new);
        }

        if gy.dot(&(&x_new - &x)) > 0.0 {
            t = 1.0;
            y = x_new.clone();
            gy = g_new.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &x_new + (&x_new - &x) * ((t - 1.0) / t_next);
            t = t_next;
            gy = grad(&y)?;
        }
        x = x_new;
        lip *= 0.9;
    }
    Err(Error::NotConverged { iterations: max_iter, grad_norm: best.0, best: best.1 })
}

/// Exact solve for ridge instances, [`centralized_minimize`] otherwise.
pub fn reference_minimizer(problem: &ProblemInstance, tol: f64, max_iter: usize) -> Result<Vector> {
    match ridge_exact_minimizer(problem) {
        Some(x) => Ok(x),
        None => centralized_minimize(problem, tol, max_iter),
    }
}

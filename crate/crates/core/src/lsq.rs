//! Damped Gauss-Newton least squares for small parameter vectors.
//!
//! Each iteration builds a forward-difference Jacobian, solves the
//! Marquardt-scaled normal equations and accepts the step only if it lowers
//! the sum of squares. Damping grows tenfold on rejection and shrinks
//! threefold on acceptance. Bounded parameters are projected back into their
//! box after every step.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-10;

const INITIAL_DAMPING: f64 = 1e-3;
const MAX_DAMPING: f64 = 1e20;

pub struct FitProblem<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    pub residual_fn: F,
    pub initial_params: Vec<f64>,
    /// Optional `[lo, hi]` box per parameter.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub max_iters: usize,
    /// Convergence threshold on the Euclidean norm of the parameter step.
    pub tol: f64,
}

impl<F> FitProblem<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(residual_fn: F, initial_params: Vec<f64>) -> Self {
        Self {
            residual_fn,
            initial_params,
            bounds: None,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn project(&self, p: &mut [f64]) {
        if let Some(bounds) = &self.bounds {
            for (v, &(lo, hi)) in p.iter_mut().zip(bounds) {
                *v = v.clamp(lo, hi);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual norm at the start and after every accepted step.
    pub residual_history: Vec<f64>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn all_finite(r: &[f64]) -> bool {
    r.iter().all(|v| v.is_finite())
}

fn jacobian<F>(problem: &FitProblem<F>, p: &[f64], r: &[f64]) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    (0..p.len())
        .map(|j| {
            let mut h = (1e-7 * p[j].abs()).max(1e-7);
            if let Some(bounds) = &problem.bounds {
                if p[j] + h > bounds[j].1 {
                    h = -h;
                }
            }
            let mut q = p.to_vec();
            q[j] += h;
            let rq = (problem.residual_fn)(&q);
            rq.iter().zip(r).map(|(a, b)| (a - b) / h).collect()
        })
        .collect()
}

/// Runs the damped iteration.
///
/// Hitting the iteration cap is not an error: the result comes back with
/// `converged == false`. A non-finite residual at the starting point is an
/// [`Error::Evaluation`]; non-finite trial points are treated as rejected
/// steps.
pub fn solve<F>(problem: &FitProblem<F>) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = problem.initial_params.len();
    if n == 0 {
        return domain("fit problem has no parameters");
    }
    if let Some(bounds) = &problem.bounds {
        if bounds.len() != n {
            return domain(format!("{} bounds for {n} parameters", bounds.len()));
        }
        for (i, (&v, &(lo, hi))) in problem.initial_params.iter().zip(bounds).enumerate() {
            if !(lo <= v && v <= hi) {
                return domain(format!("initial parameter {i} = {v} outside [{lo}, {hi}]"));
            }
        }
    }
    let mut p = problem.initial_params.clone();
    let mut r = (problem.residual_fn)(&p);
    if r.len() < n {
        return domain(format!("{} residuals for {n} parameters", r.len()));
    }
    if !all_finite(&r) {
        return Err(Error::Evaluation(format!(
            "non-finite residual at initial parameters {p:?}"
        )));
    }
    let mut cost = sum_sq(&r);
    let mut history = vec![cost.sqrt()];
    let mut damping = INITIAL_DAMPING;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < problem.max_iters && !converged {
        iterations += 1;
        let jac = jacobian(problem, &p, &r);
        let mut jtj = DMatrix::<f64>::zeros(n, n);
        let mut jtr = DVector::<f64>::zeros(n);
        for a in 0..n {
            jtr[a] = jac[a].iter().zip(&r).map(|(x, y)| x * y).sum();
            for b in a..n {
                let v: f64 = jac[a].iter().zip(&jac[b]).map(|(x, y)| x * y).sum();
                jtj[(a, b)] = v;
                jtj[(b, a)] = v;
            }
        }

        loop {
            let mut lhs = jtj.clone();
            for d in 0..n {
                let scale = if jtj[(d, d)] > 0.0 { jtj[(d, d)] } else { 1.0 };
                lhs[(d, d)] += damping * scale;
            }
            let Some(chol) = lhs.cholesky() else {
                damping *= 10.0;
                if damping > MAX_DAMPING {
                    break;
                }
                continue;
            };
            let delta = chol.solve(&(-&jtr));
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            problem.project(&mut trial);
            let step_norm = trial
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let r_trial = (problem.residual_fn)(&trial);
            let cost_trial = if all_finite(&r_trial) {
                sum_sq(&r_trial)
            } else {
                f64::INFINITY
            };
            if cost_trial <= cost {
                p = trial;
                r = r_trial;
                cost = cost_trial;
                history.push(cost.sqrt());
                damping = (damping / 3.0).max(1e-15);
                converged = step_norm <= problem.tol;
                break;
            }
            if step_norm <= problem.tol {
                // no representable improvement left
                converged = true;
                break;
            }
            damping *= 10.0;
            if damping > MAX_DAMPING {
                break;
            }
        }
        if damping > MAX_DAMPING {
            break;
        }
    }

    Ok(FitResult {
        params: p,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
        residual_history: history,
    })
}

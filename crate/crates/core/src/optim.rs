//! Damped Newton ascent for smooth concave log-likelihoods, with a
//! backtracking gradient-ascent fallback.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait ConcaveObjective {
    fn dim(&self) -> usize;
    fn value(&self, beta: &[f64]) -> f64;
    fn gradient(&self, beta: &[f64]) -> Vec<f64>;
    /// Hessian of `value`; negative semi-definite for concave objectives.
    fn hessian(&self, beta: &[f64]) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Stop once the gradient max-norm is at or below this.
    pub tolerance: f64,
    /// A coefficient beyond this magnitude signals a divergent MLE.
    pub max_abs_coefficient: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iterations: 500,
            tolerance: 1e-8,
            max_abs_coefficient: 30.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Objective value at the start and after every accepted step.
    pub trace: Vec<f64>,
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Slack for accepting a step whose gain is lost in rounding.
fn rounding_slack(value: f64) -> f64 {
    1e-12 * value.abs().max(1.0)
}

fn newton_direction(hessian: DMatrix<f64>, grad: &[f64]) -> Option<DVector<f64>> {
    let d = grad.len();
    let neg = -hessian;
    let scale = (0..d).map(|i| neg[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let g = DVector::from_column_slice(grad);
    // Plain Newton first; Levenberg-style damping only if the factorization fails.
    let mut damping = 0.0;
    for _ in 0..30 {
        let mut m = neg.clone();
        for i in 0..d {
            m[(i, i)] += damping;
        }
        if let Some(chol) = m.cholesky() {
            let dir = chol.solve(&g);
            if dir.iter().all(|x| x.is_finite()) {
                return Some(dir);
            }
        }
        damping = if damping == 0.0 { 1e-10 * scale } else { damping * 10.0 };
    }
    None
}

fn line_search<O: ConcaveObjective>(
    obj: &O,
    beta: &[f64],
    dir: &[f64],
    current: f64,
    initial_step: f64,
) -> Option<(Vec<f64>, f64)> {
    let mut step = initial_step;
    for _ in 0..60 {
        let cand: Vec<f64> = beta.iter().zip(dir).map(|(b, d)| b + step * d).collect();
        let v = obj.value(&cand);
        if v.is_finite() && v >= current - rounding_slack(current) {
            return Some((cand, v));
        }
        step *= 0.5;
    }
    None
}

pub fn maximize<O: ConcaveObjective>(
    obj: &O,
    start: Vec<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    let mut beta = start;
    let mut value = obj.value(&beta);
    let mut trace = vec![value];
    let mut grad = obj.gradient(&beta);
    let mut grad_norm = max_norm(&grad);
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        if grad_norm <= opts.tolerance {
            return Ok(NewtonOutcome {
                beta,
                iterations,
                grad_norm,
                trace,
            });
        }
        iterations += 1;
        let newton = newton_direction(obj.hessian(&beta), &grad)
            .and_then(|dir| line_search(obj, &beta, dir.as_slice(), value, 1.0));
        let accepted = newton.or_else(|| {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            line_search(obj, &beta, &grad, value, 1.0 / norm.max(1e-300))
        });
        let Some((next, next_value)) = accepted else {
            break;
        };
        beta = next;
        value = next_value;
        trace.push(value);
        if let Some((index, &v)) = beta
            .iter()
            .enumerate()
            .find(|(_, b)| b.abs() > opts.max_abs_coefficient)
        {
            return Err(Error::QuasiSeparation { index, value: v });
        }
        grad = obj.gradient(&beta);
        grad_norm = max_norm(&grad);
    }
    if grad_norm <= opts.tolerance {
        return Ok(NewtonOutcome {
            beta,
            iterations,
            grad_norm,
            trace,
        });
    }
    Err(Error::NoConvergence {
        iterations,
        grad_norm,
    })
}

/// Columns (other than the leading intercept) whose coefficient is not
/// identified or diverges on its own: constant columns, and columns on which
/// every row of some `group` sits at the column's minimum or maximum.
pub fn degenerate_columns(rows: &[Vec<f64>], groups: &[&[bool]]) -> Vec<bool> {
    let width = rows.first().map_or(0, Vec::len);
    let mut out = vec![false; width];
    for (j, flag) in out.iter_mut().enumerate().skip(1) {
        let (lo, hi) = rows
            .iter()
            .map(|r| r[j])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo == hi {
            *flag = true;
            continue;
        }
        for group in groups {
            let mut members = rows.iter().zip(group.iter()).filter(|(_, &g)| g).map(|(r, _)| r[j]);
            let Some(first) = members.next() else { continue };
            let (mut at_lo, mut at_hi) = (first == lo, first == hi);
            for v in members {
                at_lo &= v == lo;
                at_hi &= v == hi;
            }
            if at_lo || at_hi {
                *flag = true;
            }
        }
    }
    out
}

/// Central finite-difference gradient, for checks.
pub fn numeric_gradient<O: ConcaveObjective>(obj: &O, beta: &[f64], h: f64) -> Vec<f64> {
    (0..beta.len())
        .map(|j| {
            let mut up = beta.to_vec();
            let mut down = beta.to_vec();
            up[j] += h;
            down[j] -= h;
            (obj.value(&up) - obj.value(&down)) / (2.0 * h)
        })
        .collect()
}

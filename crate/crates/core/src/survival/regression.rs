//! Right-censored exponential regression with a log-linear hazard.
//!
//! For subject `i` with design row `x_i` (leading intercept), exposure
//! `τ_i` and event flag `δ_i`, the log-likelihood is
//! `Σ δ_i·(β·x_i) − exp(β·x_i)·τ_i`. It is concave in β.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{self, ConcaveObjective, NewtonOptions};

#[derive(Debug, Clone)]
pub struct CensoredExponential<'a> {
    rows: &'a [Vec<f64>],
    exposure: &'a [f64],
    events: &'a [bool],
}

impl<'a> CensoredExponential<'a> {
    pub fn new(rows: &'a [Vec<f64>], exposure: &'a [f64], events: &'a [bool]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("no subjects".into()));
        }
        if rows.len() != exposure.len() || rows.len() != events.len() {
            return Err(Error::Dimension(format!(
                "{} rows, {} exposures, {} event flags",
                rows.len(),
                exposure.len(),
                events.len()
            )));
        }
        let width = rows[0].len();
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Dimension("design rows must share a non-zero width".into()));
        }
        if let Some(t) = exposure.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::Range(format!("exposure must be positive, got {t}")));
        }
        Ok(CensoredExponential {
            rows,
            exposure,
            events,
        })
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|e| **e).count()
    }

    pub fn total_exposure(&self) -> f64 {
        self.exposure.iter().sum()
    }

    fn linear(&self, beta: &[f64], i: usize) -> f64 {
        self.rows[i].iter().zip(beta).map(|(x, b)| x * b).sum()
    }
}

impl ConcaveObjective for CensoredExponential<'_> {
    fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        (0..self.rows.len())
            .map(|i| {
                let lp = self.linear(beta, i);
                let ev = if self.events[i] { lp } else { 0.0 };
                ev - lp.exp() * self.exposure[i]
            })
            .sum()
    }

    fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for (i, row) in self.rows.iter().enumerate() {
            let resid = f64::from(u8::from(self.events[i])) - self.linear(beta, i).exp() * self.exposure[i];
            for (gj, x) in g.iter_mut().zip(row) {
                *gj += resid * x;
            }
        }
        g
    }

    fn hessian(&self, beta: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for (i, row) in self.rows.iter().enumerate() {
            let w = self.linear(beta, i).exp() * self.exposure[i];
            for a in 0..d {
                let wa = w * row[a];
                for b in a..d {
                    h[(a, b)] -= wa * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        h
    }
}

/// Coefficients of one window's regression plus convergence metadata.
/// Serializes as `{"beta": [...], "iterations": k, "grad_norm": g}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Maximum-likelihood fit. The first design column must be the intercept;
/// the search starts from the closed-form intercept-only solution
/// `ln(events / exposure)`.
pub fn fit_exponential_regression(
    rows: &[Vec<f64>],
    exposure: &[f64],
    events: &[bool],
    opts: &NewtonOptions,
) -> Result<WindowFit> {
    let model = CensoredExponential::new(rows, exposure, events)?;
    let n_events = model.n_events();
    if n_events == 0 {
        return Err(Error::NoEvents);
    }
    let mut start = vec![0.0; model.dim()];
    start[0] = (n_events as f64 / model.total_exposure()).ln();
    let out = optim::maximize(&model, start, opts)?;
    Ok(WindowFit {
        beta: out.beta,
        iterations: out.iterations,
        grad_norm: out.grad_norm,
    })
}

/// Fits after pinning degenerate columns at zero (see
/// [`optim::degenerate_columns`]); pinned coefficients come back as 0.
pub fn fit_exponential_screened(
    rows: &[Vec<f64>],
    exposure: &[f64],
    events: &[bool],
    opts: &NewtonOptions,
) -> Result<WindowFit> {
    let pinned = optim::degenerate_columns(rows, &[events]);
    let keep: Vec<usize> = (0..pinned.len()).filter(|&j| !pinned[j]).collect();
    let reduced: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| keep.iter().map(|&j| r[j]).collect())
        .collect();
    let fit = fit_exponential_regression(&reduced, exposure, events, opts)?;
    let mut beta = vec![0.0; pinned.len()];
    for (&j, b) in keep.iter().zip(&fit.beta) {
        beta[j] = *b;
    }
    Ok(WindowFit { beta, ..fit })
}
